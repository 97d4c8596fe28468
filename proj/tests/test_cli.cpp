#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("FEDTRAJ_BIN");
  REQUIRE(b != nullptr);
  return b;
}

struct run_result {
  int exit_code;
  std::string output;  // stdout + stderr
};

run_result run(const std::string& args) {
  const auto log = fs::temp_directory_path() / "fedtraj_cli_out.txt";
  const std::string cmd = bin() + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(log);
  std::string output((std::istreambuf_iterator<char>(in)), {});
  return {WEXITSTATUS(rc), output};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

fs::path write_config(const fs::path& dir, int rounds = 1, int epochs = 1) {
  fs::create_directories(dir);
  const auto path = dir / "config.json";
  std::ofstream out(path);
  out << R"({
  "seed": 5,
  "out_dir": ")" << (dir / "out").string() << R"(",
  "data": {"grid_rows": 4, "grid_cols": 4, "spacing_m": 100.0,
           "trajectories": 24, "traj_points": 10, "epsilon_s": 15.0,
           "keep_ratio": 0.4, "partition": "iid", "cell_m": 100.0},
  "model": {"hidden_dim": 8, "seg_embed_dim": 4, "dropout": 0.0,
            "gamma": 50000.0, "mask_radius_m": 1200.0},
  "fed": {"rounds": )" << rounds << R"(, "clients": 2, "fraction": 1.0,
          "local_epochs": )" << epochs << R"(, "lambda0": 1.0, "l_t": 0.4,
          "teacher_cycles": 1, "teacher_fraction": 0.5, "batch_size": 2,
          "learning_rate": 0.05}
})";
  return path;
}

}  // namespace

TEST_CASE("gen-data is idempotent per seed") {
  const auto dir = fs::temp_directory_path() / "fedtraj_cli_gen";
  fs::remove_all(dir);
  const auto cfg = write_config(dir);
  const auto first = run("gen-data --config " + cfg.string());
  REQUIRE(first.exit_code == 0);
  REQUIRE(fs::exists(dir / "out" / "network.json"));
  REQUIRE(fs::exists(dir / "out" / "manifest.json"));
  REQUIRE(fs::exists(dir / "out" / "clients" / "client_0_train_incomplete.csv"));
  const auto manifest = slurp(dir / "out" / "manifest.json");
  const auto client0 = slurp(dir / "out" / "clients" / "client_0_train_truth.csv");
  const auto second = run("gen-data --config " + cfg.string());
  REQUIRE(second.exit_code == 0);
  REQUIRE(slurp(dir / "out" / "manifest.json") == manifest);
  REQUIRE(slurp(dir / "out" / "clients" / "client_0_train_truth.csv") == client0);
  fs::remove_all(dir);
}

TEST_CASE("unknown config keys are rejected by name") {
  const auto dir = fs::temp_directory_path() / "fedtraj_cli_badcfg";
  fs::create_directories(dir);
  const auto cfg = dir / "bad.json";
  std::ofstream(cfg) << R"({"seed": 1, "data": {"grid_rowz": 4}})";
  const auto res = run("gen-data --config " + cfg.string());
  REQUIRE(res.exit_code != 0);
  REQUIRE(res.output.find("error[invalid-config]") != std::string::npos);
  REQUIRE(res.output.find("grid_rowz") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("train writes checkpoints and telemetry deterministically") {
  const auto dir = fs::temp_directory_path() / "fedtraj_cli_train";
  fs::remove_all(dir);
  const auto cfg = write_config(dir, 2, 1);
  REQUIRE(run("train --config " + cfg.string()).exit_code == 0);
  REQUIRE(fs::exists(dir / "out" / "teacher.ckpt"));
  REQUIRE(fs::exists(dir / "out" / "global.ckpt"));
  REQUIRE(fs::exists(dir / "out" / "rounds.csv"));
  const auto rounds = slurp(dir / "out" / "rounds.csv");
  const auto global = slurp(dir / "out" / "global.ckpt");
  REQUIRE(run("train --config " + cfg.string()).exit_code == 0);
  REQUIRE(slurp(dir / "out" / "rounds.csv") == rounds);
  REQUIRE(slurp(dir / "out" / "global.ckpt") == global);

  SECTION("resume continues the round numbering") {
    REQUIRE(run("train --config " + cfg.string() + " --resume").exit_code == 0);
    std::istringstream in(slurp(dir / "out" / "rounds.csv"));
    std::string line;
    std::vector<int> rounds_seen;
    bool header = true;
    while (std::getline(in, line)) {
      if (header || line.empty()) {
        header = false;
        continue;
      }
      rounds_seen.push_back(std::stoi(line.substr(0, line.find(','))));
    }
    REQUIRE(rounds_seen == std::vector<int>{1, 2, 3, 4});
  }
  fs::remove_all(dir);
}

TEST_CASE("rounds = 0 trains only the teacher") {
  const auto dir = fs::temp_directory_path() / "fedtraj_cli_tonly";
  fs::remove_all(dir);
  const auto cfg = write_config(dir, 0, 1);
  REQUIRE(run("train --config " + cfg.string()).exit_code == 0);
  REQUIRE(fs::exists(dir / "out" / "teacher.ckpt"));
  REQUIRE_FALSE(fs::exists(dir / "out" / "global.ckpt"));
  fs::remove_all(dir);
}

TEST_CASE("evaluate emits a schema-complete report") {
  const auto dir = fs::temp_directory_path() / "fedtraj_cli_eval";
  fs::remove_all(dir);
  const auto cfg = write_config(dir, 1, 1);
  REQUIRE(run("train --config " + cfg.string()).exit_code == 0);
  const auto res = run("evaluate --config " + cfg.string() + " --checkpoint " +
                       (dir / "out" / "global.ckpt").string());
  REQUIRE(res.exit_code == 0);
  REQUIRE(fs::exists(dir / "out" / "report.json"));
  const auto rep = slurp(dir / "out" / "report.json");
  for (const char* key : {"recall", "precision", "mae_m", "rmse_m", "n_traj",
                          "n_points", "clients"})
    REQUIRE(rep.find(key) != std::string::npos);

  SECTION("missing checkpoint fails cleanly") {
    const auto bad = run("evaluate --config " + cfg.string() +
                         " --checkpoint /nonexistent.ckpt");
    REQUIRE(bad.exit_code != 0);
    REQUIRE(bad.output.find("error[") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("recover command round-trips fully observed input") {
  const auto dir = fs::temp_directory_path() / "fedtraj_cli_rec";
  fs::remove_all(dir);
  const auto cfg = write_config(dir, 1, 0);
  REQUIRE(run("train --config " + cfg.string()).exit_code == 0);
  // fully observed input: recovery must echo it
  const auto input = dir / "input.csv";
  {
    std::ofstream out(input);
    out << "traj_id,t,edge,r\n";
    for (int k = 0; k < 5; ++k)
      out << "0," << 15 * k << "," << k % 3 << ",0.25\n";
  }
  const auto output = dir / "recovered.csv";
  const auto res = run("recover --config " + cfg.string() + " --checkpoint " +
                       (dir / "out" / "global.ckpt").string() + " --input " +
                       input.string() + " --output " + output.string());
  REQUIRE(res.exit_code == 0);
  std::istringstream in(slurp(output));
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "traj_id,t,x,y,edge,r,observed");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    REQUIRE(line.substr(line.size() - 2) == ",1");  // all observed
    REQUIRE(line.find(",0.25,") != std::string::npos);
  }
  REQUIRE(rows == 5);
  fs::remove_all(dir);
}

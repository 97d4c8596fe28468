// fedtraj: desk-scale federated trajectory-recovery simulator.
// Subcommands: gen-data, train, evaluate, recover.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedtraj/checkpoint.hpp"
#include "fedtraj/config.hpp"
#include "fedtraj/csv_io.hpp"
#include "fedtraj/experiment.hpp"
#include "fedtraj/metrics.hpp"

namespace fs = std::filesystem;
using namespace fedtraj;

namespace {

struct common_flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> network;
  std::optional<double> keep_ratio;
  std::optional<int> clients;
  std::optional<std::string> partition;
  int workers = 1;
};

void add_common(CLI::App* cmd, common_flags& f) {
  cmd->add_option("--config", f.config_path, "experiment config JSON")->required();
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_option("--out", f.out_dir, "override the output directory");
  cmd->add_option("--network", f.network, "road network JSON instead of the lattice");
  cmd->add_option("--keep-ratio", f.keep_ratio, "override data.keep_ratio");
  cmd->add_option("--clients", f.clients, "override fed.clients");
  cmd->add_option("--partition", f.partition, "override data.partition (iid|spatial)");
  cmd->add_option("--workers", f.workers, "parallel client workers")
      ->check(CLI::PositiveNumber);
}

experiment_config resolve_config(const common_flags& f) {
  experiment_config cfg = load_config(f.config_path);
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.fed.seed = *f.seed;
  }
  if (f.out_dir) cfg.out_dir = *f.out_dir;
  if (f.network) cfg.data.network_file = *f.network;
  if (f.keep_ratio) cfg.data.keep_ratio = *f.keep_ratio;
  if (f.clients) cfg.fed.clients = *f.clients;
  if (f.partition) cfg.data.partition = parse_partition_mode(*f.partition);
  return cfg;
}

int last_round_in_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io_error, "cannot open " + path + " for resume");
  std::string line;
  int last = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (first || line.empty()) {
      first = false;
      continue;
    }
    last = std::stoi(line.substr(0, line.find(',')));
  }
  return last;
}

int cmd_gen_data(const common_flags& flags) {
  const experiment_config cfg = resolve_config(flags);
  const experiment_env env = build_environment(cfg);
  write_dataset_files(env, cfg);
  std::cout << "wrote dataset for " << env.clients.size() << " clients to "
            << cfg.out_dir << "\n";
  return 0;
}

int cmd_train(const common_flags& flags, bool resume) {
  const experiment_config cfg = resolve_config(flags);
  const experiment_env env = build_environment(cfg);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const std::string global_path = (out / "global.ckpt").string();
  const std::string rounds_path = (out / "rounds.csv").string();
  std::optional<parameter_vector<scalar_t>> resume_global;
  int first_round = 1;
  if (resume) {
    resume_global = load_checkpoint<scalar_t>(global_path);
    first_round = last_round_in_csv(rounds_path) + 1;
  }
  const train_outputs result =
      run_training(env, cfg, flags.workers,
                   resume_global ? &*resume_global : nullptr, first_round);
  save_checkpoint(result.teacher, (out / "teacher.ckpt").string());
  if (cfg.fed.rounds > 0) {
    save_checkpoint(result.fed.global, global_path);
    write_round_csv(result.fed.records, rounds_path, resume);
  }
  std::cout << "teacher checkpoint: " << (out / "teacher.ckpt").string() << "\n";
  if (cfg.fed.rounds > 0) {
    std::cout << "global checkpoint:  " << global_path << "\n"
              << "round telemetry:    " << rounds_path << "\n"
              << "final mean validation recall: "
              << result.fed.records.back().global_recall << "\n";
  }
  return 0;
}

int cmd_evaluate(const common_flags& flags, const std::string& checkpoint) {
  const experiment_config cfg = resolve_config(flags);
  const experiment_env env = build_environment(cfg);
  lte_model<scalar_t> model(env.model_cfg, 0);
  model.load_parameters(load_checkpoint<scalar_t>(checkpoint));
  const eval_report rep = evaluate(model, env.clients, env.net, env.grid);
  const auto j = report_json(rep);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  std::ofstream f(out / "report.json");
  require(f.good(), errc::io_error, "cannot write report.json");
  f << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_recover(const common_flags& flags, const std::string& checkpoint,
                const std::string& input, const std::string& output) {
  const experiment_config cfg = resolve_config(flags);
  const experiment_env env = build_environment(cfg);
  lte_model<scalar_t> model(env.model_cfg, 0);
  model.load_parameters(load_checkpoint<scalar_t>(checkpoint));
  const auto inputs = read_incomplete_csv(input, cfg.data.epsilon_s);
  std::vector<map_matched_trajectory> recovered;
  recovered.reserve(inputs.size());
  for (const auto& icp : inputs)
    recovered.push_back(recover(model, icp, env.net, env.grid));
  write_recovered_csv(recovered, inputs, env.net, output);
  std::cout << "recovered " << recovered.size() << " trajectories -> " << output
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated trajectory recovery simulator"};
  app.require_subcommand(1);

  common_flags gen_flags, train_flags, eval_flags, rec_flags;
  bool resume = false;
  std::string checkpoint, input_csv, output_csv;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset files");
  add_common(gen, gen_flags);

  auto* train = app.add_subcommand("train", "teacher pre-training + federated rounds");
  add_common(train, train_flags);
  train->add_flag("--resume", resume, "continue rounds from out_dir/global.ckpt");

  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on the test splits");
  add_common(eval, eval_flags);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

  auto* rec = app.add_subcommand("recover", "recover trajectories from an observed CSV");
  add_common(rec, rec_flags);
  rec->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  rec->add_option("--input", input_csv, "incomplete trajectory CSV")->required();
  rec->add_option("--output", output_csv, "recovered point CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags);
    if (train->parsed()) return cmd_train(train_flags, resume);
    if (eval->parsed()) return cmd_evaluate(eval_flags, checkpoint);
    if (rec->parsed()) return cmd_recover(rec_flags, checkpoint, input_csv, output_csv);
  } catch (const error& e) {
    std::cerr << "error[" << errc_name(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

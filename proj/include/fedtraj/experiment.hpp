#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fedtraj/config.hpp"
#include "fedtraj/csv_io.hpp"
#include "fedtraj/dataset.hpp"
#include "fedtraj/federated.hpp"
#include "fedtraj/metrics.hpp"
#include "fedtraj/model.hpp"
#include "fedtraj/synthetic.hpp"

namespace fedtraj {

// Materialized experiment: network, grid, partitioned client data, and the
// model configuration completed with the data-dependent vocabulary sizes.
struct experiment_env {
  road_network net;
  grid_spec grid;
  std::vector<client_dataset> clients;
  lte_config model_cfg;
};

inline experiment_env build_environment(const experiment_config& cfg) {
  experiment_env env;
  if (!cfg.data.network_file.empty())
    env.net = load_network(cfg.data.network_file);
  else
    env.net = generate_grid_network(cfg.data.grid_rows, cfg.data.grid_cols,
                                    cfg.data.spacing_m, sub_seed(cfg.seed, "net"));
  env.grid = grid_from_network(env.net, cfg.data.cell_m);
  const auto trajs = generate_synthetic_trajectories(
      env.net, cfg.data.trajectories, cfg.data.traj_points, cfg.data.epsilon_s,
      sub_seed(cfg.seed, "traj"));
  std::vector<traj_pair> pairs;
  pairs.reserve(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    traj_pair p;
    p.truth = trajs[i];
    p.icp = downsample(trajs[i], cfg.data.keep_ratio,
                       sub_seed(cfg.seed, "downsample/" + std::to_string(i)));
    pairs.push_back(std::move(p));
  }
  env.clients = partition_clients(pairs, cfg.fed.clients, cfg.data.partition,
                                  sub_seed(cfg.seed, "partition"), env.net,
                                  cfg.data.split);
  env.model_cfg = cfg.model;
  env.model_cfg.n_segments = static_cast<int>(env.net.edge_count());
  env.model_cfg.grid_cols = env.grid.cols;
  env.model_cfg.grid_rows = env.grid.rows;
  env.model_cfg.tid_vocab = cfg.data.traj_points;
  validate(env.model_cfg);
  return env;
}

using scalar_t = float;  // pipeline precision: 4 bytes per exchanged parameter

struct train_outputs {
  parameter_vector<scalar_t> teacher;
  fed_result<scalar_t> fed;
};

// Full training pipeline: cyclic teacher pre-training, then sampled federated
// rounds with teacher-guided local training.
inline train_outputs run_training(const experiment_env& env,
                                  const experiment_config& cfg, int workers = 1,
                                  const parameter_vector<scalar_t>* resume_global = nullptr,
                                  int first_round = 1) {
  fed_context ctx{env.net, env.grid, env.model_cfg, cfg.fed, workers};
  validate(ctx.cfg);
  std::vector<client_runtime<scalar_t>> runtimes;
  runtimes.reserve(env.clients.size());
  for (const auto& c : env.clients)
    runtimes.emplace_back(c.client_id, c, ctx);
  train_outputs out;
  out.teacher = train_teacher(runtimes, ctx);
  lte_model<scalar_t> teacher(env.model_cfg, 0);
  teacher.load_parameters(out.teacher);
  parameter_vector<scalar_t> global;
  if (resume_global != nullptr) {
    global = *resume_global;
  } else {
    lte_model<scalar_t> init(env.model_cfg, sub_seed(cfg.seed, "global-init"));
    global = init.parameters();
  }
  out.fed = run_rounds(runtimes, &teacher, ctx, std::move(global), first_round);
  return out;
}

// ---------------------------------------------------------------------------
// File artifacts

inline void write_dataset_files(const experiment_env& env,
                                const experiment_config& cfg) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "clients");
  save_network(env.net, (out / "network.json").string());
  {
    std::vector<map_matched_trajectory> all;
    for (const auto& c : env.clients)
      for (const auto* split : {&c.data.train, &c.data.valid, &c.data.test})
        for (const auto& p : *split) all.push_back(p.truth);
    write_matched_csv(all, (out / "trajectories.csv").string());
  }
  for (const auto& c : env.clients) {
    const auto base = out / "clients" / ("client_" + std::to_string(c.client_id));
    auto dump = [&](const std::vector<traj_pair>& pairs, const std::string& split) {
      std::vector<incomplete_trajectory> icps;
      std::vector<map_matched_trajectory> truths;
      for (const auto& p : pairs) {
        icps.push_back(p.icp);
        truths.push_back(p.truth);
      }
      write_incomplete_csv(icps, base.string() + "_" + split + "_incomplete.csv");
      write_matched_csv(truths, base.string() + "_" + split + "_truth.csv");
    };
    dump(c.data.train, "train");
    dump(c.data.valid, "valid");
    dump(c.data.test, "test");
  }
  std::ofstream manifest(out / "manifest.json");
  require(manifest.good(), errc::io_error, "cannot write manifest.json");
  manifest << dataset_manifest_json(env.clients, cfg.data.epsilon_s,
                                    cfg.data.keep_ratio, cfg.seed)
                  .dump(2)
           << "\n";
}

inline void write_round_csv(const std::vector<round_record>& records,
                            const std::string& path, bool append = false) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  require(out.good(), errc::io_error, "cannot write " + path);
  if (!append) out << telemetry_csv_header() << "\n";
  for (const auto& rec : records) out << telemetry_csv_row(rec) << "\n";
}

// Per-point recovery rows for plotting: traj_id,t,x,y,edge,r,observed
inline void write_recovered_csv(const std::vector<map_matched_trajectory>& recs,
                                const std::vector<incomplete_trajectory>& inputs,
                                const road_network& net, const std::string& path) {
  require(recs.size() == inputs.size(), errc::length_mismatch,
          "recovered/input trajectory counts differ");
  std::ofstream out(path);
  require(out.good(), errc::io_error, "cannot write " + path);
  out << "traj_id,t,x,y,edge,r,observed\n";
  for (std::size_t id = 0; id < recs.size(); ++id) {
    std::size_t obs = 0;
    for (const auto& p : recs[id].points) {
      while (obs < inputs[id].points.size() && inputs[id].points[obs].t < p.t - 1e-9)
        ++obs;
      const bool observed =
          obs < inputs[id].points.size() &&
          std::abs(inputs[id].points[obs].t - p.t) <= 1e-9;
      const vec2 pos = point_position(net, p);
      out << id << ',' << detail::fmt9(p.t) << ',' << detail::fmt9(pos.x) << ','
          << detail::fmt9(pos.y) << ',' << p.edge << ',' << detail::fmt9(p.r)
          << ',' << (observed ? 1 : 0) << '\n';
    }
  }
}

}  // namespace fedtraj

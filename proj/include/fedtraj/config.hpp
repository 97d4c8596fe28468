#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "fedtraj/dataset.hpp"
#include "fedtraj/errors.hpp"
#include "fedtraj/federated.hpp"
#include "fedtraj/model.hpp"

namespace fedtraj {

struct data_config {
  int grid_rows = 8;
  int grid_cols = 8;
  double spacing_m = 100.0;
  std::string network_file;  // optional: load instead of generating a lattice
  int trajectories = 50;
  int traj_points = 30;
  double epsilon_s = 15.0;
  double keep_ratio = 0.125;
  partition_mode partition = partition_mode::iid;
  split_ratios split;
  double cell_m = 100.0;
};

struct experiment_config {
  std::uint64_t seed = 7;
  std::string out_dir = "out";
  data_config data;
  lte_config model;  // vocabulary fields are completed from the data section
  fed_config fed;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const char* section,
                                const std::set<std::string>& known) {
  for (const auto& item : j.items())
    require(known.count(item.key()) > 0, errc::invalid_config,
            std::string("unknown key \"") + item.key() + "\" in section \"" +
                section + "\"");
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline void parse_data_section(const nlohmann::json& j, data_config& d) {
  detail::reject_unknown_keys(j, "data",
                              {"grid_rows", "grid_cols", "spacing_m", "network_file",
                               "trajectories", "traj_points", "epsilon_s",
                               "keep_ratio", "partition", "split", "cell_m"});
  detail::get_if(j, "grid_rows", d.grid_rows);
  detail::get_if(j, "grid_cols", d.grid_cols);
  detail::get_if(j, "spacing_m", d.spacing_m);
  detail::get_if(j, "network_file", d.network_file);
  detail::get_if(j, "trajectories", d.trajectories);
  detail::get_if(j, "traj_points", d.traj_points);
  detail::get_if(j, "epsilon_s", d.epsilon_s);
  detail::get_if(j, "keep_ratio", d.keep_ratio);
  if (j.contains("partition"))
    d.partition = parse_partition_mode(j.at("partition").get<std::string>());
  if (j.contains("split")) {
    const auto& s = j.at("split");
    require(s.is_array() && s.size() == 3, errc::invalid_config,
            "data.split must be [train, valid, test]");
    d.split = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
  }
  detail::get_if(j, "cell_m", d.cell_m);
}

inline void parse_model_section(const nlohmann::json& j, lte_config& m) {
  detail::reject_unknown_keys(j, "model",
                              {"hidden_dim", "seg_embed_dim", "blocks", "dropout",
                               "mu", "gamma", "mask_radius_m", "teacher_forcing"});
  detail::get_if(j, "hidden_dim", m.hidden_dim);
  detail::get_if(j, "seg_embed_dim", m.seg_embed_dim);
  detail::get_if(j, "blocks", m.n_blocks);
  detail::get_if(j, "dropout", m.dropout);
  detail::get_if(j, "mu", m.mu);
  detail::get_if(j, "gamma", m.gamma);
  detail::get_if(j, "mask_radius_m", m.mask_radius);
  detail::get_if(j, "teacher_forcing", m.teacher_forcing);
}

inline void parse_fed_section(const nlohmann::json& j, fed_config& f) {
  detail::reject_unknown_keys(
      j, "fed",
      {"rounds", "clients", "fraction", "local_epochs", "lambda0", "l_t",
       "teacher_cycles", "teacher_fraction", "batch_size", "learning_rate",
       "clip_norm", "optimizer"});
  detail::get_if(j, "rounds", f.rounds);
  detail::get_if(j, "clients", f.clients);
  detail::get_if(j, "fraction", f.fraction);
  detail::get_if(j, "local_epochs", f.local_epochs);
  detail::get_if(j, "lambda0", f.lambda0);
  detail::get_if(j, "l_t", f.l_t);
  detail::get_if(j, "teacher_cycles", f.teacher_cycles);
  detail::get_if(j, "teacher_fraction", f.teacher_fraction);
  detail::get_if(j, "batch_size", f.batch_size);
  detail::get_if(j, "learning_rate", f.learning_rate);
  detail::get_if(j, "clip_norm", f.clip_norm);
  if (j.contains("optimizer")) {
    const auto s = j.at("optimizer").get<std::string>();
    require(s == "sgd" || s == "adam", errc::invalid_config,
            "fed.optimizer must be \"sgd\" or \"adam\"");
    f.optimizer = s == "sgd" ? opt_method::sgd : opt_method::adam;
  }
}

inline experiment_config parse_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, "<root>",
                              {"seed", "out_dir", "data", "model", "fed"});
  experiment_config cfg;
  detail::get_if(j, "seed", cfg.seed);
  detail::get_if(j, "out_dir", cfg.out_dir);
  if (j.contains("data")) parse_data_section(j.at("data"), cfg.data);
  if (j.contains("model")) parse_model_section(j.at("model"), cfg.model);
  if (j.contains("fed")) parse_fed_section(j.at("fed"), cfg.fed);
  cfg.fed.seed = cfg.seed;
  return cfg;
}

inline experiment_config load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io_error, "cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(errc::invalid_config, std::string("config parse failure: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace fedtraj

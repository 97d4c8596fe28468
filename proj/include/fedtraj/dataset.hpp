#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedtraj/errors.hpp"
#include "fedtraj/rng.hpp"
#include "fedtraj/roadnet.hpp"
#include "fedtraj/trajectory.hpp"

namespace fedtraj {

// One supervised example: the observed low-rate trajectory and the complete
// epsilon-grid ground truth it was derived from.
struct traj_pair {
  incomplete_trajectory icp;
  map_matched_trajectory truth;

  friend bool operator==(const traj_pair& a, const traj_pair& b) {
    return a.icp == b.icp && a.truth == b.truth;
  }
};

struct split_ratios {
  double train = 0.7;
  double valid = 0.2;
  double test = 0.1;
};

struct dataset_splits {
  std::vector<traj_pair> train;
  std::vector<traj_pair> valid;
  std::vector<traj_pair> test;
};

// Seeded shuffle, then contiguous cut. valid/test sizes are floors of their
// ratios; the remainder goes to train, so any non-empty input trains.
inline dataset_splits split_dataset(std::vector<traj_pair> pairs,
                                    const split_ratios& ratios,
                                    std::uint64_t seed) {
  require(ratios.train >= 0 && ratios.valid >= 0 && ratios.test >= 0 &&
              std::abs(ratios.train + ratios.valid + ratios.test - 1.0) <= 1e-9,
          errc::invalid_ratios, "split ratios must be non-negative and sum to 1");
  require(!pairs.empty(), errc::empty_list, "cannot split an empty dataset");
  rng_t rng(seed);
  shuffle_inplace(pairs, rng);
  const std::size_t n = pairs.size();
  const auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * n));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n));
  const std::size_t n_train = n - n_valid - n_test;
  dataset_splits out;
  out.train.assign(pairs.begin(), pairs.begin() + n_train);
  out.valid.assign(pairs.begin() + n_train, pairs.begin() + n_train + n_valid);
  out.test.assign(pairs.begin() + n_train + n_valid, pairs.end());
  return out;
}

struct client_dataset {
  int client_id = 0;
  dataset_splits data;

  std::size_t pair_count() const {
    return data.train.size() + data.valid.size() + data.test.size();
  }
};

enum class partition_mode { iid, spatial };

inline partition_mode parse_partition_mode(const std::string& s) {
  if (s == "iid") return partition_mode::iid;
  if (s == "spatial") return partition_mode::spatial;
  raise(errc::invalid_config, "partition mode must be \"iid\" or \"spatial\"");
}

namespace detail {

// Angular sector of a trajectory's start position around the network
// centroid; sector s covers angles [-pi + s*w, -pi + (s+1)*w).
inline int start_sector(const road_network& net, const traj_pair& p, int n) {
  const vec2 c = net.centroid();
  const vec2 s = point_position(net, p.truth.points.front());
  const double ang = std::atan2(s.y - c.y, s.x - c.x);  // [-pi, pi]
  const double pi = std::acos(-1.0);
  int sector = static_cast<int>((ang + pi) / (2.0 * pi) * n);
  return std::clamp(sector, 0, n - 1);
}

}  // namespace detail

// Splits the corpus across clients. iid deals a seeded shuffle round-robin;
// spatial groups trajectories by the angular sector of their start point,
// moving pairs off the largest sector only when a client would otherwise be
// empty. Every client's share is then split 7:2:1 (or as configured).
inline std::vector<client_dataset> partition_clients(
    const std::vector<traj_pair>& pairs, int n_clients, partition_mode mode,
    std::uint64_t seed, const road_network& net,
    const split_ratios& ratios = {}) {
  require(n_clients >= 1, errc::invalid_dimension, "need at least one client");
  require(pairs.size() >= static_cast<std::size_t>(n_clients),
          errc::too_few_trajectories,
          "need at least one trajectory per client");
  std::vector<std::vector<traj_pair>> buckets(n_clients);
  if (mode == partition_mode::iid) {
    std::vector<traj_pair> shuffled = pairs;
    rng_t rng = make_rng(seed, "partition/iid");
    shuffle_inplace(shuffled, rng);
    for (std::size_t i = 0; i < shuffled.size(); ++i)
      buckets[i % n_clients].push_back(std::move(shuffled[i]));
  } else {
    for (const auto& p : pairs)
      buckets[detail::start_sector(net, p, n_clients)].push_back(p);
    for (auto& b : buckets) {
      while (b.empty()) {
        auto largest = std::max_element(
            buckets.begin(), buckets.end(),
            [](const auto& a, const auto& c) { return a.size() < c.size(); });
        require(largest->size() > 1, errc::too_few_trajectories,
                "cannot balance clients: not enough trajectories");
        b.push_back(std::move(largest->back()));
        largest->pop_back();
      }
    }
  }
  std::vector<client_dataset> clients;
  clients.reserve(n_clients);
  for (int i = 0; i < n_clients; ++i) {
    require(!buckets[i].empty(), errc::too_few_trajectories,
            "client " + std::to_string(i) + " received no trajectories");
    client_dataset c;
    c.client_id = i;
    c.data = split_dataset(std::move(buckets[i]), ratios,
                           sub_seed(seed, "split/" + std::to_string(i)));
    clients.push_back(std::move(c));
  }
  return clients;
}

inline nlohmann::json dataset_manifest_json(const std::vector<client_dataset>& clients,
                                            double epsilon, double keep_ratio,
                                            std::uint64_t seed) {
  nlohmann::json j;
  j["epsilon_s"] = epsilon;
  j["keep_ratio"] = keep_ratio;
  j["seed"] = seed;
  j["clients"] = nlohmann::json::array();
  for (const auto& c : clients) {
    j["clients"].push_back({{"id", c.client_id},
                            {"train", c.data.train.size()},
                            {"valid", c.data.valid.size()},
                            {"test", c.data.test.size()}});
  }
  return j;
}

}  // namespace fedtraj

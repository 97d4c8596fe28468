#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedtraj/rng.hpp"
#include "fedtraj/roadnet.hpp"
#include "fedtraj/trajectory.hpp"

namespace fedtraj {

namespace detail {

// Pick the next edge of a walk standing at the end node of `cur`. Straight
// continuations are favored and immediate U-turns only happen at dead ends.
inline int pick_next_edge(const road_network& net, int cur, rng_t& rng) {
  const auto& e = net.edge(cur);
  const auto& options = net.out_edges(e.n2);
  if (options.empty()) return -1;
  std::vector<int> candidates;
  candidates.reserve(options.size());
  for (int eid : options) {
    const auto& c = net.edge(eid);
    const bool reverse = (c.n1 == e.n2 && c.n2 == e.n1);
    if (!reverse) candidates.push_back(eid);
  }
  if (candidates.empty()) candidates.push_back(options.front());
  const vec2 dir = net.node(e.n2).pos - net.node(e.n1).pos;
  double total = 0.0;
  std::vector<double> weight(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = net.edge(candidates[i]);
    const vec2 cd = net.node(c.n2).pos - net.node(c.n1).pos;
    const double align = dot(dir, cd) / std::max(1e-12, norm(dir) * norm(cd));
    weight[i] = align > 0.9 ? 3.0 : 1.0;
    total += weight[i];
  }
  double pick = u01(rng) * total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    pick -= weight[i];
    if (pick <= 0.0) return candidates[i];
  }
  return candidates.back();
}

}  // namespace detail

// Constant-speed random walk over directed edges, emitted every epsilon
// seconds. Ground truth is on-network by construction: every emission is a
// valid (edge, r) with timestamps k * epsilon.
inline map_matched_trajectory random_walk_trajectory(const road_network& net,
                                                     int length, double epsilon,
                                                     rng_t& rng) {
  require(length >= 2, errc::invalid_dimension, "trajectory length must be >= 2");
  require(net.edge_count() > 0, errc::invalid_dimension, "network has no edges");
  const double speed = uniform_range(rng, 5.0, 15.0);  // m/s
  int edge = static_cast<int>(uniform_index(rng, net.edge_count()));
  double r = u01(rng);
  map_matched_trajectory out;
  out.epsilon = epsilon;
  out.points.reserve(length);
  for (int k = 0; k < length; ++k) {
    out.points.push_back({edge, r, k * epsilon});
    double dist = speed * epsilon;
    while (dist > 0.0) {
      const double len = net.edge(edge).length;
      const double remaining = (1.0 - r) * len;
      if (dist < remaining) {
        r = std::min(1.0, r + dist / len);
        break;
      }
      dist -= remaining;
      const int next = detail::pick_next_edge(net, edge, rng);
      if (next < 0) {  // dead end: park at the edge end
        r = 1.0;
        break;
      }
      edge = next;
      r = 0.0;
    }
  }
  return out;
}

inline std::vector<map_matched_trajectory> generate_synthetic_trajectories(
    const road_network& net, int count, int length, double epsilon,
    std::uint64_t seed) {
  require(count >= 0, errc::invalid_dimension, "count must be >= 0");
  require(epsilon > 0.0, errc::invalid_dimension, "epsilon must be > 0");
  std::vector<map_matched_trajectory> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    rng_t rng = make_rng(seed, "walk/" + std::to_string(i));
    out.push_back(random_walk_trajectory(net, length, epsilon, rng));
  }
  return out;
}

}  // namespace fedtraj

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fedtraj/errors.hpp"
#include "fedtraj/rng.hpp"
#include "fedtraj/roadnet.hpp"

namespace fedtraj {

struct raw_point {
  vec2 pos;
  double t = 0.0;
};

// GPS input before map matching: planar meters, strictly increasing time.
struct raw_trajectory {
  std::vector<raw_point> points;
};

inline void validate(const raw_trajectory& tr) {
  require(tr.points.size() >= 2, errc::length_mismatch,
          "raw trajectory needs at least 2 points");
  for (std::size_t i = 1; i < tr.points.size(); ++i)
    require(tr.points[i].t > tr.points[i - 1].t, errc::malformed_row,
            "raw timestamps must be strictly increasing");
}

// Fully sampled map-matched trajectory: one point every epsilon seconds.
struct map_matched_trajectory {
  std::vector<map_matched_point> points;
  double epsilon = 0.0;

  double t_start() const { return points.front().t; }
  double t_end() const { return points.back().t; }

  friend bool operator==(const map_matched_trajectory& a,
                         const map_matched_trajectory& b) {
    return a.epsilon == b.epsilon && a.points == b.points;
  }
};

inline void validate(const map_matched_trajectory& tr, const road_network& net) {
  require(!tr.points.empty(), errc::empty_list, "empty trajectory");
  require(tr.epsilon > 0.0, errc::invalid_dimension, "epsilon must be > 0");
  for (std::size_t i = 0; i < tr.points.size(); ++i) {
    validate_point(net, tr.points[i]);
    if (i > 0)
      require(std::abs((tr.points[i].t - tr.points[i - 1].t) - tr.epsilon) <=
                  1e-9 * std::max(1.0, tr.epsilon),
              errc::malformed_row, "sampling interval must equal epsilon");
  }
}

// Observed subset of an epsilon-grid trajectory. The first and last grid
// timestamps are always present, so the recovery span [t_start, t_end] is
// known from the observations alone.
struct incomplete_trajectory {
  std::vector<map_matched_point> points;
  double epsilon = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;

  int step_count() const {
    return static_cast<int>(std::llround((t_end - t_start) / epsilon)) + 1;
  }

  friend bool operator==(const incomplete_trajectory& a,
                         const incomplete_trajectory& b) {
    return a.epsilon == b.epsilon && a.t_start == b.t_start &&
           a.t_end == b.t_end && a.points == b.points;
  }
};

inline void validate(const incomplete_trajectory& tr, const road_network& net) {
  require(!tr.points.empty(), errc::empty_list, "empty trajectory");
  require(tr.epsilon > 0.0, errc::invalid_dimension, "epsilon must be > 0");
  require(tr.points.front().t == tr.t_start && tr.points.back().t == tr.t_end,
          errc::malformed_row, "grid endpoints must be observed");
  double prev = tr.t_start - tr.epsilon;
  for (const auto& p : tr.points) {
    validate_point(net, p);
    require(p.t > prev, errc::malformed_row, "timestamps must be strictly increasing");
    const double steps = (p.t - tr.t_start) / tr.epsilon;
    require(std::abs(steps - std::llround(steps)) <= 1e-9 * std::max(1.0, steps),
            errc::malformed_row, "timestamp off the epsilon grid");
    prev = p.t;
  }
}

// Discrete encoder unit: grid cell indices plus the step index on the
// epsilon grid, tid = floor((t - t_start) / epsilon).
struct grid_token {
  int x = 0;
  int y = 0;
  int tid = 0;

  friend bool operator==(const grid_token& a, const grid_token& b) {
    return a.x == b.x && a.y == b.y && a.tid == b.tid;
  }
};

// Keeps both endpoints, drops each interior point independently with
// probability (1 - keep_ratio). Deterministic in (traj, keep_ratio, seed).
inline incomplete_trajectory downsample(const map_matched_trajectory& traj,
                                        double keep_ratio, std::uint64_t seed) {
  require(keep_ratio > 0.0 && keep_ratio <= 1.0, errc::invalid_ratio,
          "keep ratio must lie in (0, 1]");
  require(traj.points.size() >= 2, errc::length_mismatch,
          "need at least 2 points to downsample");
  rng_t rng(seed);
  incomplete_trajectory out;
  out.epsilon = traj.epsilon;
  out.t_start = traj.t_start();
  out.t_end = traj.t_end();
  out.points.push_back(traj.points.front());
  for (std::size_t i = 1; i + 1 < traj.points.size(); ++i)
    if (u01(rng) < keep_ratio) out.points.push_back(traj.points[i]);
  out.points.push_back(traj.points.back());
  return out;
}

inline std::vector<grid_token> to_grid_sequence(const incomplete_trajectory& icp,
                                                const road_network& net,
                                                const grid_spec& grid) {
  std::vector<grid_token> tokens;
  tokens.reserve(icp.points.size());
  for (const auto& p : icp.points) {
    validate_point(net, p);
    const grid_cell c = cell_of(grid, point_position(net, p));
    const int tid = static_cast<int>(std::floor((p.t - icp.t_start) / icp.epsilon));
    tokens.push_back({c.x, c.y, tid});
  }
  return tokens;
}

}  // namespace fedtraj

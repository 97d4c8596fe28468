#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fedtraj/errors.hpp"
#include "fedtraj/roadnet.hpp"
#include "fedtraj/trajectory.hpp"

namespace fedtraj {

struct hmm_params {
  double sigma = 10.0;   // GPS noise scale, meters
  double beta = 5.0;     // route/straight-line mismatch scale, meters
  double radius = 50.0;  // candidate search radius, meters
};

// Log-prob stand-in for impossible transitions; finite so the decoder stays
// total on (rare) disconnected candidate graphs and still picks the least
// broken sequence deterministically.
inline constexpr double hmm_impossible = -1e18;

struct match_candidate {
  int edge = 0;
  double r = 0.0;
  double dist = 0.0;  // perpendicular distance to the raw point
};

inline std::vector<match_candidate> match_candidates(const road_network& net,
                                                     vec2 p, double radius) {
  std::vector<match_candidate> out;
  for (const auto& e : net.edges()) {
    const vec2 a = net.node(e.n1).pos;
    const vec2 b = net.node(e.n2).pos;
    const double ratio = project_ratio(p, a, b);
    const double d = distance(p, lerp(a, b, ratio));
    if (d <= radius) out.push_back({e.id, ratio, d});
  }
  return out;
}

inline double emission_log_prob(double dist, const hmm_params& mp) {
  return -(dist * dist) / (2.0 * mp.sigma * mp.sigma);
}

// exp(-|route - straight| / beta); impossible when the network offers no
// directed route between the two candidates.
inline double transition_log_prob(const road_network& net,
                                  const map_matched_point& from,
                                  const map_matched_point& to,
                                  double straight_line, const hmm_params& mp) {
  const auto route = rn_distance_directed(net, from, to);
  if (!route) return hmm_impossible;
  return -std::abs(*route - straight_line) / mp.beta;
}

// Geometric route between two on-network points, as (edge, r0 -> r1) spans.
struct route_segment {
  int edge = 0;
  double r0 = 0.0;
  double r1 = 0.0;
};

struct network_route {
  std::vector<route_segment> segments;
  double length = 0.0;
};

inline std::optional<network_route> route_between(const road_network& net,
                                                  const map_matched_point& a,
                                                  const map_matched_point& b) {
  network_route route;
  auto push = [&](int edge, double r0, double r1) {
    if (r1 <= r0) return;
    route.segments.push_back({edge, r0, r1});
    route.length += (r1 - r0) * net.edge(edge).length;
  };
  if (a.edge == b.edge && a.r <= b.r) {
    push(a.edge, a.r, b.r);
    return route;
  }
  const auto mid = shortest_path_edges(net, net.edge(a.edge).n2, net.edge(b.edge).n1);
  if (!mid) return std::nullopt;
  push(a.edge, a.r, 1.0);
  for (int eid : *mid) push(eid, 0.0, 1.0);
  push(b.edge, 0.0, b.r);
  return route;
}

// Position after traveling `dist` meters along the route; clamps to the ends.
inline map_matched_point route_point_at(const road_network& net,
                                        const network_route& route,
                                        const map_matched_point& start,
                                        double dist) {
  if (route.segments.empty() || dist <= 0.0) return start;
  for (const auto& seg : route.segments) {
    const double len = (seg.r1 - seg.r0) * net.edge(seg.edge).length;
    if (dist <= len || &seg == &route.segments.back()) {
      const double r = seg.r0 + std::min(1.0, dist / std::max(len, 1e-12)) * (seg.r1 - seg.r0);
      return {seg.edge, std::min(r, seg.r1), 0.0};
    }
    dist -= len;
  }
  const auto& last = route.segments.back();
  return {last.edge, last.r1, 0.0};
}

// Viterbi decode of the candidate lattice: emission exp(-d^2 / 2 sigma^2),
// transition exp(-|route - straight| / beta). Ties break toward the earliest
// candidate (candidates are in edge-id order).
inline std::vector<map_matched_point> viterbi_match(
    const road_network& net, const raw_trajectory& raw, const hmm_params& mp,
    const std::vector<std::vector<match_candidate>>& cands) {
  const std::size_t n = raw.points.size();
  std::vector<std::vector<double>> score(n);
  std::vector<std::vector<int>> back(n);
  score[0].resize(cands[0].size());
  back[0].assign(cands[0].size(), -1);
  for (std::size_t c = 0; c < cands[0].size(); ++c)
    score[0][c] = emission_log_prob(cands[0][c].dist, mp);
  for (std::size_t i = 1; i < n; ++i) {
    const double straight = distance(raw.points[i - 1].pos, raw.points[i].pos);
    score[i].assign(cands[i].size(), -std::numeric_limits<double>::infinity());
    back[i].assign(cands[i].size(), -1);
    for (std::size_t c = 0; c < cands[i].size(); ++c) {
      const map_matched_point to{cands[i][c].edge, cands[i][c].r, raw.points[i].t};
      double best = -std::numeric_limits<double>::infinity();
      int best_prev = -1;
      for (std::size_t p = 0; p < cands[i - 1].size(); ++p) {
        const map_matched_point from{cands[i - 1][p].edge, cands[i - 1][p].r,
                                     raw.points[i - 1].t};
        const double s =
            score[i - 1][p] + transition_log_prob(net, from, to, straight, mp);
        if (s > best) {
          best = s;
          best_prev = static_cast<int>(p);
        }
      }
      score[i][c] = best + emission_log_prob(cands[i][c].dist, mp);
      back[i][c] = best_prev;
    }
  }
  int arg = 0;
  for (std::size_t c = 1; c < cands[n - 1].size(); ++c)
    if (score[n - 1][c] > score[n - 1][arg]) arg = static_cast<int>(c);
  std::vector<map_matched_point> states(n);
  for (std::size_t i = n; i-- > 0;) {
    states[i] = {cands[i][arg].edge, cands[i][arg].r, raw.points[i].t};
    if (i > 0) arg = back[i][arg];
  }
  return states;
}

// Resample the matched states onto the epsilon grid, interpolating position
// by arc length along the matched route, so every emitted point stays
// on-network. Grid runs t_1, t_1 + eps, ... up to the last multiple <= t_n.
inline map_matched_trajectory resample_to_grid(const road_network& net,
                                               const std::vector<map_matched_point>& states,
                                               double epsilon) {
  map_matched_trajectory out;
  out.epsilon = epsilon;
  const double t0 = states.front().t;
  const double tn = states.back().t;
  const int steps = static_cast<int>(std::floor((tn - t0) / epsilon + 1e-9));
  std::size_t i = 0;
  std::optional<network_route> route;
  std::size_t route_i = static_cast<std::size_t>(-1);
  for (int k = 0; k <= steps; ++k) {
    const double tau = t0 + k * epsilon;
    while (i + 1 < states.size() && states[i + 1].t <= tau + 1e-9) ++i;
    map_matched_point p;
    if (i + 1 >= states.size() || std::abs(states[i].t - tau) <= 1e-9) {
      p = states[i];
    } else {
      if (route_i != i) {
        route = route_between(net, states[i], states[i + 1]);
        route_i = i;
      }
      if (!route) {
        p = states[i];  // disconnected candidates: hold position
      } else {
        const double f = (tau - states[i].t) / (states[i + 1].t - states[i].t);
        p = route_point_at(net, *route, states[i], f * route->length);
      }
    }
    p.t = tau;
    out.points.push_back(p);
  }
  return out;
}

// Full matcher: candidates, Viterbi over the lattice, epsilon-grid resample.
inline map_matched_trajectory hmm_map_match(const road_network& net,
                                            const raw_trajectory& raw,
                                            double epsilon,
                                            const hmm_params& mp = {}) {
  require(!raw.points.empty(), errc::empty_list, "empty raw trajectory");
  require(mp.radius > 0.0, errc::invalid_dimension, "candidate radius must be > 0");
  std::vector<std::vector<match_candidate>> cands(raw.points.size());
  for (std::size_t i = 0; i < raw.points.size(); ++i) {
    cands[i] = match_candidates(net, raw.points[i].pos, mp.radius);
    require(!cands[i].empty(), errc::no_candidates,
            "no candidate edge within radius for point " + std::to_string(i));
  }
  const auto states = viterbi_match(net, raw, mp, cands);
  return resample_to_grid(net, states, epsilon);
}

}  // namespace fedtraj

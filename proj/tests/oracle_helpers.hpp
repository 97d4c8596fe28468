// Test-only oracles, independent of the library's computation paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "fedtraj/map_matching.hpp"
#include "fedtraj/rng.hpp"
#include "fedtraj/roadnet.hpp"
#include "fedtraj/trajectory.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Minimal standalone weighted digraph + Dijkstra (no shared code with
// fedtraj::road_network's query path).

struct digraph {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;  // (to, weight)

  explicit digraph(int nodes) : n(nodes), adj(nodes) {}
  void arc(int u, int v, double w) { adj[u].push_back({v, w}); }

  std::optional<double> dist(int s, int t) const {
    std::vector<double> d(n, std::numeric_limits<double>::infinity());
    using qe = std::pair<double, int>;
    std::priority_queue<qe, std::vector<qe>, std::greater<>> q;
    d[s] = 0;
    q.push({0, s});
    while (!q.empty()) {
      auto [du, u] = q.top();
      q.pop();
      if (du > d[u]) continue;
      for (auto [v, w] : adj[u])
        if (du + w < d[v]) {
          d[v] = du + w;
          q.push({d[v], v});
        }
    }
    if (!std::isfinite(d[t])) return std::nullopt;
    return d[t];
  }
};

// Directed network distance between two on-edge points, by inserting both
// positions as temporary nodes that split their edges.
inline std::optional<double> rn_directed_brute(const fedtraj::road_network& net,
                                               const fedtraj::map_matched_point& a,
                                               const fedtraj::map_matched_point& b) {
  const int n = static_cast<int>(net.node_count());
  const int A = n, B = n + 1;
  digraph g(n + 2);
  for (const auto& e : net.edges()) {
    const bool has_a = a.edge == e.id;
    const bool has_b = b.edge == e.id;
    // split points on this edge, ordered by ratio
    std::vector<std::pair<double, int>> cuts;  // (r, temp node)
    if (has_a) cuts.push_back({a.r, A});
    if (has_b) cuts.push_back({b.r, B});
    std::sort(cuts.begin(), cuts.end());
    int prev = e.n1;
    double prev_r = 0.0;
    for (auto [r, node] : cuts) {
      g.arc(prev, node, (r - prev_r) * e.length);
      prev = node;
      prev_r = r;
    }
    g.arc(prev, e.n2, (1.0 - prev_r) * e.length);
  }
  return g.dist(A, B);
}

inline std::optional<double> rn_brute(const fedtraj::road_network& net,
                                      const fedtraj::map_matched_point& a,
                                      const fedtraj::map_matched_point& b) {
  const auto ab = rn_directed_brute(net, a, b);
  const auto ba = rn_directed_brute(net, b, a);
  if (ab && ba) return std::min(*ab, *ba);
  if (ab) return ab;
  return ba;
}

// Random planar directed network with <= max_nodes nodes; not necessarily
// strongly connected, so the disconnected sentinel gets exercised too.
inline fedtraj::road_network random_network(fedtraj::rng_t& rng, int max_nodes) {
  const int n = 2 + static_cast<int>(fedtraj::uniform_index(rng, max_nodes - 1));
  std::vector<fedtraj::road_node> nodes;
  for (int i = 0; i < n; ++i)
    nodes.push_back({i,
                     {fedtraj::uniform_range(rng, 0.0, 1000.0),
                      fedtraj::uniform_range(rng, 0.0, 1000.0)}});
  std::vector<fedtraj::road_edge> edges;
  auto arc = [&](int u, int v) {
    const int id = static_cast<int>(edges.size());
    edges.push_back({id, u, v, 0.0});
  };
  // random spanning chain plus extra arcs; ~half the pairs get a reverse arc
  for (int i = 1; i < n; ++i) {
    arc(i - 1, i);
    if (fedtraj::u01(rng) < 0.5) arc(i, i - 1);
  }
  const int extra = static_cast<int>(fedtraj::uniform_index(rng, 2 * n));
  for (int k = 0; k < extra; ++k) {
    const int u = static_cast<int>(fedtraj::uniform_index(rng, n));
    const int v = static_cast<int>(fedtraj::uniform_index(rng, n));
    if (u != v) arc(u, v);
  }
  return fedtraj::road_network(std::move(nodes), std::move(edges));
}

inline fedtraj::map_matched_point random_point(fedtraj::rng_t& rng,
                                               const fedtraj::road_network& net) {
  return {static_cast<int>(fedtraj::uniform_index(rng, net.edge_count())),
          fedtraj::u01(rng), 0.0};
}

// ---------------------------------------------------------------------------
// Exhaustive HMM decoding: scores every candidate sequence directly from the
// emission/transition definitions; returns the argmax sequence (ties resolved
// toward the earlier lexicographic sequence, matching first-max Viterbi).

inline double oracle_transition(const fedtraj::road_network& net,
                                const fedtraj::map_matched_point& from,
                                const fedtraj::map_matched_point& to,
                                double straight, const fedtraj::hmm_params& mp) {
  const auto route = rn_directed_brute(net, from, to);
  if (!route) return fedtraj::hmm_impossible;
  return -std::abs(*route - straight) / mp.beta;
}

inline double hmm_sequence_score(
    const fedtraj::road_network& net, const fedtraj::raw_trajectory& raw,
    const fedtraj::hmm_params& mp,
    const std::vector<std::vector<fedtraj::match_candidate>>& cands,
    const std::vector<int>& idx) {
  double s = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& c = cands[i][idx[i]];
    s += -(c.dist * c.dist) / (2.0 * mp.sigma * mp.sigma);
    if (i > 0) {
      const auto& p = cands[i - 1][idx[i - 1]];
      s += oracle_transition(
          net, {p.edge, p.r, raw.points[i - 1].t}, {c.edge, c.r, raw.points[i].t},
          fedtraj::distance(raw.points[i - 1].pos, raw.points[i].pos), mp);
    }
  }
  return s;
}

inline std::vector<int> hmm_enumerate(
    const fedtraj::road_network& net, const fedtraj::raw_trajectory& raw,
    const fedtraj::hmm_params& mp,
    const std::vector<std::vector<fedtraj::match_candidate>>& cands) {
  const std::size_t n = raw.points.size();
  std::vector<std::size_t> idx(n, 0);
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  while (true) {
    double score = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = cands[i][idx[i]];
      score += -(c.dist * c.dist) / (2.0 * mp.sigma * mp.sigma);
      if (i > 0) {
        const auto& p = cands[i - 1][idx[i - 1]];
        score += oracle_transition(
            net, {p.edge, p.r, raw.points[i - 1].t}, {c.edge, c.r, raw.points[i].t},
            fedtraj::distance(raw.points[i - 1].pos, raw.points[i].pos), mp);
      }
    }
    if (score > best_score) {
      best_score = score;
      best.resize(n);
      for (std::size_t i = 0; i < n; ++i) best[i] = static_cast<int>(idx[i]);
    }
    std::size_t i = n;
    while (i-- > 0) {
      if (++idx[i] < cands[i].size()) break;
      idx[i] = 0;
      if (i == 0) return best;
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient-check helper: scale-aware relative error between analytic and
// central finite differences.

inline double grad_rel_error(const std::vector<double>& analytic,
                             const std::vector<double>& fd) {
  double a_inf = 0;
  for (double a : analytic) a_inf = std::max(a_inf, std::abs(a));
  const double floor = std::max(1e-6, 1e-3 * a_inf);
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

}  // namespace oracle

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedtraj/errors.hpp"
#include "fedtraj/geometry.hpp"
#include "fedtraj/rng.hpp"

namespace fedtraj {

struct road_node {
  int id = 0;
  vec2 pos;
};

struct road_edge {
  int id = 0;
  int n1 = 0;  // start node
  int n2 = 0;  // end node
  double length = 0.0;  // meters, always the Euclidean endpoint distance
};

// A point matched onto the network: edge id, moving ratio r in [0,1] measured
// from the edge's start node, and a timestamp in seconds.
struct map_matched_point {
  int edge = 0;
  double r = 0.0;
  double t = 0.0;

  friend bool operator==(const map_matched_point& a, const map_matched_point& b) {
    return a.edge == b.edge && a.r == b.r && a.t == b.t;
  }
};

namespace detail {
struct dijkstra_tree {
  std::vector<double> dist;      // +inf where unreachable
  std::vector<int> pred_edge;    // incoming edge on the shortest path, -1 at source/unreached
};
}  // namespace detail

// Directed road graph. Immutable after construction; the per-source shortest
// path cache is the only mutable state and is mutex-guarded.
class road_network {
 public:
  road_network() = default;

  road_network(std::vector<road_node> nodes, std::vector<road_edge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      require(nodes_[i].id == static_cast<int>(i), errc::invalid_dimension,
              "node ids must be dense 0..n-1");
    out_edges_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      auto& e = edges_[i];
      require(e.id == static_cast<int>(i), errc::invalid_dimension,
              "edge ids must be dense 0..m-1");
      require(has_node(e.n1) && has_node(e.n2), errc::unknown_node,
              "edge " + std::to_string(e.id) + " refers to an unknown node");
      e.length = distance(nodes_[e.n1].pos, nodes_[e.n2].pos);
      out_edges_[e.n1].push_back(e.id);
    }
  }

  road_network(const road_network& o) : nodes_(o.nodes_), edges_(o.edges_), out_edges_(o.out_edges_) {}
  road_network& operator=(const road_network& o) {
    nodes_ = o.nodes_;
    edges_ = o.edges_;
    out_edges_ = o.out_edges_;
    std::lock_guard lk(memo_mu_);
    memo_.clear();
    return *this;
  }

  const std::vector<road_node>& nodes() const { return nodes_; }
  const std::vector<road_edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  bool has_node(int id) const { return id >= 0 && id < static_cast<int>(nodes_.size()); }
  bool has_edge(int id) const { return id >= 0 && id < static_cast<int>(edges_.size()); }

  const road_node& node(int id) const {
    require(has_node(id), errc::unknown_node, "unknown node " + std::to_string(id));
    return nodes_[id];
  }
  const road_edge& edge(int id) const {
    require(has_edge(id), errc::unknown_edge, "unknown edge " + std::to_string(id));
    return edges_[id];
  }
  const std::vector<int>& out_edges(int node_id) const {
    require(has_node(node_id), errc::unknown_node, "unknown node " + std::to_string(node_id));
    return out_edges_[node_id];
  }

  vec2 centroid() const {
    vec2 c;
    for (const auto& n : nodes_) c = c + n.pos;
    const double k = nodes_.empty() ? 1.0 : static_cast<double>(nodes_.size());
    return {c.x / k, c.y / k};
  }

  // Full single-source Dijkstra tree, cached per source.
  std::shared_ptr<const detail::dijkstra_tree> paths_from(int src) const {
    require(has_node(src), errc::unknown_node, "unknown node " + std::to_string(src));
    {
      std::lock_guard lk(memo_mu_);
      auto it = memo_.find(src);
      if (it != memo_.end()) return it->second;
    }
    auto tree = std::make_shared<detail::dijkstra_tree>();
    tree->dist.assign(nodes_.size(), std::numeric_limits<double>::infinity());
    tree->pred_edge.assign(nodes_.size(), -1);
    using qe = std::pair<double, int>;
    std::priority_queue<qe, std::vector<qe>, std::greater<>> q;
    tree->dist[src] = 0.0;
    q.push({0.0, src});
    while (!q.empty()) {
      auto [d, u] = q.top();
      q.pop();
      if (d > tree->dist[u]) continue;
      for (int eid : out_edges_[u]) {
        const auto& e = edges_[eid];
        const double nd = d + e.length;
        if (nd < tree->dist[e.n2]) {
          tree->dist[e.n2] = nd;
          tree->pred_edge[e.n2] = eid;
          q.push({nd, e.n2});
        }
      }
    }
    std::lock_guard lk(memo_mu_);
    auto [it, _] = memo_.emplace(src, std::move(tree));
    return it->second;
  }

 private:
  std::vector<road_node> nodes_;
  std::vector<road_edge> edges_;
  std::vector<std::vector<int>> out_edges_;

  mutable std::mutex memo_mu_;
  mutable std::unordered_map<int, std::shared_ptr<const detail::dijkstra_tree>> memo_;
};

// rows x cols lattice with two directed edges per neighboring node pair.
// Deterministic for a fixed seed (the seed currently only fixes the API for
// future irregular generators; lattice construction itself has no choices).
inline road_network generate_grid_network(int rows, int cols, double spacing,
                                          std::uint64_t /*seed*/ = 0) {
  require(rows >= 2 && cols >= 1, errc::invalid_dimension,
          "grid needs rows >= 2 and cols >= 1");
  require(spacing > 0.0, errc::invalid_dimension, "spacing must be > 0");
  std::vector<road_node> nodes;
  nodes.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      nodes.push_back({r * cols + c, {c * spacing, r * spacing}});
  std::vector<road_edge> edges;
  auto link = [&](int a, int b) {
    const int id = static_cast<int>(edges.size());
    edges.push_back({id, a, b, 0.0});
  };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int u = r * cols + c;
      if (c + 1 < cols) {
        link(u, u + 1);
        link(u + 1, u);
      }
      if (r + 1 < rows) {
        link(u, u + cols);
        link(u + cols, u);
      }
    }
  }
  return road_network(std::move(nodes), std::move(edges));
}

inline void validate_point(const road_network& net, const map_matched_point& p) {
  require(net.has_edge(p.edge), errc::unknown_edge,
          "unknown edge " + std::to_string(p.edge));
  require(p.r >= 0.0 && p.r <= 1.0, errc::invalid_ratio,
          "moving ratio outside [0,1]");
}

inline vec2 point_position(const road_network& net, const map_matched_point& p) {
  const auto& e = net.edge(p.edge);
  return lerp(net.node(e.n1).pos, net.node(e.n2).pos, p.r);
}

inline std::optional<double> shortest_path_distance(const road_network& net,
                                                    int from, int to) {
  require(net.has_node(to), errc::unknown_node, "unknown node " + std::to_string(to));
  const auto tree = net.paths_from(from);
  const double d = tree->dist[to];
  if (!std::isfinite(d)) return std::nullopt;
  return d;
}

// Edge-id sequence of the shortest directed path, empty when from == to.
inline std::optional<std::vector<int>> shortest_path_edges(const road_network& net,
                                                           int from, int to) {
  require(net.has_node(to), errc::unknown_node, "unknown node " + std::to_string(to));
  const auto tree = net.paths_from(from);
  if (!std::isfinite(tree->dist[to])) return std::nullopt;
  std::vector<int> route;
  for (int v = to; v != from;) {
    const int eid = tree->pred_edge[v];
    route.push_back(eid);
    v = net.edge(eid).n1;
  }
  std::reverse(route.begin(), route.end());
  return route;
}

// Distance traveled along the network going from a to b: the rest of a's
// edge, the shortest node path, then b's prefix. Points sharing an edge with
// a.r <= b.r move directly along it (never longer than leaving the edge).
inline std::optional<double> rn_distance_directed(const road_network& net,
                                                  const map_matched_point& a,
                                                  const map_matched_point& b) {
  validate_point(net, a);
  validate_point(net, b);
  const auto& ea = net.edge(a.edge);
  const auto& eb = net.edge(b.edge);
  if (a.edge == b.edge && a.r <= b.r) return (b.r - a.r) * ea.length;
  const auto mid = shortest_path_distance(net, ea.n2, eb.n1);
  if (!mid) return std::nullopt;
  return (1.0 - a.r) * ea.length + *mid + b.r * eb.length;
}

// Symmetric road-network-constrained distance: min of the two directions;
// nullopt when the points sit on mutually unreachable components.
inline std::optional<double> rn_distance(const road_network& net,
                                         const map_matched_point& a,
                                         const map_matched_point& b) {
  const auto ab = rn_distance_directed(net, a, b);
  const auto ba = rn_distance_directed(net, b, a);
  if (ab && ba) return std::min(*ab, *ba);
  if (ab) return ab;
  return ba;
}

struct grid_spec {
  vec2 origin;
  double cell = 0.0;  // meters
  int rows = 0;       // y direction
  int cols = 0;       // x direction

  double extent_x() const { return cell * cols; }
  double extent_y() const { return cell * rows; }
};

struct grid_cell {
  int x = 0;
  int y = 0;
};

inline grid_cell cell_of(const grid_spec& g, vec2 c) {
  require(g.cell > 0.0 && g.rows > 0 && g.cols > 0, errc::invalid_dimension,
          "grid spec is degenerate");
  const double ox = c.x - g.origin.x;
  const double oy = c.y - g.origin.y;
  require(ox >= 0.0 && oy >= 0.0 && ox <= g.extent_x() && oy <= g.extent_y(),
          errc::out_of_extent, "coordinate outside grid extent");
  auto idx = [&](double off, int n) {
    int i = static_cast<int>(off / g.cell);
    return std::min(i, n - 1);  // max extent clamps into the last cell
  };
  return {idx(ox, g.cols), idx(oy, g.rows)};
}

inline grid_spec grid_from_network(const road_network& net, double cell) {
  require(cell > 0.0, errc::invalid_dimension, "cell size must be > 0");
  require(net.node_count() > 0, errc::invalid_dimension, "empty network");
  double minx = net.nodes()[0].pos.x, maxx = minx;
  double miny = net.nodes()[0].pos.y, maxy = miny;
  for (const auto& n : net.nodes()) {
    minx = std::min(minx, n.pos.x);
    maxx = std::max(maxx, n.pos.x);
    miny = std::min(miny, n.pos.y);
    maxy = std::max(maxy, n.pos.y);
  }
  grid_spec g;
  g.origin = {minx, miny};
  g.cell = cell;
  g.cols = std::max(1, static_cast<int>(std::ceil((maxx - minx) / cell)));
  g.rows = std::max(1, static_cast<int>(std::ceil((maxy - miny) / cell)));
  if (minx + g.cols * cell < maxx) ++g.cols;
  if (miny + g.rows * cell < maxy) ++g.rows;
  return g;
}

inline nlohmann::json network_to_json(const road_network& net) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : net.nodes()) j["nodes"].push_back({n.id, n.pos.x, n.pos.y});
  j["edges"] = nlohmann::json::array();
  for (const auto& e : net.edges()) j["edges"].push_back({e.id, e.n1, e.n2});
  return j;
}

inline road_network network_from_json(const nlohmann::json& j) {
  require(j.contains("nodes") && j.contains("edges"), errc::invalid_config,
          "network json needs \"nodes\" and \"edges\"");
  std::vector<road_node> nodes;
  for (const auto& row : j.at("nodes")) {
    require(row.is_array() && row.size() == 3, errc::malformed_row,
            "node rows are [id, x, y]");
    nodes.push_back({row[0].get<int>(), {row[1].get<double>(), row[2].get<double>()}});
  }
  std::vector<road_edge> edges;
  for (const auto& row : j.at("edges")) {
    require(row.is_array() && row.size() == 3, errc::malformed_row,
            "edge rows are [id, n1, n2]");
    edges.push_back({row[0].get<int>(), row[1].get<int>(), row[2].get<int>(), 0.0});
  }
  return road_network(std::move(nodes), std::move(edges));
}

inline road_network load_network(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io_error, "cannot open network file " + path);
  nlohmann::json j;
  in >> j;
  return network_from_json(j);
}

inline void save_network(const road_network& net, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), errc::io_error, "cannot write network file " + path);
  out << network_to_json(net).dump(2) << "\n";
}

}  // namespace fedtraj

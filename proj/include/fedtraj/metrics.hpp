#pragma once

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedtraj/dataset.hpp"
#include "fedtraj/errors.hpp"
#include "fedtraj/model.hpp"
#include "fedtraj/roadnet.hpp"

namespace fedtraj {

// Set semantics over distinct edge ids: recall = |P & G| / |G|,
// precision = |P & G| / |P|.
inline std::pair<double, double> recall_precision(const map_matched_trajectory& pred,
                                                  const map_matched_trajectory& truth) {
  require(!pred.points.empty() && !truth.points.empty(), errc::empty_list,
          "recall_precision needs non-empty trajectories");
  std::set<int> p, g;
  for (const auto& pt : pred.points) p.insert(pt.edge);
  for (const auto& pt : truth.points) g.insert(pt.edge);
  std::size_t common = 0;
  for (int e : p) common += g.count(e);
  return {static_cast<double>(common) / g.size(),
          static_cast<double>(common) / p.size()};
}

// Pointwise road-network-constrained error; pairs on mutually unreachable
// components fall back to the straight-line distance.
inline std::pair<double, double> mae_rmse(const road_network& net,
                                          const map_matched_trajectory& pred,
                                          const map_matched_trajectory& truth) {
  require(pred.points.size() == truth.points.size(), errc::length_mismatch,
          "mae_rmse needs aligned trajectories");
  require(!pred.points.empty(), errc::empty_list, "mae_rmse needs points");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t j = 0; j < pred.points.size(); ++j) {
    require(std::abs(pred.points[j].t - truth.points[j].t) <= 1e-9,
            errc::length_mismatch, "mae_rmse timestamps are misaligned");
    const auto d = rn_distance(net, truth.points[j], pred.points[j]);
    const double dj = d ? *d
                        : distance(point_position(net, truth.points[j]),
                                   point_position(net, pred.points[j]));
    abs_sum += dj;
    sq_sum += dj * dj;
  }
  const double m = static_cast<double>(pred.points.size());
  return {abs_sum / m, std::sqrt(sq_sum / m)};
}

struct client_eval {
  int client_id = 0;
  double recall = 0.0;
  double precision = 0.0;
  std::size_t n_traj = 0;
};

struct eval_report {
  double recall = 0.0;     // macro: per trajectory, per client, then across clients
  double precision = 0.0;
  double mae = 0.0;        // pooled over every recovered point
  double rmse = 0.0;
  std::size_t n_traj = 0;
  std::size_t n_points = 0;
  std::vector<client_eval> per_client;
};

// Recovers every test pair of every client. Recall/precision are averaged per
// trajectory within a client and then across clients; MAE/RMSE pool all points.
template <typename S>
eval_report evaluate(const lte_model<S>& m,
                     const std::vector<client_dataset>& clients,
                     const road_network& net, const grid_spec& grid) {
  eval_report rep;
  double abs_sum = 0.0, sq_sum = 0.0;
  double recall_sum = 0.0, precision_sum = 0.0;
  std::size_t clients_counted = 0;
  for (const auto& c : clients) {
    require(!c.data.test.empty(), errc::empty_set,
            "client " + std::to_string(c.client_id) + " has no test pairs");
    client_eval ce;
    ce.client_id = c.client_id;
    for (const auto& pair : c.data.test) {
      const auto rec = recover(m, pair.icp, net, grid);
      const auto [r, p] = recall_precision(rec, pair.truth);
      ce.recall += r;
      ce.precision += p;
      ++ce.n_traj;
      for (std::size_t j = 0; j < rec.points.size(); ++j) {
        const auto d = rn_distance(net, pair.truth.points[j], rec.points[j]);
        const double dj = d ? *d
                            : distance(point_position(net, pair.truth.points[j]),
                                       point_position(net, rec.points[j]));
        abs_sum += dj;
        sq_sum += dj * dj;
        ++rep.n_points;
      }
    }
    ce.recall /= ce.n_traj;
    ce.precision /= ce.n_traj;
    recall_sum += ce.recall;
    precision_sum += ce.precision;
    rep.n_traj += ce.n_traj;
    ++clients_counted;
    rep.per_client.push_back(ce);
  }
  require(clients_counted > 0, errc::empty_set, "no clients to evaluate");
  rep.recall = recall_sum / clients_counted;
  rep.precision = precision_sum / clients_counted;
  rep.mae = rep.n_points ? abs_sum / rep.n_points : 0.0;
  rep.rmse = rep.n_points ? std::sqrt(sq_sum / rep.n_points) : 0.0;
  return rep;
}

inline nlohmann::json report_json(const eval_report& rep) {
  nlohmann::json j;
  j["recall"] = rep.recall;
  j["precision"] = rep.precision;
  j["mae_m"] = rep.mae;
  j["rmse_m"] = rep.rmse;
  j["n_traj"] = rep.n_traj;
  j["n_points"] = rep.n_points;
  j["clients"] = nlohmann::json::array();
  for (const auto& c : rep.per_client)
    j["clients"].push_back({{"id", c.client_id},
                            {"recall", c.recall},
                            {"precision", c.precision},
                            {"n_traj", c.n_traj}});
  return j;
}

}  // namespace fedtraj

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fedtraj/dataset.hpp"
#include "fedtraj/diff.hpp"
#include "fedtraj/errors.hpp"
#include "fedtraj/metrics.hpp"
#include "fedtraj/model.hpp"
#include "fedtraj/rng.hpp"

namespace fedtraj {

struct fed_config {
  int rounds = 10;
  int clients = 20;
  double fraction = 1.0;       // sampled client share per round
  int local_epochs = 50;
  double lambda0 = 5.0;
  double l_t = 0.4;            // knowledge-preservation threshold
  int teacher_cycles = 2;
  double teacher_fraction = 0.2;
  int batch_size = 4;
  double learning_rate = 0.001;
  double clip_norm = 5.0;
  opt_method optimizer = opt_method::sgd;
  std::uint64_t seed = 0;
};

inline void validate(const fed_config& c) {
  require(c.rounds >= 0 && c.clients >= 1 && c.local_epochs >= 0 &&
              c.teacher_cycles >= 1,
          errc::invalid_dimension, "rounds/clients/epochs/cycles out of range");
  require(c.fraction > 0.0 && c.fraction <= 1.0, errc::invalid_ratio,
          "client fraction must lie in (0, 1]");
  require(c.lambda0 >= 0.0, errc::negative_lambda, "lambda0 must be >= 0");
  require(c.l_t >= 0.0 && c.l_t <= 1.0, errc::invalid_ratio,
          "l_t must lie in [0, 1]");
  require(c.teacher_fraction > 0.0 && c.teacher_fraction <= 1.0,
          errc::invalid_ratio, "teacher fraction must lie in (0, 1]");
  require(c.batch_size >= 1, errc::invalid_dimension, "batch size must be >= 1");
  require(c.learning_rate > 0.0, errc::invalid_ratio, "learning rate must be > 0");
}

// Dynamic distillation weight. Zero when the teacher is no better and the
// student is still below the threshold; otherwise
// lambda0 * 10^(min(1, 5 * (acc_tea - acc_stu)) - 1), capped at lambda0.
inline double update_lambda(double acc_tea, double acc_stu, double l_t,
                            double lambda0) {
  require(acc_tea >= 0.0 && acc_tea <= 1.0 && acc_stu >= 0.0 && acc_stu <= 1.0,
          errc::out_of_range_accuracy, "accuracies must lie in [0, 1]");
  require(lambda0 >= 0.0, errc::negative_lambda, "lambda0 must be >= 0");
  if (acc_tea <= acc_stu && acc_stu < l_t) return 0.0;
  const double expo = std::min(1.0, (acc_tea - acc_stu) * 5.0) - 1.0;
  return lambda0 * std::pow(10.0, expo);
}

// Mean per-trajectory segment recall of recover() over a validation set.
template <typename S>
double validation_accuracy(const lte_model<S>& m, const std::vector<traj_pair>& valid,
                           const road_network& net, const grid_spec& grid) {
  require(!valid.empty(), errc::empty_set, "validation set is empty");
  double acc = 0.0;
  for (const auto& pair : valid)
    acc += recall_precision(recover(m, pair.icp, net, grid), pair.truth).first;
  return acc / valid.size();
}

// Shared immutable context of one federated run.
struct fed_context {
  const road_network& net;
  const grid_spec& grid;
  lte_config model_cfg;
  fed_config cfg;
  int workers = 1;
};

// Per-round telemetry. bytes counts both directions of the exchange at four
// bytes per parameter: 2 * |sampled| * 4 * param_count.
struct round_record {
  int round = 0;
  std::vector<int> sampled;
  std::vector<double> recall_before;
  std::vector<double> recall_after;
  std::vector<double> lambdas;
  double global_recall = 0.0;
  std::uint64_t bytes = 0;
};

inline std::uint64_t comm_cost(std::uint64_t param_count, std::uint64_t participants,
                               std::uint64_t rounds) {
  return rounds * participants * param_count * 4u * 2u;
}

// One client's in-memory training state: dataset reference, local model,
// compiled per-pair caches, and the (frozen) teacher accuracy memo.
template <typename S>
class client_runtime {
 public:
  client_runtime(int id, const client_dataset& data, const fed_context& ctx)
      : id_(id), data_(&data), ctx_(&ctx), model_(ctx.model_cfg, 0) {
    for (const auto& p : data.data.train)
      train_compiled_.push_back(compile_pair<S>(p.icp, ctx.net, ctx.grid, ctx.model_cfg));
  }

  int id() const { return id_; }
  const client_dataset& data() const { return *data_; }
  lte_model<S>& model() { return model_; }
  const std::vector<compiled_pair<S>>& train_compiled() const { return train_compiled_; }

  double valid_recall(const lte_model<S>& m) const {
    return validation_accuracy(m, data_->data.valid, ctx_->net, ctx_->grid);
  }

  double teacher_recall(const lte_model<S>& teacher) const {
    if (!teacher_recall_) teacher_recall_ = valid_recall(teacher);
    return *teacher_recall_;
  }
  void invalidate_teacher_memo() { teacher_recall_.reset(); }

 private:
  int id_;
  const client_dataset* data_;
  const fed_context* ctx_;
  lte_model<S> model_;
  std::vector<compiled_pair<S>> train_compiled_;
  mutable std::optional<double> teacher_recall_;
};

namespace detail {

// One epoch of mini-batch descent on `pairs` with a fixed lambda; gradients
// average over the batch.
template <typename S>
void train_one_epoch(lte_model<S>& model, const lte_model<S>* teacher,
                     const std::vector<traj_pair>& pairs,
                     const std::vector<const compiled_pair<S>*>& compiled,
                     double lambda, const fed_config& cfg,
                     optimizer_state& opt, rng_t& rng) {
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_inplace(order, rng);
  tape<S> tp;
  train_options topt;
  topt.lambda = lambda;
  topt.teacher_forcing = model.cfg.teacher_forcing;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t stop =
        std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
    model.zero_grad();
    for (std::size_t i = start; i < stop; ++i) {
      const std::size_t idx = order[i];
      tp.reset();
      const auto loss = trajectory_loss(tp, model, lambda > 0.0 ? teacher : nullptr,
                                        *compiled[idx], pairs[idx].truth, topt, rng);
      tp.backward(loss.total);
    }
    auto grads = model.gradients();
    const S inv = S(1) / static_cast<S>(stop - start);
    for (auto& g : grads.values) g *= inv;
    model.load_parameters(sgd_step(opt, model.parameters(), grads));
  }
}

template <typename S>
std::vector<const compiled_pair<S>*> all_ptrs(const std::vector<compiled_pair<S>>& v) {
  std::vector<const compiled_pair<S>*> out;
  out.reserve(v.size());
  for (const auto& c : v) out.push_back(&c);
  return out;
}

}  // namespace detail

template <typename S>
struct local_train_result {
  parameter_vector<S> params;
  std::vector<double> lambdas;
  double recall_before = 0.0;
  double recall_after = 0.0;
};

// Meta-knowledge enhanced local training: load the global parameters, then
// run E epochs; each epoch re-evaluates teacher and student on the local
// validation split and re-derives lambda before the mini-batch sweep.
template <typename S>
local_train_result<S> local_train(client_runtime<S>& client,
                                  const parameter_vector<S>& global_params,
                                  const lte_model<S>* teacher,
                                  const fed_context& ctx, int round) {
  require(!client.data().data.train.empty(), errc::empty_train_split,
          "client " + std::to_string(client.id()) + " has no training data");
  auto& model = client.model();
  model.load_parameters(global_params);
  optimizer_state opt;
  opt.alpha = ctx.cfg.learning_rate;
  opt.clip_norm = ctx.cfg.clip_norm;
  opt.method = ctx.cfg.optimizer;
  rng_t rng = make_rng(ctx.cfg.seed, "local/" + std::to_string(client.id()) +
                                         "/round/" + std::to_string(round));
  local_train_result<S> out;
  out.recall_before = client.valid_recall(model);
  const auto compiled = detail::all_ptrs(client.train_compiled());
  for (int epoch = 0; epoch < ctx.cfg.local_epochs; ++epoch) {
    double lambda = 0.0;
    if (teacher != nullptr) {
      const double acc_tea = client.teacher_recall(*teacher);
      const double acc_stu = epoch == 0 ? out.recall_before : client.valid_recall(model);
      lambda = update_lambda(acc_tea, acc_stu, ctx.cfg.l_t, ctx.cfg.lambda0);
    }
    out.lambdas.push_back(lambda);
    detail::train_one_epoch(model, teacher, client.data().data.train, compiled,
                            lambda, ctx.cfg, opt, rng);
  }
  out.recall_after = client.valid_recall(model);
  out.params = model.parameters();
  return out;
}

// Unweighted elementwise mean; sums accumulate in 64-bit.
template <typename S>
parameter_vector<S> aggregate(const std::vector<parameter_vector<S>>& params) {
  require(!params.empty(), errc::empty_list, "aggregate needs at least one vector");
  for (const auto& p : params)
    require(p.layout == params.front().layout &&
                p.values.size() == params.front().values.size(),
            errc::layout_mismatch, "aggregate: mismatched layouts");
  parameter_vector<S> out;
  out.layout = params.front().layout;
  out.values.resize(params.front().values.size());
  const double inv = 1.0 / static_cast<double>(params.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    double acc = 0.0;
    for (const auto& p : params) acc += static_cast<double>(p.values[i]);
    out.values[i] = static_cast<S>(acc * inv);
  }
  return out;
}

// Uniform sample without replacement of max(1, round(F * N)) client ids,
// deterministic per (seed, round); returned sorted.
inline std::vector<int> sample_clients(int n_clients, double fraction,
                                       std::uint64_t seed, int round) {
  require(n_clients >= 1, errc::invalid_dimension, "need at least one client");
  require(fraction > 0.0 && fraction <= 1.0, errc::invalid_ratio,
          "fraction must lie in (0, 1]");
  const int k = std::max(1, static_cast<int>(std::llround(fraction * n_clients)));
  std::vector<int> ids(n_clients);
  for (int i = 0; i < n_clients; ++i) ids[i] = i;
  rng_t rng = make_rng(seed, "sample/round/" + std::to_string(round));
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(uniform_index(rng, n_clients - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------
// Algorithm loops

// Cyclic teacher pre-training: one model visits every client in order. A
// client whose validation recall on the incoming model reaches l_t keeps it
// as a frozen distillation reference while training on its teacher subset;
// otherwise the incoming knowledge is dropped and training runs plain.
// Stops early when a full cycle improves mean recall by < 0.005.
template <typename S>
parameter_vector<S> train_teacher(std::vector<client_runtime<S>>& clients,
                                  const fed_context& ctx) {
  require(!clients.empty(), errc::empty_list, "no clients");
  lte_model<S> teacher(ctx.model_cfg, sub_seed(ctx.cfg.seed, "teacher-init"));
  // teacher subsets: seeded choice of teacher_fraction of each train split
  std::vector<std::vector<traj_pair>> subsets(clients.size());
  std::vector<std::vector<compiled_pair<S>>> subset_compiled(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& train = clients[i].data().data.train;
    require(!train.empty(), errc::empty_teacher_subset,
            "client " + std::to_string(clients[i].id()) + " has no teacher data");
    std::vector<std::size_t> order(train.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    rng_t rng = make_rng(ctx.cfg.seed, "teacher-subset/" + std::to_string(clients[i].id()));
    shuffle_inplace(order, rng);
    const auto take = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(ctx.cfg.teacher_fraction * train.size())));
    for (std::size_t j = 0; j < take; ++j) {
      subsets[i].push_back(train[order[j]]);
      subset_compiled[i].push_back(clients[i].train_compiled()[order[j]]);
    }
  }
  double prev_mean = -1.0;
  for (int cycle = 0; cycle < ctx.cfg.teacher_cycles; ++cycle) {
    for (std::size_t i = 0; i < clients.size(); ++i) {
      optimizer_state opt;
      opt.alpha = ctx.cfg.learning_rate;
      opt.clip_norm = ctx.cfg.clip_norm;
      opt.method = ctx.cfg.optimizer;
      rng_t rng = make_rng(ctx.cfg.seed, "teacher-train/" + std::to_string(cycle) +
                                             "/" + std::to_string(clients[i].id()));
      const double acc_in = clients[i].valid_recall(teacher);
      const auto compiled = detail::all_ptrs(subset_compiled[i]);
      if (acc_in >= ctx.cfg.l_t) {
        const lte_model<S> snapshot = teacher;  // frozen reference
        const double acc_tea = acc_in;          // snapshot recall never moves
        for (int epoch = 0; epoch < ctx.cfg.local_epochs; ++epoch) {
          const double acc_stu = epoch == 0 ? acc_in : clients[i].valid_recall(teacher);
          const double lambda =
              update_lambda(acc_tea, acc_stu, ctx.cfg.l_t, ctx.cfg.lambda0);
          detail::train_one_epoch(teacher, &snapshot, subsets[i], compiled, lambda,
                                  ctx.cfg, opt, rng);
        }
      } else {
        for (int epoch = 0; epoch < ctx.cfg.local_epochs; ++epoch)
          detail::train_one_epoch<S>(teacher, nullptr, subsets[i], compiled, 0.0,
                                     ctx.cfg, opt, rng);
      }
    }
    double mean = 0.0;
    for (auto& c : clients) mean += c.valid_recall(teacher);
    mean /= clients.size();
    if (prev_mean >= 0.0 && mean - prev_mean < 0.005) break;
    prev_mean = mean;
  }
  return teacher.parameters();
}

template <typename S>
struct fed_result {
  parameter_vector<S> global;
  std::vector<round_record> records;
};

// Synchronous FedAvg-style rounds with client sampling, teacher-guided local
// training, and unweighted averaging. Fail-stop: any client error aborts the
// round. Results reduce in client-id order regardless of worker count.
template <typename S>
fed_result<S> run_rounds(std::vector<client_runtime<S>>& clients,
                         const lte_model<S>* teacher, const fed_context& ctx,
                         parameter_vector<S> global, int first_round = 1) {
  validate(ctx.cfg);
  require(static_cast<int>(clients.size()) == ctx.cfg.clients,
          errc::invalid_dimension, "client count disagrees with the config");
  fed_result<S> out;
  lte_model<S> probe(ctx.model_cfg, 0);  // scratch instance for global eval
  const std::uint64_t param_count = global.values.size();
  for (int round = first_round; round < first_round + ctx.cfg.rounds; ++round) {
    const auto sampled = sample_clients(ctx.cfg.clients, ctx.cfg.fraction,
                                        ctx.cfg.seed, round);
    std::vector<local_train_result<S>> results(sampled.size());
    auto run_one = [&](std::size_t i) {
      results[i] = local_train(clients[sampled[i]], global, teacher, ctx, round);
    };
    if (ctx.workers <= 1) {
      for (std::size_t i = 0; i < sampled.size(); ++i) run_one(i);
    } else {
      std::atomic<std::size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mu;
      auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < sampled.size();
             i = next.fetch_add(1)) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lk(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      };
      std::vector<std::thread> pool;
      const int n_workers = std::min<int>(ctx.workers, static_cast<int>(sampled.size()));
      pool.reserve(n_workers);
      for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
      if (failure) std::rethrow_exception(failure);
    }
    std::vector<parameter_vector<S>> uploads;
    uploads.reserve(results.size());
    for (auto& r : results) uploads.push_back(std::move(r.params));
    global = aggregate(uploads);

    round_record rec;
    rec.round = round;
    rec.sampled = sampled;
    for (const auto& r : results) {
      rec.recall_before.push_back(r.recall_before);
      rec.recall_after.push_back(r.recall_after);
      rec.lambdas.insert(rec.lambdas.end(), r.lambdas.begin(), r.lambdas.end());
    }
    probe.load_parameters(global);
    double mean = 0.0;
    for (auto& c : clients) mean += c.valid_recall(probe);
    rec.global_recall = mean / clients.size();
    rec.bytes = comm_cost(param_count, sampled.size(), 1);
    out.records.push_back(std::move(rec));
  }
  out.global = std::move(global);
  return out;
}

inline std::string telemetry_csv_header() {
  return "round,sampled_ids,mean_lambda,global_recall,bytes";
}

inline std::string telemetry_csv_row(const round_record& rec) {
  std::ostringstream os;
  os << rec.round << ',';
  for (std::size_t i = 0; i < rec.sampled.size(); ++i)
    os << (i ? ";" : "") << rec.sampled[i];
  double mean_lambda = 0.0;
  for (double l : rec.lambdas) mean_lambda += l;
  if (!rec.lambdas.empty()) mean_lambda /= rec.lambdas.size();
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", mean_lambda);
  os << ',' << buf;
  std::snprintf(buf, sizeof(buf), "%.9g", rec.global_recall);
  os << ',' << buf << ',' << rec.bytes;
  return os.str();
}

}  // namespace fedtraj

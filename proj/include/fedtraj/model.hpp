#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedtraj/checkpoint.hpp"
#include "fedtraj/diff.hpp"
#include "fedtraj/errors.hpp"
#include "fedtraj/rng.hpp"
#include "fedtraj/roadnet.hpp"
#include "fedtraj/trajectory.hpp"

namespace fedtraj {

struct lte_config {
  int hidden_dim = 64;
  int seg_embed_dim = 32;
  int n_blocks = 1;
  int n_segments = 0;   // road segment classes, edge count of the network
  int grid_cols = 0;
  int grid_rows = 0;
  int tid_vocab = 0;
  double dropout = 0.5;
  double mu = 1.0;            // ratio-loss weight
  double gamma = 125.0;       // mask bandwidth
  double mask_radius = 300.0; // meters, hard cutoff of the constraint mask
  double teacher_forcing = 1.0;
};

inline void validate(const lte_config& c) {
  require(c.hidden_dim >= 1 && c.seg_embed_dim >= 1 && c.n_blocks >= 1,
          errc::invalid_dimension, "model dimensions must be >= 1");
  require(c.n_segments >= 1 && c.grid_cols >= 1 && c.grid_rows >= 1 && c.tid_vocab >= 1,
          errc::invalid_dimension, "vocabulary sizes must be >= 1");
  require(c.dropout >= 0.0 && c.dropout < 1.0, errc::invalid_ratio,
          "dropout must lie in [0, 1)");
  require(c.mu >= 0.0, errc::invalid_ratio, "mu must be >= 0");
  require(c.gamma > 0.0, errc::invalid_ratio, "gamma must be > 0");
  require(c.mask_radius > 0.0, errc::invalid_ratio, "mask radius must be > 0");
  require(c.teacher_forcing >= 0.0 && c.teacher_forcing <= 1.0, errc::invalid_ratio,
          "teacher forcing ratio must lie in [0, 1]");
}

// Closed-form trainable scalar count. The per-class decoder cost is one
// wc row plus one seg_emb row (linear in the hidden size, no quadratic term).
inline std::int64_t lte_param_count(const lte_config& c) {
  const std::int64_t d = c.hidden_dim, se = c.seg_embed_dim, L = c.n_segments;
  std::int64_t n = 0;
  n += (c.grid_cols + c.grid_rows + c.tid_vocab) * d;     // token embeddings
  n += 3 * (d * 2 * d + d);                               // encoder GRU gates
  n += d * (d + se + 1) + d;                              // decoder block 0
  n += (c.n_blocks - 1) * (d * 2 * d + d);                // deeper blocks
  n += d * d + d;                                         // head dense
  n += L * d;                                             // wc
  n += L * se;                                            // segment embeddings
  n += d * se + d;                                        // Emb-layer rnn
  n += (d + se) + 1;                                      // ratio head
  return n;
}

// Lightweight trajectory embedding model: GRU encoder over grid tokens and a
// decoder of stacked (RNN cell + MLP multi-task head) blocks with a
// constraint-masked segment softmax.
template <typename S>
class lte_model {
 public:
  lte_config cfg;

  param<S> emb_x, emb_y, emb_tid;
  param<S> enc_wr, enc_br, enc_wz, enc_bz, enc_wh, enc_bh;
  std::vector<param<S>> dec_w, dec_b;
  param<S> head_w, head_b;
  param<S> wc;
  param<S> seg_emb;
  param<S> segrnn_w, segrnn_b;
  param<S> ratio_w, ratio_b;

  lte_model(const lte_config& c, std::uint64_t seed) : cfg(c) {
    validate(cfg);
    const int d = cfg.hidden_dim, se = cfg.seg_embed_dim, L = cfg.n_segments;
    emb_x = param<S>("emb_x", cfg.grid_cols, d);
    emb_y = param<S>("emb_y", cfg.grid_rows, d);
    emb_tid = param<S>("emb_tid", cfg.tid_vocab, d);
    enc_wr = param<S>("enc.wr", d, 2 * d);
    enc_br = param<S>("enc.br", d, 1);
    enc_wz = param<S>("enc.wz", d, 2 * d);
    enc_bz = param<S>("enc.bz", d, 1);
    enc_wh = param<S>("enc.wh", d, 2 * d);
    enc_bh = param<S>("enc.bh", d, 1);
    for (int i = 0; i < cfg.n_blocks; ++i) {
      // block 0 consumes [h, seg_emb(e_prev), r_prev]; deeper blocks [h, h_below]
      const int width = (i == 0) ? d + se + 1 : 2 * d;
      const std::string tag = "dec" + std::to_string(i);
      dec_w.emplace_back(tag + ".w", d, width);
      dec_b.emplace_back(tag + ".b", d, 1);
    }
    head_w = param<S>("head.w", d, d);
    head_b = param<S>("head.b", d, 1);
    wc = param<S>("wc", L, d);
    seg_emb = param<S>("seg_emb", L, se);
    segrnn_w = param<S>("segrnn.w", d, se);
    segrnn_b = param<S>("segrnn.b", d, 1);
    ratio_w = param<S>("ratio.w", 1, d + se);
    ratio_b = param<S>("ratio.b", 1, 1);
    rng_t rng = make_rng(seed, "model-init");
    for (param<S>* p : params()) {
      // fan_in: the layer's input width; embedding tables use their width
      const Eigen::Index fan = p->value.cols() == 1 ? fan_of_bias(p) : p->value.cols();
      p->init_uniform(rng, fan);
    }
  }

  std::vector<param<S>*> params() {
    std::vector<param<S>*> out{&emb_x, &emb_y,  &emb_tid, &enc_wr, &enc_br,
                               &enc_wz, &enc_bz, &enc_wh, &enc_bh};
    for (std::size_t i = 0; i < dec_w.size(); ++i) {
      out.push_back(&dec_w[i]);
      out.push_back(&dec_b[i]);
    }
    for (param<S>* p : {&head_w, &head_b, &wc, &seg_emb, &segrnn_w, &segrnn_b,
                        &ratio_w, &ratio_b})
      out.push_back(p);
    return out;
  }

  param_layout layout() { return layout_of(params()); }
  parameter_vector<S> parameters() { return flatten(params()); }
  parameter_vector<S> gradients() { return flatten_grads(params()); }
  void load_parameters(const parameter_vector<S>& pv) { fedtraj::load(params(), pv); }
  void zero_grad() {
    for (param<S>* p : params()) p->zero_grad();
  }
  std::int64_t param_count() { return layout_size(layout()); }

 private:
  Eigen::Index fan_of_bias(const param<S>* b) const {
    if (b == &enc_br || b == &enc_bz || b == &enc_bh) return 2 * cfg.hidden_dim;
    for (std::size_t i = 0; i < dec_b.size(); ++i)
      if (b == &dec_b[i]) return dec_w[i].value.cols();
    if (b == &head_b) return cfg.hidden_dim;
    if (b == &segrnn_b) return cfg.seg_embed_dim;
    if (b == &ratio_b) return cfg.hidden_dim + cfg.seg_embed_dim;
    return 1;
  }
};

// Per-edge weight exp(-d^2 / gamma) with a hard zero beyond the radius; d is
// the perpendicular distance from the anchor to the edge segment.
template <typename S>
vec_x<S> constraint_mask(const road_network& net, vec2 anchor, double gamma,
                         double radius) {
  vec_x<S> w(net.edge_count());
  for (const auto& e : net.edges()) {
    const double d = point_segment_distance(anchor, net.node(e.n1).pos,
                                            net.node(e.n2).pos);
    w[e.id] = d <= radius ? static_cast<S>(std::exp(-(d * d) / gamma)) : S(0);
  }
  return w;
}

template <typename S>
int argmax_lowest(const vec_x<S>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Per-token keep masks for the encoder (train mode only).
struct dropout_plan {
  double rate = 0.0;
  std::vector<std::vector<std::uint8_t>> keep;  // one mask per token

  static dropout_plan draw(double rate, int tokens, int dim, rng_t& rng) {
    dropout_plan plan;
    plan.rate = rate;
    plan.keep.resize(tokens);
    for (auto& mask : plan.keep) {
      mask.resize(dim);
      for (auto& k : mask) k = u01(rng) >= rate ? 1 : 0;
    }
    return plan;
  }
};

// Encoder: summed x/y/tid token embeddings through the GRU cell, zero initial
// state; returns the final hidden state.
template <typename E, typename M>
typename E::ref encode(E& eng, M& m, const std::vector<grid_token>& tokens,
                       const dropout_plan* dropout = nullptr) {
  using S = typename E::scalar;
  require(!tokens.empty(), errc::empty_list, "cannot embed an empty token sequence");
  auto h = eng.leaf(vec_x<S>::Zero(m.cfg.hidden_dim));
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const auto& tok = tokens[k];
    auto x = eng.add(eng.add(eng.embed(m.emb_x, tok.x), eng.embed(m.emb_y, tok.y)),
                     eng.embed(m.emb_tid, tok.tid));
    if (dropout && dropout->rate > 0.0)
      x = eng.dropout(x, dropout->keep[k], static_cast<S>(1.0 - dropout->rate));
    h = gru_cell(eng, m.enc_wr, m.enc_br, m.enc_wz, m.enc_bz, m.enc_wh, m.enc_bh,
                 h, x);
  }
  return h;
}

// Eval-mode convenience wrapper over encode().
template <typename S>
vec_x<S> embed_trajectory(const lte_model<S>& m, const std::vector<grid_token>& tokens) {
  eval_engine<S> eng;
  return encode(eng, m, tokens);
}

template <typename E>
struct decode_refs {
  std::vector<typename E::ref> hidden;  // one per block
  typename E::ref logits;               // pre-mask segment logits
  typename E::ref probs;
  typename E::ref ratio;                // scalar in [0,1]
  int segment = 0;                      // argmax prediction
};

// One decoder step. The previous segment enters through its embedding, the
// previous ratio as a raw scalar. `forced_segment` drives the segment
// embedding / ratio head during teacher-forced training; inference leaves it
// empty and uses the argmax.
template <typename E, typename M>
decode_refs<E> decode_step_refs(E& eng, M& m,
                                const std::vector<typename E::ref>& h_prev,
                                int e_prev, double r_prev,
                                const vec_x<typename E::scalar>& mask,
                                std::optional<int> forced_segment = {}) {
  using S = typename E::scalar;
  require(static_cast<Eigen::Index>(mask.size()) ==
              static_cast<Eigen::Index>(m.cfg.n_segments),
          errc::shape_mismatch, "mask length must equal the segment count");
  decode_refs<E> out;
  vec_x<S> r_in(1);
  r_in[0] = static_cast<S>(r_prev);
  auto x = eng.concat(eng.embed(m.seg_emb, e_prev), eng.leaf(std::move(r_in)));
  for (int b = 0; b < m.cfg.n_blocks; ++b) {
    x = eng.tanh(eng.affine(m.dec_w[b], m.dec_b[b], eng.concat(h_prev[b], x)));
    out.hidden.push_back(x);
  }
  auto h_d = eng.affine(m.head_w, m.head_b, x);
  out.logits = eng.linear(m.wc, h_d);
  out.probs = eng.masked_softmax(out.logits, mask);
  out.segment = argmax_lowest(eng.value(out.probs));
  const int e_sel = forced_segment.value_or(out.segment);
  require(e_sel >= 0 && e_sel < m.cfg.n_segments, errc::index_out_of_range,
          "segment id out of range");
  auto se = eng.embed(m.seg_emb, e_sel);
  auto h_e = eng.relu(eng.add(h_d, eng.tanh(eng.affine(m.segrnn_w, m.segrnn_b, se))));
  out.ratio = eng.clamp01(eng.relu(eng.affine(m.ratio_w, m.ratio_b, eng.concat(h_e, se))));
  return out;
}

template <typename S>
struct decode_step_output {
  vec_x<S> probs;
  int segment = 0;
  S ratio = 0;
  std::vector<vec_x<S>> hidden;
};

template <typename S>
decode_step_output<S> decode_step(const lte_model<S>& m,
                                  const std::vector<vec_x<S>>& h_prev, int e_prev,
                                  double r_prev, const vec_x<S>& mask) {
  eval_engine<S> eng;
  auto refs = decode_step_refs(eng, m, h_prev, e_prev, r_prev, mask);
  return {refs.probs, refs.segment, eng.value(refs.ratio)[0], refs.hidden};
}

// ---------------------------------------------------------------------------
// Per-pair preprocessing shared by training and inference

// Anchor positions on the epsilon grid: observed position where a point
// exists, linear interpolation between the bracketing observations elsewhere.
inline std::vector<vec2> grid_anchors(const incomplete_trajectory& icp,
                                      const road_network& net) {
  const int steps = icp.step_count();
  std::vector<vec2> anchors(steps);
  std::size_t seg = 0;
  std::vector<vec2> obs_pos(icp.points.size());
  std::vector<int> obs_tid(icp.points.size());
  for (std::size_t i = 0; i < icp.points.size(); ++i) {
    obs_pos[i] = point_position(net, icp.points[i]);
    obs_tid[i] = static_cast<int>(
        std::llround((icp.points[i].t - icp.t_start) / icp.epsilon));
  }
  for (int k = 0; k < steps; ++k) {
    while (seg + 1 < icp.points.size() && obs_tid[seg + 1] <= k) ++seg;
    if (obs_tid[seg] == k || seg + 1 >= icp.points.size()) {
      anchors[k] = obs_pos[seg];
    } else {
      const double f = static_cast<double>(k - obs_tid[seg]) /
                       static_cast<double>(obs_tid[seg + 1] - obs_tid[seg]);
      anchors[k] = lerp(obs_pos[seg], obs_pos[seg + 1], f);
    }
  }
  return anchors;
}

// Everything about one incomplete trajectory that is constant across epochs:
// encoder tokens, per-step constraint masks, and the observation schedule.
template <typename S>
struct compiled_pair {
  std::vector<grid_token> tokens;
  std::vector<vec_x<S>> masks;
  std::vector<int> observed_index;  // step -> index into icp.points, -1 if missing
  int steps = 0;
};

template <typename S>
compiled_pair<S> compile_pair(const incomplete_trajectory& icp,
                              const road_network& net, const grid_spec& grid,
                              const lte_config& cfg) {
  compiled_pair<S> cp;
  cp.steps = icp.step_count();
  cp.tokens = to_grid_sequence(icp, net, grid);
  const auto anchors = grid_anchors(icp, net);
  cp.masks.reserve(cp.steps);
  for (const vec2& a : anchors)
    cp.masks.push_back(constraint_mask<S>(net, a, cfg.gamma, cfg.mask_radius));
  cp.observed_index.assign(cp.steps, -1);
  for (std::size_t i = 0; i < icp.points.size(); ++i) {
    const int tid = static_cast<int>(
        std::llround((icp.points[i].t - icp.t_start) / icp.epsilon));
    require(tid >= 0 && tid < cp.steps, errc::malformed_row,
            "observation off the epsilon grid");
    cp.observed_index[tid] = static_cast<int>(i);
  }
  return cp;
}

// ---------------------------------------------------------------------------
// Recovery (inference)

// Emits one map-matched point per grid timestamp. Observed points pass
// through verbatim and drive the next step; missing steps take the decoder's
// argmax segment and clamped ratio.
template <typename S>
map_matched_trajectory recover_compiled(const lte_model<S>& m,
                                        const compiled_pair<S>& cp,
                                        const incomplete_trajectory& icp) {
  require(!icp.points.empty(), errc::empty_list, "empty incomplete trajectory");
  eval_engine<S> eng;
  std::vector<vec_x<S>> hidden(m.cfg.n_blocks, vec_x<S>::Zero(m.cfg.hidden_dim));
  hidden[0] = encode(eng, m, cp.tokens);
  int e_prev = icp.points.front().edge;
  double r_prev = icp.points.front().r;
  map_matched_trajectory out;
  out.epsilon = icp.epsilon;
  out.points.reserve(cp.steps);
  for (int k = 0; k < cp.steps; ++k) {
    auto step = decode_step_refs(eng, m, hidden, e_prev, r_prev, cp.masks[k]);
    hidden = step.hidden;
    map_matched_point p;
    if (cp.observed_index[k] >= 0) {
      p = icp.points[cp.observed_index[k]];
    } else {
      p.edge = step.segment;
      p.r = static_cast<double>(eng.value(step.ratio)[0]);
      p.t = icp.t_start + k * icp.epsilon;
    }
    out.points.push_back(p);
    e_prev = p.edge;
    r_prev = p.r;
  }
  return out;
}

template <typename S>
map_matched_trajectory recover(const lte_model<S>& m,
                               const incomplete_trajectory& icp,
                               const road_network& net, const grid_spec& grid) {
  return recover_compiled(m, compile_pair<S>(icp, net, grid, m.cfg), icp);
}

// ---------------------------------------------------------------------------
// Losses

template <typename S>
S total_loss(S local, S dist, double lambda) {
  require(lambda >= 0.0, errc::negative_lambda, "lambda must be >= 0");
  return static_cast<S>(static_cast<double>(local) + lambda * static_cast<double>(dist));
}

// Mean cross entropy over steps plus mu * ratio MSE.
template <typename S>
S local_loss(const std::vector<vec_x<S>>& step_probs, const std::vector<S>& ratios,
             const map_matched_trajectory& truth, double mu) {
  require(step_probs.size() == truth.points.size() && ratios.size() == step_probs.size(),
          errc::length_mismatch, "prediction step count must equal the truth length");
  require(!step_probs.empty(), errc::length_mismatch, "empty step sequence");
  double ce = 0.0;
  std::vector<S> target_r(truth.points.size());
  for (std::size_t k = 0; k < step_probs.size(); ++k) {
    ce += static_cast<double>(cross_entropy<S>(step_probs[k], truth.points[k].edge));
    target_r[k] = static_cast<S>(truth.points[k].r);
  }
  const S l2 = mse<S>(ratios, target_r);
  return static_cast<S>(ce / step_probs.size() + mu * static_cast<double>(l2));
}

// Mean over steps of || [logits, ratio]_teacher - [logits, ratio]_student ||^2,
// on the pre-mask logits.
template <typename S>
S distill_loss(const std::vector<vec_x<S>>& tea_logits, const std::vector<S>& tea_ratio,
               const std::vector<vec_x<S>>& stu_logits, const std::vector<S>& stu_ratio) {
  require(tea_logits.size() == stu_logits.size() && tea_ratio.size() == stu_ratio.size() &&
              tea_logits.size() == tea_ratio.size(),
          errc::length_mismatch, "teacher/student step counts differ");
  require(!tea_logits.empty(), errc::length_mismatch, "empty step sequence");
  double acc = 0.0;
  for (std::size_t k = 0; k < tea_logits.size(); ++k) {
    require(tea_logits[k].size() == stu_logits[k].size(), errc::length_mismatch,
            "teacher/student logit widths differ");
    acc += static_cast<double>((tea_logits[k] - stu_logits[k]).squaredNorm());
    const double dr = static_cast<double>(tea_ratio[k]) - static_cast<double>(stu_ratio[k]);
    acc += dr * dr;
  }
  return static_cast<S>(acc / tea_logits.size());
}

template <typename S>
struct step_trace {
  std::vector<vec_x<S>> logits;
  std::vector<S> ratios;
  std::vector<int> fed_segment;   // e_prev actually fed at each step
  std::vector<double> fed_ratio;  // r_prev actually fed at each step
};

// Frozen forward pass over a fixed input schedule; used for teacher outputs.
template <typename S>
step_trace<S> traced_forward(const lte_model<S>& m, const compiled_pair<S>& cp,
                             const std::vector<int>& fed_segment,
                             const std::vector<double>& fed_ratio,
                             const std::vector<int>& head_segment) {
  eval_engine<S> eng;
  std::vector<vec_x<S>> hidden(m.cfg.n_blocks, vec_x<S>::Zero(m.cfg.hidden_dim));
  hidden[0] = encode(eng, m, cp.tokens);
  step_trace<S> trace;
  for (int k = 0; k < cp.steps; ++k) {
    auto step = decode_step_refs(eng, m, hidden, fed_segment[k], fed_ratio[k],
                                 cp.masks[k], head_segment[k]);
    hidden = step.hidden;
    trace.logits.push_back(eng.value(step.logits));
    trace.ratios.push_back(eng.value(step.ratio)[0]);
  }
  trace.fed_segment = fed_segment;
  trace.fed_ratio = fed_ratio;
  return trace;
}

template <typename S>
struct loss_refs {
  typename tape<S>::id total;
  typename tape<S>::id local;
  S local_value;
  S distill_value;
  S total_value;
};

struct train_options {
  double lambda = 0.0;
  double teacher_forcing = 1.0;
  bool use_dropout = true;
};

// Records Eq.-style total = local + lambda * distill for one pair onto the
// tape. Teacher forcing feeds the ground-truth (segment, ratio) into the next
// step with probability `teacher_forcing`; the multi-task head always sees the
// true segment during training. The teacher replays the student's exact input
// schedule so both representations condition on the same prefix.
template <typename S>
loss_refs<S> trajectory_loss(tape<S>& tp, lte_model<S>& m,
                             const lte_model<S>* teacher, const compiled_pair<S>& cp,
                             const map_matched_trajectory& truth,
                             const train_options& opt, rng_t& rng) {
  require(static_cast<int>(truth.points.size()) == cp.steps, errc::length_mismatch,
          "truth length must equal the grid step count");
  require(opt.lambda >= 0.0, errc::negative_lambda, "lambda must be >= 0");
  tape_engine<S> eng{tp};
  const dropout_plan plan =
      opt.use_dropout && m.cfg.dropout > 0.0
          ? dropout_plan::draw(m.cfg.dropout, static_cast<int>(cp.tokens.size()),
                               m.cfg.hidden_dim, rng)
          : dropout_plan{};
  std::vector<typename tape<S>::id> hidden;
  {
    auto h0 = encode(eng, m, cp.tokens, plan.rate > 0.0 ? &plan : nullptr);
    hidden.push_back(h0);
    for (int b = 1; b < m.cfg.n_blocks; ++b)
      hidden.push_back(eng.leaf(vec_x<S>::Zero(m.cfg.hidden_dim)));
  }
  int e_prev = truth.points.front().edge;
  double r_prev = truth.points.front().r;
  std::vector<int> fed_segment;
  std::vector<double> fed_ratio;
  std::vector<int> head_segment;
  typename tape<S>::id ce_sum{}, sq_sum{}, dist_sum{};
  std::vector<typename tape<S>::id> stu_logits, stu_ratio;
  bool first = true;
  for (int k = 0; k < cp.steps; ++k) {
    fed_segment.push_back(e_prev);
    fed_ratio.push_back(r_prev);
    head_segment.push_back(truth.points[k].edge);
    auto step = decode_step_refs(eng, m, hidden, e_prev, r_prev, cp.masks[k],
                                 truth.points[k].edge);
    hidden = step.hidden;
    auto ce = tp.cross_entropy_op(step.probs, truth.points[k].edge);
    vec_x<S> rt(1);
    rt[0] = static_cast<S>(truth.points[k].r);
    auto sq = tp.sq_dist_const(step.ratio, std::move(rt));
    ce_sum = first ? ce : tp.add(ce_sum, ce);
    sq_sum = first ? sq : tp.add(sq_sum, sq);
    first = false;
    stu_logits.push_back(step.logits);
    stu_ratio.push_back(step.ratio);
    const bool force =
        opt.teacher_forcing >= 1.0 || u01(rng) < opt.teacher_forcing;
    if (force) {
      e_prev = truth.points[k].edge;
      r_prev = truth.points[k].r;
    } else {
      e_prev = step.segment;
      r_prev = static_cast<double>(eng.value(step.ratio)[0]);
    }
  }
  const S inv_steps = S(1) / static_cast<S>(cp.steps);
  auto l1 = tp.scale(ce_sum, inv_steps);
  auto l2 = tp.scale(sq_sum, inv_steps);
  auto local = tp.add(l1, tp.scale(l2, static_cast<S>(m.cfg.mu)));
  loss_refs<S> out;
  out.local = local;
  out.local_value = tp.value(local)[0];
  out.distill_value = S(0);
  if (teacher != nullptr && opt.lambda > 0.0) {
    const step_trace<S> tea =
        traced_forward(*teacher, cp, fed_segment, fed_ratio, head_segment);
    bool dfirst = true;
    for (int k = 0; k < cp.steps; ++k) {
      auto dl = tp.sq_dist_const(stu_logits[k], tea.logits[k]);
      vec_x<S> tr(1);
      tr[0] = tea.ratios[k];
      auto dr = tp.sq_dist_const(stu_ratio[k], std::move(tr));
      auto d = tp.add(dl, dr);
      dist_sum = dfirst ? d : tp.add(dist_sum, d);
      dfirst = false;
    }
    auto dist = tp.scale(dist_sum, inv_steps);
    out.distill_value = tp.value(dist)[0];
    out.total = tp.add(local, tp.scale(dist, static_cast<S>(opt.lambda)));
  } else {
    out.total = local;
  }
  out.total_value = tp.value(out.total)[0];
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint wrappers

template <typename S>
void save_checkpoint(lte_model<S>& m, const std::string& path) {
  save_checkpoint(m.parameters(), path);
}

template <typename S>
void load_checkpoint(lte_model<S>& m, const std::string& path) {
  m.load_parameters(load_checkpoint<S>(path));
}

}  // namespace fedtraj

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fedtraj/errors.hpp"
#include "fedtraj/rng.hpp"

namespace fedtraj {

template <typename S>
using vec_x = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using mat_x = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Parameters and flat parameter vectors

// One named trainable tensor with its gradient accumulator. Vectors are
// stored as (n, 1) matrices so one type covers weights, biases and tables.
template <typename S>
struct param {
  std::string name;
  mat_x<S> value;
  mat_x<S> grad;

  param() = default;
  param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(mat_x<S>::Zero(rows, cols)),
        grad(mat_x<S>::Zero(rows, cols)) {}

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }

  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), filled in storage order
  void init_uniform(rng_t& rng, Eigen::Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, fan_in)));
    for (Eigen::Index i = 0; i < value.size(); ++i)
      value.data()[i] = static_cast<S>(uniform_range(rng, -bound, bound));
  }
};

struct layout_segment {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 0;

  std::int64_t size() const { return rows * cols; }
  friend bool operator==(const layout_segment& a, const layout_segment& b) {
    return a.name == b.name && a.rows == b.rows && a.cols == b.cols;
  }
};

using param_layout = std::vector<layout_segment>;

inline std::int64_t layout_size(const param_layout& layout) {
  std::int64_t n = 0;
  for (const auto& s : layout) n += s.size();
  return n;
}

// Flat, ordered view of every trainable scalar of one model; the unit of
// federated exchange and checkpointing.
template <typename S>
struct parameter_vector {
  std::vector<S> values;
  param_layout layout;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const parameter_vector& a, const parameter_vector& b) {
    return a.layout == b.layout && a.values == b.values;
  }
};

template <typename S>
param_layout layout_of(const std::vector<param<S>*>& params) {
  param_layout layout;
  layout.reserve(params.size());
  for (const auto* p : params)
    layout.push_back({p->name, p->value.rows(), p->value.cols()});
  return layout;
}

template <typename S>
parameter_vector<S> flatten(const std::vector<param<S>*>& params) {
  parameter_vector<S> pv;
  pv.layout = layout_of(params);
  pv.values.reserve(static_cast<std::size_t>(layout_size(pv.layout)));
  for (const auto* p : params)
    pv.values.insert(pv.values.end(), p->value.data(), p->value.data() + p->value.size());
  return pv;
}

template <typename S>
parameter_vector<S> flatten_grads(const std::vector<param<S>*>& params) {
  parameter_vector<S> pv;
  pv.layout = layout_of(params);
  pv.values.reserve(static_cast<std::size_t>(layout_size(pv.layout)));
  for (const auto* p : params)
    pv.values.insert(pv.values.end(), p->grad.data(), p->grad.data() + p->grad.size());
  return pv;
}

template <typename S>
void load(const std::vector<param<S>*>& params, const parameter_vector<S>& pv) {
  require(pv.layout == layout_of(params), errc::layout_mismatch,
          "parameter vector layout does not match the model");
  require(static_cast<std::int64_t>(pv.values.size()) == layout_size(pv.layout),
          errc::layout_mismatch, "parameter vector length does not match its layout");
  std::size_t off = 0;
  for (auto* p : params) {
    std::copy(pv.values.begin() + off, pv.values.begin() + off + p->value.size(),
              p->value.data());
    off += static_cast<std::size_t>(p->value.size());
  }
}

// ---------------------------------------------------------------------------
// Plain forward ops (also the building blocks of the eval engine)

template <typename S>
vec_x<S> dense_forward(const mat_x<S>& W, const vec_x<S>& b, const vec_x<S>& x) {
  require(W.cols() == x.size() && W.rows() == b.size(), errc::shape_mismatch,
          "dense: W is " + std::to_string(W.rows()) + "x" + std::to_string(W.cols()) +
              ", x has " + std::to_string(x.size()) + ", b has " + std::to_string(b.size()));
  return W * x + b;
}

template <typename S>
vec_x<S> concat(const vec_x<S>& a, const vec_x<S>& b) {
  vec_x<S> out(a.size() + b.size());
  out.head(a.size()) = a;
  out.tail(b.size()) = b;
  return out;
}

template <typename S>
vec_x<S> rnn_cell_forward(const mat_x<S>& W, const vec_x<S>& b,
                          const vec_x<S>& h_prev, const vec_x<S>& x) {
  return dense_forward(W, b, concat(h_prev, x)).array().tanh().matrix();
}

template <typename S>
struct gru_weights {
  const mat_x<S>& Wr;
  const vec_x<S>& br;
  const mat_x<S>& Wz;
  const vec_x<S>& bz;
  const mat_x<S>& Wh;
  const vec_x<S>& bh;
};

template <typename S>
vec_x<S> sigmoid(const vec_x<S>& x) {
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

// r = sig(Wr [h,x] + br); z = sig(Wz [h,x] + bz);
// hc = tanh(Wh [r*h, x] + bh); h' = (1-z)*h + z*hc
template <typename S>
vec_x<S> gru_cell_forward(const gru_weights<S>& w, const vec_x<S>& h_prev,
                          const vec_x<S>& x) {
  const vec_x<S> hx = concat(h_prev, x);
  const vec_x<S> r = sigmoid<S>(dense_forward(w.Wr, w.br, hx));
  const vec_x<S> z = sigmoid<S>(dense_forward(w.Wz, w.bz, hx));
  const vec_x<S> rh = (r.array() * h_prev.array()).matrix();
  const vec_x<S> hc = dense_forward(w.Wh, w.bh, concat(rh, x)).array().tanh().matrix();
  return ((S(1) - z.array()) * h_prev.array() + z.array() * hc.array()).matrix();
}

// Weighted softmax over the masked support. Zero-mask entries come out as
// exact zeros; an all-zero mask falls back to the plain softmax so degenerate
// geometry cannot stall training.
template <typename S>
vec_x<S> masked_softmax(const vec_x<S>& logits, const vec_x<S>& mask) {
  require(logits.size() == mask.size(), errc::length_mismatch,
          "masked_softmax: logits and mask lengths differ");
  require(logits.size() > 0, errc::length_mismatch, "masked_softmax: empty input");
  bool any = false;
  S max_logit = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[i] > S(0) && (!any || logits[i] > max_logit)) {
      max_logit = logits[i];
      any = true;
    }
  }
  const bool fallback = !any;
  if (fallback) max_logit = logits.maxCoeff();
  vec_x<S> out = vec_x<S>::Zero(logits.size());
  double sum = 0.0;  // 64-bit accumulation
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const S w = fallback ? S(1) : mask[i];
    if (w > S(0)) {
      out[i] = w * std::exp(logits[i] - max_logit);
      sum += static_cast<double>(out[i]);
    }
  }
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    out[i] = static_cast<S>(static_cast<double>(out[i]) / sum);
  return out;
}

inline constexpr double ce_floor = 1e-12;

template <typename S>
S cross_entropy(const vec_x<S>& probs, int target) {
  require(target >= 0 && target < probs.size(), errc::index_out_of_range,
          "cross_entropy: target class out of range");
  return static_cast<S>(-std::log(static_cast<double>(probs[target]) + ce_floor));
}

template <typename S>
S mse(const std::vector<S>& pred, const std::vector<S>& truth) {
  require(pred.size() == truth.size(), errc::length_mismatch,
          "mse: sequence lengths differ");
  require(!pred.empty(), errc::length_mismatch, "mse: empty sequences");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
    acc += d * d;
  }
  return static_cast<S>(acc / pred.size());
}

// ---------------------------------------------------------------------------
// Reverse-mode tape

// Records a forward pass as a flat node list; backward() replays it in
// reverse, accumulating into param::grad. One recorded graph supports one
// backward pass; reset() re-arms the tape.
template <typename S>
class tape {
 public:
  using id = std::int32_t;

  id leaf(vec_x<S> v) { return push(std::move(v), nullptr); }

  id embed(param<S>& table, Eigen::Index row) {
    require(row >= 0 && row < table.value.rows(), errc::vocabulary_overflow,
            "index " + std::to_string(row) + " outside table " + table.name);
    vec_x<S> v = table.value.row(row).transpose();
    return push(std::move(v), [&table, row](tape& t, id self) {
      table.grad.row(row) += t.grad_[self].transpose();
    });
  }

  id affine(param<S>& W, param<S>& b, id x) {
    vec_x<S> y = dense_forward<S>(W.value, b.value.col(0), val(x));
    return push(std::move(y), [&W, &b, x](tape& t, id self) {
      const vec_x<S>& g = t.grad_[self];
      W.grad.noalias() += g * t.val(x).transpose();
      b.grad.col(0) += g;
      t.grad_[x].noalias() += W.value.transpose() * g;
    });
  }

  id linear(param<S>& W, id x) {
    require(W.value.cols() == val(x).size(), errc::shape_mismatch,
            "linear: shape mismatch for " + W.name);
    vec_x<S> y = W.value * val(x);
    return push(std::move(y), [&W, x](tape& t, id self) {
      const vec_x<S>& g = t.grad_[self];
      W.grad.noalias() += g * t.val(x).transpose();
      t.grad_[x].noalias() += W.value.transpose() * g;
    });
  }

  id concat(id a, id b) {
    return push(fedtraj::concat(val(a), val(b)), [a, b](tape& t, id self) {
      const vec_x<S>& g = t.grad_[self];
      const auto na = t.val(a).size();
      t.grad_[a] += g.head(na);
      t.grad_[b] += g.tail(g.size() - na);
    });
  }

  id sigmoid_op(id x) {
    return push(sigmoid<S>(val(x)), [x](tape& t, id self) {
      const auto& y = t.val(self).array();
      t.grad_[x].array() += t.grad_[self].array() * y * (S(1) - y);
    });
  }

  id tanh_op(id x) {
    return push(val(x).array().tanh().matrix(), [x](tape& t, id self) {
      const auto& y = t.val(self).array();
      t.grad_[x].array() += t.grad_[self].array() * (S(1) - y * y);
    });
  }

  id relu(id x) {
    return push(val(x).cwiseMax(S(0)), [x](tape& t, id self) {
      t.grad_[x].array() +=
          t.grad_[self].array() * (t.val(x).array() > S(0)).template cast<S>();
    });
  }

  // clamp to [0,1]; subgradient 1 strictly inside, 0 at and beyond the rails
  id clamp01(id x) {
    return push(val(x).cwiseMax(S(0)).cwiseMin(S(1)), [x](tape& t, id self) {
      const auto& xv = t.val(x).array();
      t.grad_[x].array() += t.grad_[self].array() *
                            ((xv > S(0)) && (xv < S(1))).template cast<S>();
    });
  }

  id add(id a, id b) {
    require(val(a).size() == val(b).size(), errc::shape_mismatch, "add: size mismatch");
    return push(val(a) + val(b), [a, b](tape& t, id self) {
      t.grad_[a] += t.grad_[self];
      t.grad_[b] += t.grad_[self];
    });
  }

  id mul(id a, id b) {
    require(val(a).size() == val(b).size(), errc::shape_mismatch, "mul: size mismatch");
    return push((val(a).array() * val(b).array()).matrix(), [a, b](tape& t, id self) {
      t.grad_[a].array() += t.grad_[self].array() * t.val(b).array();
      t.grad_[b].array() += t.grad_[self].array() * t.val(a).array();
    });
  }

  id one_minus(id x) {
    return push((S(1) - val(x).array()).matrix(),
                [x](tape& t, id self) { t.grad_[x] -= t.grad_[self]; });
  }

  id scale(id x, S s) {
    return push(val(x) * s,
                [x, s](tape& t, id self) { t.grad_[x] += t.grad_[self] * s; });
  }

  id masked_softmax_op(id logits, const vec_x<S>& mask) {
    // p_j (g_j - <g, p>) is zero wherever p_j is, so the backward needs no mask
    return push(masked_softmax<S>(val(logits), mask), [logits](tape& t, id self) {
      const auto& p = t.val(self);
      const auto& g = t.grad_[self];
      const S gp = p.dot(g);
      t.grad_[logits].array() += p.array() * (g.array() - gp);
    });
  }

  id cross_entropy_op(id probs, int target) {
    vec_x<S> out(1);
    out[0] = cross_entropy<S>(val(probs), target);
    return push(std::move(out), [probs, target](tape& t, id self) {
      const S p = t.val(probs)[target];
      t.grad_[probs][target] -=
          t.grad_[self][0] / (p + static_cast<S>(ce_floor));
    });
  }

  // || a - c ||^2 against a constant target
  id sq_dist_const(id a, vec_x<S> target) {
    require(val(a).size() == target.size(), errc::shape_mismatch,
            "sq_dist_const: size mismatch");
    vec_x<S> out(1);
    out[0] = static_cast<S>((val(a) - target).squaredNorm());
    return push(std::move(out), [a, target = std::move(target)](tape& t, id self) {
      t.grad_[a] += S(2) * t.grad_[self][0] * (t.val(a) - target);
    });
  }

  // inverted dropout; keep[i] == 0 zeroes the lane, survivors scale by 1/keep_prob
  id dropout(id x, const std::vector<std::uint8_t>& keep, S keep_prob) {
    require(static_cast<Eigen::Index>(keep.size()) == val(x).size(),
            errc::shape_mismatch, "dropout: mask size mismatch");
    vec_x<S> scale_vec(val(x).size());
    for (Eigen::Index i = 0; i < scale_vec.size(); ++i)
      scale_vec[i] = keep[static_cast<std::size_t>(i)] ? S(1) / keep_prob : S(0);
    vec_x<S> y = (val(x).array() * scale_vec.array()).matrix();
    return push(std::move(y), [x, scale_vec = std::move(scale_vec)](tape& t, id self) {
      t.grad_[x].array() += t.grad_[self].array() * scale_vec.array();
    });
  }

  const vec_x<S>& value(id i) const { return val(i); }
  std::size_t node_count() const { return vals_.size(); }

  // Reverse sweep from a recorded scalar; grads land in param::grad.
  void backward(id loss) {
    require(!vals_.empty(), errc::unrecorded_graph, "backward on an empty tape");
    require(!consumed_, errc::unrecorded_graph,
            "backward already ran on this recording; run a forward pass first");
    require(loss >= 0 && loss < static_cast<id>(vals_.size()),
            errc::unrecorded_graph, "loss node is not on this tape");
    require(vals_[loss].size() == 1, errc::shape_mismatch,
            "backward seed must be a scalar node");
    consumed_ = true;
    grad_.resize(vals_.size());
    for (std::size_t i = 0; i < vals_.size(); ++i)
      grad_[i] = vec_x<S>::Zero(vals_[i].size());
    grad_[loss][0] = S(1);
    for (id i = loss; i >= 0; --i)
      if (backs_[i]) backs_[i](*this, i);
  }

  void reset() {
    vals_.clear();
    backs_.clear();
    grad_.clear();
    consumed_ = false;
  }

 private:
  using back_fn = std::function<void(tape&, id)>;

  const vec_x<S>& val(id i) const { return vals_[i]; }

  id push(vec_x<S> v, back_fn back) {
    require(!consumed_, errc::unrecorded_graph,
            "tape already consumed by backward; reset() before recording");
    vals_.push_back(std::move(v));
    backs_.push_back(std::move(back));
    return static_cast<id>(vals_.size() - 1);
  }

  std::vector<vec_x<S>> vals_;
  std::vector<back_fn> backs_;
  std::vector<vec_x<S>> grad_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Engines: one forward implementation, two execution modes

// Records onto a tape; refs are node ids.
template <typename S>
struct tape_engine {
  using scalar = S;
  using ref = typename tape<S>::id;
  static constexpr bool records = true;

  tape<S>& t;

  ref leaf(vec_x<S> v) { return t.leaf(std::move(v)); }
  ref embed(param<S>& p, Eigen::Index row) { return t.embed(p, row); }
  ref affine(param<S>& W, param<S>& b, ref x) { return t.affine(W, b, x); }
  ref linear(param<S>& W, ref x) { return t.linear(W, x); }
  ref concat(ref a, ref b) { return t.concat(a, b); }
  ref sigmoid(ref x) { return t.sigmoid_op(x); }
  ref tanh(ref x) { return t.tanh_op(x); }
  ref relu(ref x) { return t.relu(x); }
  ref clamp01(ref x) { return t.clamp01(x); }
  ref add(ref a, ref b) { return t.add(a, b); }
  ref mul(ref a, ref b) { return t.mul(a, b); }
  ref one_minus(ref x) { return t.one_minus(x); }
  ref scale(ref x, S s) { return t.scale(x, s); }
  ref masked_softmax(ref logits, const vec_x<S>& mask) {
    return t.masked_softmax_op(logits, mask);
  }
  ref dropout(ref x, const std::vector<std::uint8_t>& keep, S keep_prob) {
    return t.dropout(x, keep, keep_prob);
  }
  const vec_x<S>& value(ref r) const { return t.value(r); }
};

// Immediate evaluation on plain vectors; used for inference and frozen models.
template <typename S>
struct eval_engine {
  using scalar = S;
  using ref = vec_x<S>;
  static constexpr bool records = false;

  ref leaf(vec_x<S> v) { return v; }
  ref embed(const param<S>& p, Eigen::Index row) {
    require(row >= 0 && row < p.value.rows(), errc::vocabulary_overflow,
            "index " + std::to_string(row) + " outside table " + p.name);
    return p.value.row(row).transpose();
  }
  ref affine(const param<S>& W, const param<S>& b, const ref& x) {
    return dense_forward<S>(W.value, b.value.col(0), x);
  }
  ref linear(const param<S>& W, const ref& x) {
    require(W.value.cols() == x.size(), errc::shape_mismatch,
            "linear: shape mismatch for " + W.name);
    return W.value * x;
  }
  ref concat(const ref& a, const ref& b) { return fedtraj::concat(a, b); }
  ref sigmoid(const ref& x) { return fedtraj::sigmoid<S>(x); }
  ref tanh(const ref& x) { return x.array().tanh().matrix(); }
  ref relu(const ref& x) { return x.cwiseMax(S(0)); }
  ref clamp01(const ref& x) { return x.cwiseMax(S(0)).cwiseMin(S(1)); }
  ref add(const ref& a, const ref& b) { return a + b; }
  ref mul(const ref& a, const ref& b) { return (a.array() * b.array()).matrix(); }
  ref one_minus(const ref& x) { return (S(1) - x.array()).matrix(); }
  ref scale(const ref& x, S s) { return x * s; }
  ref masked_softmax(const ref& logits, const vec_x<S>& mask) {
    return fedtraj::masked_softmax<S>(logits, mask);
  }
  ref dropout(const ref& x, const std::vector<std::uint8_t>&, S) { return x; }
  const vec_x<S>& value(const ref& r) const { return r; }
};

// GRU cell over any engine (same wiring as gru_cell_forward). P is param<S>
// or const param<S> depending on the engine.
template <typename E, typename P>
typename E::ref gru_cell(E& eng, P& Wr, P& br, P& Wz, P& bz, P& Wh, P& bh,
                         typename E::ref h_prev, typename E::ref x) {
  auto hx = eng.concat(h_prev, x);
  auto r = eng.sigmoid(eng.affine(Wr, br, hx));
  auto z = eng.sigmoid(eng.affine(Wz, bz, hx));
  auto hc = eng.tanh(eng.affine(Wh, bh, eng.concat(eng.mul(r, h_prev), x)));
  return eng.add(eng.mul(eng.one_minus(z), h_prev), eng.mul(z, hc));
}

// ---------------------------------------------------------------------------
// Optimizer

enum class opt_method { sgd, adam };

// Plain first-order descent with global-norm clipping; the adaptive-moment
// variant sits behind `method` and is off by default.
struct optimizer_state {
  double alpha = 0.001;
  double clip_norm = 5.0;
  opt_method method = opt_method::sgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<double> m;
  std::vector<double> v;
};

template <typename S>
parameter_vector<S> sgd_step(optimizer_state& st, const parameter_vector<S>& params,
                             const parameter_vector<S>& grads) {
  require(params.layout == grads.layout, errc::layout_mismatch,
          "parameter and gradient layouts differ");
  require(params.values.size() == grads.values.size(), errc::layout_mismatch,
          "parameter and gradient lengths differ");
  double sq = 0.0;
  for (const S g : grads.values) {
    require(std::isfinite(static_cast<double>(g)), errc::non_finite_gradient,
            "non-finite gradient");
    sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double nrm = std::sqrt(sq);
  const double clip =
      (st.clip_norm > 0.0 && nrm > st.clip_norm) ? st.clip_norm / nrm : 1.0;
  parameter_vector<S> out = params;
  if (st.method == opt_method::sgd) {
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] = static_cast<S>(static_cast<double>(out.values[i]) -
                                     st.alpha * clip * static_cast<double>(grads.values[i]));
    return out;
  }
  if (st.m.size() != out.values.size()) {
    st.m.assign(out.values.size(), 0.0);
    st.v.assign(out.values.size(), 0.0);
    st.step_count = 0;
  }
  ++st.step_count;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double g = clip * static_cast<double>(grads.values[i]);
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double update = (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + st.eps);
    out.values[i] = static_cast<S>(static_cast<double>(out.values[i]) - st.alpha * update);
  }
  return out;
}

}  // namespace fedtraj

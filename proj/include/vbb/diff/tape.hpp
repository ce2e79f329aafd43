#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vbb/diff/rng.hpp"
#include "vbb/diff/tensor.hpp"

namespace vbb {

/// Trainable array with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}
  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct TapeOptions {
  /// Record backward closures. A non-recording tape is a plain forward evaluator.
  bool record = true;
  /// Verify every op output is finite and every log argument positive.
  bool checked = true;
};

/// Eager reverse-mode tape. Forward values are computed as ops are called;
/// backward() walks the records once in reverse creation order, which is a
/// valid reverse topological order because nodes only reference older nodes.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t)>;

  explicit Tape(TapeOptions options = {}) : options_(options) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return options_.record; }
  bool checked() const noexcept { return options_.checked; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor value) { return push(std::move(value), false, {}, nullptr, nullptr); }

  /// Tracked leaf whose gradient can be read back with grad().
  Var input(Tensor value) { return push(std::move(value), options_.record, {}, nullptr, nullptr); }

  /// Leaf bound to a parameter; backward() accumulates into `p.grad`.
  /// Repeated calls with the same parameter return the same node.
  Var parameter(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Var v = push(p.value, options_.record, {}, nullptr, &p);
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  /// Appends an op record. `fn` is dropped when no input needs a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, Backprop fn, const char* op) {
    if (options_.checked && !value.all_finite()) {
      throw DomainError(std::string("non-finite value produced by ") + op);
    }
    bool needs = false;
    if (options_.record)
      for (std::size_t i : inputs) needs = needs || nodes_[i].requires_grad;
    return push(std::move(value), needs, std::move(inputs), needs ? std::move(fn) : nullptr, nullptr);
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, allocated on first use.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
  }

  /// Gradient of the last backward() loss with respect to `v` (zeros if off-path).
  const Tensor& grad(Var v) { return grad_buffer(v.id()); }

  /// Reverse accumulation from a scalar loss. Parameter gradients are added to
  /// `Parameter::grad`; callers zero them between steps.
  void backward(Var loss) {
    if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
    if (!loss.value().is_scalar()) {
      throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
    }
    if (backward_done_) throw ContractError("backward: tape already consumed");
    backward_done_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      if (n.backprop) n.backprop(*this, id);
      if (n.param != nullptr) {
        auto dst = n.param->grad.values();
        auto src = n.grad.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    Backprop backprop;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Tensor value, bool requires_grad, std::vector<std::size_t> inputs, Backprop fn, Parameter* p) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(inputs), std::move(fn), p, requires_grad});
    return Var(this, nodes_.size() - 1);
  }

  TapeOptions options_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace ops {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MutMap as_matrix(Tensor& t) {
  return MutMap(t.values().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

inline Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary_op(Var a, F f, D df, const char* name) {
  Tape& tape = *a.tape();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return tape.record(std::move(y), {ia},
                     [ia, df](Tape& t, std::size_t self) {
                       if (!t.requires_grad(ia)) return;
                       const Tensor& x = t.value(ia);
                       const Tensor& y = t.value(self);
                       const Tensor& g = t.grad_buffer(self);
                       Tensor& gx = t.grad_buffer(ia);
                       for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * df(x[i], y[i]);
                     },
                     name);
}

}  // namespace detail

/// Generic elementwise map with a caller-supplied derivative df(x, y).
inline Var unary(Var a, std::function<double(double)> f, std::function<double(double, double)> df,
                 const char* name = "unary") {
  return detail::unary_op(a, std::move(f), std::move(df), name);
}

inline Var matmul(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows() || av.rank() > 2 || bv.rank() > 2) {
    throw DimensionError("matmul: cannot multiply " + shape_string(av.shape()) + " by " + shape_string(bv.shape()));
  }
  Tensor out(detail::matrix_shape(av.rows(), bv.cols()));
  detail::as_matrix(out).noalias() = detail::as_matrix(av) * detail::as_matrix(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib},
                     [ia, ib](Tape& t, std::size_t self) {
                       auto g = detail::as_matrix(t.grad_buffer(self));
                       if (t.requires_grad(ia)) {
                         detail::as_matrix(t.grad_buffer(ia)).noalias() += g * detail::as_matrix(t.value(ib)).transpose();
                       }
                       if (t.requires_grad(ib)) {
                         detail::as_matrix(t.grad_buffer(ib)).noalias() += detail::as_matrix(t.value(ia)).transpose() * g;
                       }
                     },
                     "matmul");
}

namespace detail {

template <typename F, typename DA, typename DB>
Var binary_op(Var a, Var b, F f, DA da, DB db, const char* name) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a, b, name);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib},
                     [ia, ib, da, db](Tape& t, std::size_t self) {
                       const Tensor& x = t.value(ia);
                       const Tensor& y = t.value(ib);
                       const Tensor& g = t.grad_buffer(self);
                       if (t.requires_grad(ia)) {
                         Tensor& gx = t.grad_buffer(ia);
                         for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * da(x[i], y[i]);
                       }
                       if (t.requires_grad(ib)) {
                         Tensor& gy = t.grad_buffer(ib);
                         for (std::size_t i = 0; i < x.size(); ++i) gy[i] += g[i] * db(x[i], y[i]);
                       }
                     },
                     name);
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; }, "add");
}

inline Var sub(Var a, Var b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; }, "sub");
}

inline Var mul(Var a, Var b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; }, "mul");
}

/// log(exp(a) + exp(b)), evaluated without overflow.
inline Var logaddexp(Var a, Var b) {
  auto lae = [](double x, double y) {
    const double m = std::max(x, y);
    if (m == -HUGE_VAL) return -HUGE_VAL;
    return m + std::log1p(std::exp(-std::abs(x - y)));
  };
  // d/dx = sigmoid(x - y)
  return detail::binary_op(
      a, b, lae, [](double x, double y) { return 1.0 / (1.0 + std::exp(y - x)); },
      [](double x, double y) { return 1.0 / (1.0 + std::exp(x - y)); }, "logaddexp");
}

inline Var tanh(Var a) {
  return detail::unary_op(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

/// Subgradient at exactly zero is 0.
inline Var relu(Var a) {
  return detail::unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  return detail::unary_op(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

inline Var exp(Var a) {
  return detail::unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

inline Var log(Var a) {
  if (a.tape()->checked()) {
    for (double v : a.value().values())
      if (!(v > 0.0)) throw DomainError("log of nonpositive value " + std::to_string(v));
  }
  return detail::unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

inline Var softplus(Var a) {
  return detail::unary_op(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return sigmoid_value(x); }, "softplus");
}

inline Var square(Var a) {
  return detail::unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

inline Var neg(Var a) {
  return detail::unary_op(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; }, "neg");
}

inline Var scale(Var a, double s) {
  return detail::unary_op(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

inline Var add_scalar(Var a, double s) {
  return detail::unary_op(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

/// 1 - a
inline Var one_minus(Var a) {
  return detail::unary_op(
      a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; }, "one_minus");
}

/// Gradient passes only where lo < x < hi.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary_op(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; }, "clamp");
}

inline Var stop_gradient(Var a) { return a.tape()->constant(a.value()); }

/// x[m×n] + b[n] (bias broadcast over rows).
inline Var add_row(Var x, Var b) {
  Tape& tape = detail::same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_row: bias " + shape_string(bv.shape()) + " vs input " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += bv[c];
  const std::size_t ix = x.id(), ib = b.id();
  return tape.record(std::move(out), {ix, ib},
                     [ix, ib](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       if (t.requires_grad(ix)) {
                         Tensor& gx = t.grad_buffer(ix);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       }
                       if (t.requires_grad(ib)) {
                         Tensor& gb = t.grad_buffer(ib);
                         for (std::size_t r = 0; r < g.rows(); ++r)
                           for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
                       }
                     },
                     "add_row");
}

/// x[m×n] scaled row-wise by c[m×1].
inline Var mul_col(Var x, Var c) {
  Tape& tape = detail::same_tape(x, c);
  const Tensor& xv = x.value();
  const Tensor& cv = c.value();
  if (cv.size() != xv.rows()) {
    throw DimensionError("mul_col: column " + shape_string(cv.shape()) + " vs input " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t k = 0; k < out.cols(); ++k) out.at(r, k) *= cv[r];
  const std::size_t ix = x.id(), ic = c.id();
  return tape.record(std::move(out), {ix, ic},
                     [ix, ic](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       const Tensor& xv = t.value(ix);
                       const Tensor& cv = t.value(ic);
                       if (t.requires_grad(ix)) {
                         Tensor& gx = t.grad_buffer(ix);
                         for (std::size_t r = 0; r < g.rows(); ++r)
                           for (std::size_t k = 0; k < g.cols(); ++k) gx.at(r, k) += g.at(r, k) * cv[r];
                       }
                       if (t.requires_grad(ic)) {
                         Tensor& gc = t.grad_buffer(ic);
                         for (std::size_t r = 0; r < g.rows(); ++r)
                           for (std::size_t k = 0; k < g.cols(); ++k) gc[r] += g.at(r, k) * xv.at(r, k);
                       }
                     },
                     "mul_col");
}

inline Var sum(Var a) {
  Tape& tape = *a.tape();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return tape.record(Tensor::scalar(s), {ia},
                     [ia](Tape& t, std::size_t self) {
                       const double g = t.grad_buffer(self)[0];
                       for (double& v : t.grad_buffer(ia).values()) v += g;
                     },
                     "sum");
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Per-row sum: [m×n] -> [m×1].
inline Var row_sum(Var a) {
  Tape& tape = *a.tape();
  const Tensor& x = a.value();
  Tensor out(detail::matrix_shape(x.rows(), 1));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    out[r] = s;
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia},
                     [ia](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       Tensor& gx = t.grad_buffer(ia);
                       for (std::size_t r = 0; r < gx.rows(); ++r)
                         for (double& v : gx.row(r)) v += g[r];
                     },
                     "row_sum");
}

inline Var concat_cols(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rows() != y.rows()) {
    throw DimensionError("concat_cols: row mismatch " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  }
  const std::size_t n1 = x.cols(), n2 = y.cols();
  Tensor out(detail::matrix_shape(x.rows(), n1 + n2));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy(x.row(r).begin(), x.row(r).end(), out.row(r).begin());
    std::copy(y.row(r).begin(), y.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(n1));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib},
                     [ia, ib, n1, n2](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       if (t.requires_grad(ia)) {
                         Tensor& gx = t.grad_buffer(ia);
                         for (std::size_t r = 0; r < g.rows(); ++r)
                           for (std::size_t c = 0; c < n1; ++c) gx.at(r, c) += g.at(r, c);
                       }
                       if (t.requires_grad(ib)) {
                         Tensor& gy = t.grad_buffer(ib);
                         for (std::size_t r = 0; r < g.rows(); ++r)
                           for (std::size_t c = 0; c < n2; ++c) gy.at(r, c) += g.at(r, n1 + c);
                       }
                     },
                     "concat_cols");
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& tape = *a.tape();
  const Tensor& x = a.value();
  if (count == 0 || begin + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") out of range for " + shape_string(x.shape()));
  }
  Tensor out(detail::matrix_shape(x.rows(), count));
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = x.at(r, begin + c);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia},
                     [ia, begin, count](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       Tensor& gx = t.grad_buffer(ia);
                       for (std::size_t r = 0; r < g.rows(); ++r)
                         for (std::size_t c = 0; c < count; ++c) gx.at(r, begin + c) += g.at(r, c);
                     },
                     "slice_cols");
}

/// Row r of the result is row r of `a` where take_a[r], else row r of `b`.
/// Rows are copied, never blended, so unselected inputs cannot leak into the output.
inline Var select_rows(const std::vector<bool>& take_a, Var a, Var b) {
  Tape& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "select_rows");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (take_a.size() != x.rows()) throw DimensionError("select_rows: mask length does not match row count");
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = take_a[r] ? x.row(r) : y.row(r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib},
                     [ia, ib, take_a](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       for (std::size_t r = 0; r < g.rows(); ++r) {
                         const std::size_t dst = take_a[r] ? ia : ib;
                         if (!t.requires_grad(dst)) continue;
                         auto gd = t.grad_buffer(dst).row(r);
                         auto gs = g.row(r);
                         for (std::size_t c = 0; c < gs.size(); ++c) gd[c] += gs[c];
                       }
                     },
                     "select_rows");
}

/// out[r] = a[r, index[r]], shape [m×1].
inline Var pick(Var a, const std::vector<std::size_t>& index) {
  Tape& tape = *a.tape();
  const Tensor& x = a.value();
  if (index.size() != x.rows()) throw DimensionError("pick: index count does not match row count");
  Tensor out(detail::matrix_shape(x.rows(), 1));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (index[r] >= x.cols()) throw DimensionError("pick: column index out of range");
    out[r] = x.at(r, index[r]);
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia},
                     [ia, index](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       Tensor& gx = t.grad_buffer(ia);
                       for (std::size_t r = 0; r < index.size(); ++r) gx.at(r, index[r]) += g[r];
                     },
                     "pick");
}

/// Row-wise log-softmax computed with a max shift.
inline Var log_softmax(Var a) {
  Tape& tape = *a.tape();
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    const double m = *std::max_element(xr.begin(), xr.end());
    double s = 0.0;
    for (double v : xr) s += std::exp(v - m);
    const double lse = std::log(s);
    auto orow = out.row(r);
    for (std::size_t c = 0; c < xr.size(); ++c) orow[c] = xr[c] - m - lse;
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia},
                     [ia](Tape& t, std::size_t self) {
                       const Tensor& y = t.value(self);
                       const Tensor& g = t.grad_buffer(self);
                       Tensor& gx = t.grad_buffer(ia);
                       for (std::size_t r = 0; r < y.rows(); ++r) {
                         double gs = 0.0;
                         for (double v : g.row(r)) gs += v;
                         auto yr = y.row(r);
                         auto gr = g.row(r);
                         auto gxr = gx.row(r);
                         for (std::size_t c = 0; c < yr.size(); ++c) gxr[c] += gr[c] - std::exp(yr[c]) * gs;
                       }
                     },
                     "log_softmax");
}

struct SoftmaxResult {
  Var probs;
  Var logprobs;
};

/// Probabilities and log-probabilities of row-wise logits.
inline SoftmaxResult softmax_logits(Var logits) {
  Var lp = log_softmax(logits);
  return {exp(lp), lp};
}

/// Reparameterized draw mu + sigma * eps with eps ~ N(0,1) taken element by
/// element from `rng` in row-major order. `allow_zero_sigma` is the
/// evaluation-only shortcut in which sigma == 0 returns mu exactly.
inline Var gaussian_sample(Var mu, Var sigma, RngStream& rng, bool allow_zero_sigma = false) {
  Tape& tape = detail::same_tape(mu, sigma);
  detail::require_same_shape(mu, sigma, "gaussian_sample");
  for (double s : sigma.value().values()) {
    if (s < 0.0 || (s == 0.0 && !allow_zero_sigma)) throw DomainError("gaussian_sample: sigma must be positive");
  }
  Tensor eps(mu.shape());
  for (double& e : eps.values()) e = rng.normal();
  return add(mu, mul(sigma, tape.constant(std::move(eps))));
}

/// Row-batched variant: row r draws its noise from rngs[r].
inline Var gaussian_sample(Var mu, Var sigma, std::span<RngStream> rngs, bool allow_zero_sigma = false) {
  Tape& tape = detail::same_tape(mu, sigma);
  detail::require_same_shape(mu, sigma, "gaussian_sample");
  if (rngs.size() != mu.rows()) throw DimensionError("gaussian_sample: one rng per row required");
  for (double s : sigma.value().values()) {
    if (s < 0.0 || (s == 0.0 && !allow_zero_sigma)) throw DomainError("gaussian_sample: sigma must be positive");
  }
  Tensor eps(mu.shape());
  for (std::size_t r = 0; r < eps.rows(); ++r)
    for (double& e : eps.row(r)) e = rngs[r].normal();
  return add(mu, mul(sigma, tape.constant(std::move(eps))));
}

}  // namespace ops

/// Draws the discrete gate. No gradient flows through the result.
inline int bernoulli_sample(double p, RngStream& rng) { return rng.bernoulli(p) ? 1 : 0; }

}  // namespace vbb

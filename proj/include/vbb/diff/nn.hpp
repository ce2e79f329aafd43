#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "vbb/diff/rng.hpp"
#include "vbb/diff/tape.hpp"

namespace vbb {

/// Owns parameters in registration order. Addresses stay stable (deque), so
/// layers can hold plain pointers into the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(const std::string& name, Tensor init) {
    for (const auto& p : params_)
      if (p.name == name) throw ContractError("duplicate parameter name " + name);
    params_.emplace_back(name, std::move(init));
    return params_.back();
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Parameter* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::vector<Parameter*> pointers() {
    std::vector<Parameter*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// Copies parameter values from a store with identical layout.
  void copy_values_from(const ParameterStore& other) {
    if (other.size() != size()) throw DimensionError("parameter store layout mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
      if (params_[i].value.shape() != other[i].value.shape() || params_[i].name != other[i].name) {
        throw DimensionError("parameter store layout mismatch at " + params_[i].name);
      }
      params_[i].value = other[i].value;
    }
  }

 private:
  std::deque<Parameter> params_;
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  Tensor w({fan_in, fan_out});
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.values()) v = a * (2.0 * rng.uniform() - 1.0);
  return w;
}

/// Fully connected layer y = x W + b.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, RngStream& rng,
         double weight_scale = 1.0)
      : in_(in), out_(out) {
    Tensor w = glorot_uniform(in, out, rng);
    for (double& v : w.values()) v *= weight_scale;
    weight_ = &store.add(name + ".weight", std::move(w));
    bias_ = &store.add(name + ".bias", Tensor({out}, 0.0));
  }

  Var operator()(Tape& tape, Var x) const {
    if (x.cols() != in_) {
      throw DimensionError("Linear " + weight_->name + ": expected " + std::to_string(in_) + " input columns, got " +
                           std::to_string(x.cols()));
    }
    return ops::add_row(ops::matmul(x, tape.parameter(*weight_)), tape.parameter(*bias_));
  }

  std::size_t in() const noexcept { return in_; }
  std::size_t out() const noexcept { return out_; }
  Parameter& weight() { return *weight_; }
  Parameter& bias() { return *bias_; }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

struct LstmState {
  Var h;
  Var c;
};

struct LstmGates {
  Var input;
  Var forget;
  Var cell;
  Var output;
};

/// Standard LSTM cell; gate columns are laid out [input | forget | cell | output].
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, RngStream& rng)
      : in_(in), hidden_(hidden) {
    wx_ = &store.add(name + ".wx", glorot_uniform(in, 4 * hidden, rng));
    wh_ = &store.add(name + ".wh", glorot_uniform(hidden, 4 * hidden, rng));
    Tensor b({4 * hidden}, 0.0);
    for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;  // forget-gate bias
    b_ = &store.add(name + ".bias", std::move(b));
  }

  LstmState operator()(Tape& tape, Var x, LstmState state, LstmGates* gates = nullptr) const {
    if (x.cols() != in_ || state.h.cols() != hidden_ || state.c.cols() != hidden_ || state.h.rows() != x.rows() ||
        state.c.rows() != x.rows()) {
      throw DimensionError("LstmCell: inconsistent input/state shapes");
    }
    Var pre = ops::add_row(ops::add(ops::matmul(x, tape.parameter(*wx_)), ops::matmul(state.h, tape.parameter(*wh_))),
                           tape.parameter(*b_));
    Var i = ops::sigmoid(ops::slice_cols(pre, 0, hidden_));
    Var f = ops::sigmoid(ops::slice_cols(pre, hidden_, hidden_));
    Var g = ops::tanh(ops::slice_cols(pre, 2 * hidden_, hidden_));
    Var o = ops::sigmoid(ops::slice_cols(pre, 3 * hidden_, hidden_));
    Var c = ops::add(ops::mul(f, state.c), ops::mul(i, g));
    Var h = ops::mul(o, ops::tanh(c));
    if (gates) *gates = {i, f, g, o};
    return {h, c};
  }

  std::size_t in() const noexcept { return in_; }
  std::size_t hidden() const noexcept { return hidden_; }

 private:
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
  Parameter* wx_ = nullptr;
  Parameter* wh_ = nullptr;
  Parameter* b_ = nullptr;
};

/// One recurrence step of an LSTM cell.
inline LstmState lstm_step(Tape& tape, const LstmCell& cell, Var x, LstmState state) { return cell(tape, x, state); }

}  // namespace vbb

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vbb/diff/nn.hpp"

namespace vbb {

struct RmsPropState {
  Tensor square_avg;
};

/// s <- rho*s + (1-rho)*g^2 ; theta <- theta - lr*g/(sqrt(s)+eps)
inline void rmsprop_update(Tensor& param, const Tensor& grad, RmsPropState& state, double lr, double rho, double eps) {
  if (grad.shape() != param.shape()) throw DimensionError("rmsprop_update: gradient shape mismatch");
  if (state.square_avg.empty()) state.square_avg = Tensor::zeros_like(param);
  if (state.square_avg.shape() != param.shape()) throw DimensionError("rmsprop_update: state shape mismatch");
  auto p = param.values();
  auto g = grad.values();
  auto s = state.square_avg.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    s[i] = rho * s[i] + (1.0 - rho) * g[i] * g[i];
    p[i] -= lr * g[i] / (std::sqrt(s[i]) + eps);
  }
}

struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;
};

inline void adam_update(Tensor& param, const Tensor& grad, AdamState& state, double lr, double beta1, double beta2,
                        double eps) {
  if (grad.shape() != param.shape()) throw DimensionError("adam_update: gradient shape mismatch");
  if (state.m.empty()) {
    state.m = Tensor::zeros_like(param);
    state.v = Tensor::zeros_like(param);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  auto p = param.values();
  auto g = grad.values();
  auto m = state.m.values();
  auto v = state.v.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

struct OptimizerSettings {
  std::string name = "rmsprop";  // "rmsprop" | "adam"
  double lr = 7e-4;
  double rho = 0.99;
  double eps = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

/// Applies one update to every parameter of a store, in registration order.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings s = {}) : settings_(std::move(s)) {
    if (settings_.name != "rmsprop" && settings_.name != "adam") {
      throw ConfigError("optimizer.name", "unknown optimizer '" + settings_.name + "'");
    }
  }

  void step(ParameterStore& store) {
    if (settings_.name == "rmsprop") {
      rms_.resize(store.size());
      for (std::size_t i = 0; i < store.size(); ++i)
        rmsprop_update(store[i].value, store[i].grad, rms_[i], settings_.lr, settings_.rho, settings_.eps);
    } else {
      adam_.resize(store.size());
      for (std::size_t i = 0; i < store.size(); ++i)
        adam_update(store[i].value, store[i].grad, adam_[i], settings_.lr, settings_.beta1, settings_.beta2,
                    settings_.eps);
    }
  }

  const OptimizerSettings& settings() const noexcept { return settings_; }

  /// Flattened moment buffers, for checkpointing. Empty until the first step.
  std::vector<std::pair<std::string, Tensor*>> state_tensors(const ParameterStore& store) {
    std::vector<std::pair<std::string, Tensor*>> out;
    if (settings_.name == "rmsprop") {
      rms_.resize(store.size());
      for (std::size_t i = 0; i < store.size(); ++i) {
        if (rms_[i].square_avg.empty()) rms_[i].square_avg = Tensor::zeros_like(store[i].value);
        out.emplace_back("rmsprop." + store[i].name, &rms_[i].square_avg);
      }
    } else {
      adam_.resize(store.size());
      for (std::size_t i = 0; i < store.size(); ++i) {
        if (adam_[i].m.empty()) {
          adam_[i].m = Tensor::zeros_like(store[i].value);
          adam_[i].v = Tensor::zeros_like(store[i].value);
        }
        out.emplace_back("adam.m." + store[i].name, &adam_[i].m);
        out.emplace_back("adam.v." + store[i].name, &adam_[i].v);
      }
    }
    return out;
  }

  std::uint64_t adam_step() const { return adam_.empty() ? 0 : adam_.front().step; }
  void set_adam_step(std::uint64_t s) {
    for (auto& a : adam_) a.step = s;
  }

 private:
  OptimizerSettings settings_;
  std::vector<RmsPropState> rms_;
  std::vector<AdamState> adam_;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store)
    for (double g : p.grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (auto& p : store)
      for (double& g : p.grad.values()) g *= k;
  }
  return norm;
}

}  // namespace vbb

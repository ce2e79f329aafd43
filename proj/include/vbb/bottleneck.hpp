#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vbb/diff/nn.hpp"
#include "vbb/diff/tape.hpp"

namespace vbb {

/// Source of the privileged input. Every query() is counted.
class PrivilegedProvider {
 public:
  virtual ~PrivilegedProvider() = default;
  virtual std::size_t dim() const = 0;

  std::vector<double> query() {
    ++invocations_;
    std::vector<double> v = produce();
    if (v.size() != dim()) {
      throw ProviderError("provider returned " + std::to_string(v.size()) + " values, expected " +
                          std::to_string(dim()));
    }
    return v;
  }

  std::size_t invocations() const noexcept { return invocations_; }
  void reset_invocations() noexcept { invocations_ = 0; }

 protected:
  virtual std::vector<double> produce() = 0;

 private:
  std::size_t invocations_ = 0;
};

namespace bottleneck {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*ln(2*pi)
inline constexpr double kCapacityClampEps = 1e-6;

enum class Mode { train, eval };

/// How (if at all) the task loss reaches the capacity head through the gate.
enum class GateEstimator {
  none,            // d_cap learns only from the information cost
  score_function,  // REINFORCE on log p(b | d_cap)
  soft_mix,        // straight-through: hard gate forward, d*f + (1-d)*eps backward
};

inline std::string to_string(GateEstimator e) {
  switch (e) {
    case GateEstimator::none: return "none";
    case GateEstimator::score_function: return "score_function";
    case GateEstimator::soft_mix: return "soft_mix";
  }
  return "none";
}

inline GateEstimator gate_estimator_from_string(const std::string& s) {
  if (s == "none") return GateEstimator::none;
  if (s == "score_function") return GateEstimator::score_function;
  if (s == "soft_mix") return GateEstimator::soft_mix;
  throw ConfigError("gate_estimator", "unknown gate estimator '" + s + "'");
}

inline double nats_to_bits(double nats) { return nats / std::numbers::ln2; }

/// Sum over dimensions of ln N(f_k; 0, 1).
inline double log_std_normal(std::span<const double> f) {
  double s = 0.0;
  for (double v : f) s += -0.5 * v * v - kHalfLog2Pi;
  return s;
}

/// KL(N(mu, sigma^2) || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - ln sigma^2 - 1).
inline double kl_gaussian(std::span<const double> mu, std::span<const double> sigma) {
  if (mu.size() != sigma.size()) throw DimensionError("kl_gaussian: mu/sigma size mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    if (!(sigma[k] > 0.0)) throw DomainError("kl_gaussian: sigma must be positive");
    s += mu[k] * mu[k] + sigma[k] * sigma[k] - 2.0 * std::log(sigma[k]) - 1.0;
  }
  return 0.5 * s;
}

/// Row-wise Gaussian KL against the standard normal: [m×K] -> [m×1].
inline Var kl_gaussian(Var mu, Var sigma) {
  if (mu.shape() != sigma.shape()) throw DimensionError("kl_gaussian: mu/sigma shape mismatch");
  for (double s : sigma.value().values())
    if (!(s > 0.0)) throw DomainError("kl_gaussian: sigma must be positive");
  Var var = ops::square(sigma);
  Var inner = ops::sub(ops::add(ops::square(mu), var), ops::log(var));
  return ops::scale(ops::add_scalar(ops::row_sum(inner), -static_cast<double>(mu.cols())), 0.5);
}

/// Mixture cost with d_cap = access probability and log_pf = ln p(f), taken
/// literally including the endpoints d=0 (value ln p(f)) and d=1 (value 0).
inline double kl_mixture_exact(double d_cap, double log_pf) {
  if (!(d_cap >= 0.0 && d_cap <= 1.0)) throw DomainError("kl_mixture: d_cap outside [0,1]");
  const double entropy_term = d_cap > 0.0 ? -d_cap * std::log(d_cap) : 0.0;
  if (d_cap == 1.0) return entropy_term;
  const double log_one_minus = std::log1p(-d_cap);
  double mix;
  if (d_cap == 0.0) {
    mix = 0.0;  // ln(0 * p + 1)
  } else {
    const double a = std::log(d_cap) + log_pf;
    const double m = std::max(a, log_one_minus);
    mix = m + std::log1p(std::exp(-std::abs(a - log_one_minus)));
  }
  return entropy_term + (1.0 - d_cap) * (log_pf - mix);
}

/// Mixture cost with d_cap clamped to [1e-6, 1-1e-6].
inline double kl_mixture(double d_cap, std::span<const double> f) {
  const double d = std::clamp(d_cap, kCapacityClampEps, 1.0 - kCapacityClampEps);
  return kl_mixture_exact(d, log_std_normal(f));
}

/// Differentiable mixture cost, row-wise: d_cap [m×1], f [m×K] -> [m×1].
///   -d ln d + (1-d) [ln p(f) - logaddexp(ln d + ln p(f), ln(1-d))]
inline Var kl_mixture(Var d_cap, Var f) {
  if (d_cap.cols() != 1 || d_cap.rows() != f.rows()) {
    throw DimensionError("kl_mixture: d_cap must be [m×1] matching f rows");
  }
  Var d = ops::clamp(d_cap, kCapacityClampEps, 1.0 - kCapacityClampEps);
  Var log_pf =
      ops::add_scalar(ops::row_sum(ops::scale(ops::square(f), -0.5)), -kHalfLog2Pi * static_cast<double>(f.cols()));
  Var log_d = ops::log(d);
  Var one_minus_d = ops::one_minus(d);
  Var log_1md = ops::log(one_minus_d);
  Var mix = ops::logaddexp(ops::add(log_d, log_pf), log_1md);
  Var entropy_term = ops::neg(ops::mul(d, log_d));
  return ops::add(entropy_term, ops::mul(one_minus_d, ops::sub(log_pf, mix)));
}

/// B(S): two-layer perceptron with a sigmoid output.
class CapacityHeadDirect {
 public:
  CapacityHeadDirect() = default;
  CapacityHeadDirect(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, RngStream& rng)
      : l1_(store, name + ".l1", in, hidden, rng), l2_(store, name + ".l2", hidden, 1, rng) {}

  Var logit(Tape& tape, Var s_embed) const { return l2_(tape, ops::tanh(l1_(tape, s_embed))); }
  Var operator()(Tape& tape, Var s_embed) const { return ops::sigmoid(logit(tape, s_embed)); }

  Linear& output_layer() { return l2_; }
  Linear& hidden_layer() { return l1_; }

 private:
  Linear l1_;
  Linear l2_;
};

/// Alternate capacity head: d_cap = sigmoid(clamp(sum_k KL(N(mu_k, sigma_k^2) || N(0,1)), -2, 2)).
/// Since the KL is nonnegative, the output never drops below 0.5.
class CapacityHeadGaussian {
 public:
  static constexpr double kClamp = 2.0;

  CapacityHeadGaussian() = default;
  CapacityHeadGaussian(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                       std::size_t latent, RngStream& rng)
      : trunk_(store, name + ".trunk", in, hidden, rng),
        mu_(store, name + ".mu", hidden, latent, rng),
        sigma_(store, name + ".sigma", hidden, latent, rng) {}

  struct Output {
    Var d_cap;
    Var capacity;  // summed KL before clamping
    Var mu;
    Var sigma;
  };

  Output forward(Tape& tape, Var s_embed) const {
    Var h = ops::tanh(trunk_(tape, s_embed));
    Var mu = mu_(tape, h);
    Var sigma = ops::add_scalar(ops::softplus(sigma_(tape, h)), 1e-6);
    Var c = kl_gaussian(mu, sigma);
    return {ops::sigmoid(ops::clamp(c, -kClamp, kClamp)), c, mu, sigma};
  }

  Var operator()(Tape& tape, Var s_embed) const { return forward(tape, s_embed).d_cap; }

  Linear& mu_layer() { return mu_; }
  Linear& sigma_layer() { return sigma_; }

 private:
  Linear trunk_;
  Linear mu_;
  Linear sigma_;
};

/// f_enc(S, G): one fully connected layer over [s_embed | g].
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterStore& store, const std::string& name, std::size_t state_dim, std::size_t privileged_dim,
          std::size_t latent_dim, RngStream& rng)
      : state_dim_(state_dim), privileged_dim_(privileged_dim), fc_(store, name, state_dim + privileged_dim, latent_dim, rng) {}

  Var operator()(Tape& tape, Var s_embed, Var g) const { return fc_(tape, ops::concat_cols(s_embed, g)); }

  std::size_t latent_dim() const noexcept { return fc_.out(); }
  std::size_t privileged_dim() const noexcept { return privileged_dim_; }
  std::size_t state_dim() const noexcept { return state_dim_; }
  Linear& layer() { return fc_; }

 private:
  std::size_t state_dim_ = 0;
  std::size_t privileged_dim_ = 0;
  Linear fc_;
};

/// Per-step record of the gated channel.
struct BottleneckOutput {
  std::vector<double> z;
  double d_cap = 0.0;
  int accessed = 0;
  std::optional<double> kl_nats;
};

struct ChannelOutput {
  Var z;             // [m×K]
  Var d_cap;         // [m×1]
  Var kl;            // [m×1]; train mode only
  Var gate_logprob;  // [m×1] ln Bernoulli(b | d_cap)
  std::vector<int> accessed;

  BottleneckOutput record(std::size_t row) const {
    BottleneckOutput out;
    const auto zr = z.value().row(row);
    out.z.assign(zr.begin(), zr.end());
    out.d_cap = d_cap.value()[row];
    out.accessed = accessed[row];
    if (kl.valid()) out.kl_nats = kl.value()[row];
    return out;
  }
};

struct GateOptions {
  Mode mode = Mode::train;
  GateEstimator estimator = GateEstimator::none;
  /// Deterministic b = [d_cap > 0.5] instead of a Bernoulli draw.
  bool threshold = false;
};

/// Draws z from the mixture d_cap * delta(f_enc(s,g)) + (1 - d_cap) * N(0, I).
///
/// Row r uses rngs[r]: one uniform for the gate, then K normals for the prior
/// draw, regardless of the gate outcome. In train mode every provider is
/// queried because the information cost needs f on every step. In eval mode
/// a provider is queried only when its gate opens and no cost is produced.
inline ChannelOutput sample_z(Tape& tape, const Encoder& encoder, Var s_embed, Var d_cap,
                              std::span<PrivilegedProvider* const> providers, std::span<RngStream> rngs,
                              const GateOptions& options) {
  const std::size_t m = s_embed.rows();
  const std::size_t k = encoder.latent_dim();
  const std::size_t gdim = encoder.privileged_dim();
  if (providers.size() != m || rngs.size() != m || d_cap.rows() != m || d_cap.cols() != 1) {
    throw DimensionError("sample_z: one provider, rng and d_cap per row required");
  }

  ChannelOutput out;
  out.d_cap = d_cap;
  out.accessed.assign(m, 0);
  Tensor noise({m, k});
  for (std::size_t r = 0; r < m; ++r) {
    const double d = d_cap.value()[r];
    if (!(d >= 0.0 && d <= 1.0)) throw DomainError("sample_z: d_cap outside [0,1]");
    const double u = rngs[r].uniform();
    out.accessed[r] = options.threshold ? (d > 0.5 ? 1 : 0) : (u < d ? 1 : 0);
    for (double& e : noise.row(r)) e = rngs[r].normal();
  }

  Tensor g({m, gdim}, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (options.mode == Mode::train || out.accessed[r]) {
      const std::vector<double> v = providers[r]->query();
      std::copy(v.begin(), v.end(), g.row(r).begin());
    }
  }

  Var f = encoder(tape, s_embed, tape.constant(std::move(g)));
  Var eps = tape.constant(std::move(noise));
  std::vector<bool> open(m);
  for (std::size_t r = 0; r < m; ++r) open[r] = out.accessed[r] != 0;
  out.z = ops::select_rows(open, f, eps);

  Tensor gate_sign({m, 1});
  for (std::size_t r = 0; r < m; ++r) gate_sign[r] = out.accessed[r] ? 1.0 : 0.0;
  Var dc = ops::clamp(d_cap, kCapacityClampEps, 1.0 - kCapacityClampEps);
  Var b = tape.constant(gate_sign);
  Var nb = tape.constant([&] {
    Tensor t = gate_sign;
    for (double& v : t.values()) v = 1.0 - v;
    return t;
  }());
  out.gate_logprob = ops::add(ops::mul(b, ops::log(dc)), ops::mul(nb, ops::log(ops::one_minus(dc))));

  if (options.mode == Mode::train) {
    if (options.estimator == GateEstimator::soft_mix) {
      Var zero_valued = ops::sub(d_cap, ops::stop_gradient(d_cap));
      out.z = ops::add(out.z, ops::mul_col(ops::sub(f, eps), zero_valued));
    }
    out.kl = kl_mixture(d_cap, f);
  }
  return out;
}

/// Conditional VIB channel that always reads the privileged input.
class VibChannel {
 public:
  VibChannel() = default;
  VibChannel(ParameterStore& store, const std::string& name, std::size_t state_dim, std::size_t privileged_dim,
             std::size_t latent_dim, RngStream& rng)
      : mu_(store, name + ".mu", state_dim + privileged_dim, latent_dim, rng),
        sigma_(store, name + ".sigma", state_dim + privileged_dim, latent_dim, rng) {}

  struct Output {
    Var z;
    Var kl;
    Var mu;
    Var sigma;
  };

  Output forward(Tape& tape, Var s_embed, Var g) const {
    Var in = ops::concat_cols(s_embed, g);
    Var mu = mu_(tape, in);
    Var sigma = ops::add_scalar(ops::softplus(sigma_(tape, in)), 1e-6);
    return {Var{}, kl_gaussian(mu, sigma), mu, sigma};
  }

  std::size_t latent_dim() const noexcept { return mu_.out(); }
  Linear& mu_layer() { return mu_; }
  Linear& sigma_layer() { return sigma_; }

 private:
  Linear mu_;
  Linear sigma_;
};

/// z = mu(s,g) + sigma(s,g) * eps with the matching Gaussian KL. Every
/// provider is queried. `deterministic` returns z = mu (evaluation shortcut)
/// while still consuming the noise draws.
inline VibChannel::Output vib_sample(Tape& tape, const VibChannel& channel, Var s_embed,
                                     std::span<PrivilegedProvider* const> providers, std::span<RngStream> rngs,
                                     bool deterministic = false) {
  const std::size_t m = s_embed.rows();
  if (providers.size() != m || rngs.size() != m) throw DimensionError("vib_sample: one provider and rng per row");
  const std::size_t gdim = providers.empty() ? 0 : providers[0]->dim();
  Tensor g({m, gdim});
  for (std::size_t r = 0; r < m; ++r) {
    const std::vector<double> v = providers[r]->query();
    std::copy(v.begin(), v.end(), g.row(r).begin());
  }
  VibChannel::Output out = channel.forward(tape, s_embed, tape.constant(std::move(g)));
  if (deterministic) {
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t k = 0; k < channel.latent_dim(); ++k) (void)rngs[r].normal();
    out.z = out.mu;
  } else {
    out.z = ops::gaussian_sample(out.mu, out.sigma, rngs);
  }
  return out;
}

}  // namespace bottleneck
}  // namespace vbb

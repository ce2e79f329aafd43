#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vbb/bottleneck.hpp"
#include "vbb/diff/nn.hpp"

namespace vbb::agent {

enum class Variant { vbb, vib, uvfa, rag, aic, bernoulli_reinforce };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::vbb: return "vbb";
    case Variant::vib: return "vib";
    case Variant::uvfa: return "uvfa";
    case Variant::rag: return "rag";
    case Variant::aic: return "aic";
    case Variant::bernoulli_reinforce: return "bernoulli_reinforce";
  }
  return "vbb";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::vbb, Variant::vib, Variant::uvfa, Variant::rag, Variant::aic,
                    Variant::bernoulli_reinforce})
    if (to_string(v) == s) return v;
  throw ConfigError("variant", "unknown variant '" + s + "' (vbb, vib, uvfa, rag, aic, bernoulli_reinforce)");
}

/// Variants whose loss carries an information cost weighted by beta.
inline bool has_information_cost(Variant v) {
  return v == Variant::vbb || v == Variant::vib || v == Variant::bernoulli_reinforce;
}

/// Variants gated by the capacity head.
inline bool is_gated(Variant v) { return v == Variant::vbb || v == Variant::bernoulli_reinforce; }

enum class CapacityHeadKind { direct, gaussian };

inline std::string to_string(CapacityHeadKind k) { return k == CapacityHeadKind::direct ? "direct" : "gaussian"; }

inline CapacityHeadKind capacity_head_from_string(const std::string& s) {
  if (s == "direct") return CapacityHeadKind::direct;
  if (s == "gaussian") return CapacityHeadKind::gaussian;
  throw ConfigError("capacity_head", "unknown capacity head '" + s + "' (direct, gaussian)");
}

inline constexpr std::size_t kBaseActions = 7;

struct NetConfig {
  Variant variant = Variant::vbb;
  std::size_t obs_features = 343;
  std::size_t privileged_dim = 2;
  std::size_t hidden = 128;
  std::size_t latent = 64;
  CapacityHeadKind capacity_head = CapacityHeadKind::direct;

  std::size_t actions() const { return variant == Variant::aic ? kBaseActions + 1 : kBaseActions; }
};

struct StepOptions {
  bottleneck::Mode mode = bottleneck::Mode::train;
  bottleneck::GateEstimator estimator = bottleneck::GateEstimator::none;
  bool gate_threshold = false;
  /// Replaces the capacity head output (gated variants only).
  std::optional<double> force_d_cap;
  double rag_probability = 0.5;
  /// Eval mode only: providers used to evaluate the information cost of
  /// gated variants without touching the counted providers.
  std::span<PrivilegedProvider* const> measure_providers = {};
};

struct StepOutput {
  Var logits;     // [m×A]
  Var logprobs;   // [m×A]
  Var probs;      // [m×A]
  Var value;      // [m×1]
  LstmState state;
  Var d_cap;         // [m×1], gated variants
  Var kl;            // [m×1] nats, when available
  Var gate_logprob;  // [m×1], gated variants
  std::vector<int> accessed;
};

/// Observation embedding, LSTM core, variant-specific channel and the
/// actor/critic decoder over [s_embed | z].
class PolicyNet {
 public:
  PolicyNet(const NetConfig& config, std::uint64_t seed) : config_(config) {
    if (config.obs_features == 0 || config.hidden == 0 || config.latent == 0 || config.privileged_dim == 0) {
      throw ConfigError("network", "network dimensions must be positive");
    }
    RngStream rng(seed, 0x5eed);
    const std::size_t h = config.hidden;
    embed1_ = Linear(store_, "embed.l1", config.obs_features, h, rng);
    embed2_ = Linear(store_, "embed.l2", h, h, rng);
    lstm_ = LstmCell(store_, "lstm", h, h, rng);
    if (is_gated(config.variant)) {
      if (config.capacity_head == CapacityHeadKind::direct) {
        capacity_ = bottleneck::CapacityHeadDirect(store_, "capacity", h, h, rng);
      } else {
        capacity_gaussian_ = bottleneck::CapacityHeadGaussian(store_, "capacity", h, h, config.latent, rng);
      }
    }
    if (config.variant == Variant::vib) {
      vib_ = bottleneck::VibChannel(store_, "vib", h, config.privileged_dim, config.latent, rng);
    } else {
      encoder_ = bottleneck::Encoder(store_, "encoder", h, config.privileged_dim, config.latent, rng);
    }
    const std::size_t dec_in = h + config.latent;
    actor1_ = Linear(store_, "actor.l1", dec_in, h, rng);
    actor_out_ = Linear(store_, "actor.out", h, config.actions(), rng, 0.01);
    critic1_ = Linear(store_, "critic.l1", dec_in, h, rng);
    critic2_ = Linear(store_, "critic.l2", h, h, rng);
    critic_out_ = Linear(store_, "critic.out", h, 1, rng);
  }

  PolicyNet(const PolicyNet&) = delete;
  PolicyNet& operator=(const PolicyNet&) = delete;

  const NetConfig& config() const noexcept { return config_; }
  ParameterStore& params() noexcept { return store_; }
  const ParameterStore& params() const noexcept { return store_; }

  LstmState zero_state(Tape& tape, std::size_t rows) const {
    return {tape.constant(Tensor({rows, config_.hidden}, 0.0)), tape.constant(Tensor({rows, config_.hidden}, 0.0))};
  }

  /// Standard-input path only: embedding and recurrence.
  LstmState core(Tape& tape, Var obs, LstmState state) const {
    Var e = ops::tanh(embed2_(tape, ops::tanh(embed1_(tape, obs))));
    return lstm_(tape, e, state);
  }

  Var capacity(Tape& tape, Var s_embed) const {
    if (!is_gated(config_.variant)) throw ContractError("capacity head requested for an ungated variant");
    return config_.capacity_head == CapacityHeadKind::direct ? capacity_(tape, s_embed)
                                                             : capacity_gaussian_(tape, s_embed);
  }

  /// One decision for a batch of m independent rows. Row r reads providers[r]
  /// and draws channel noise from rngs[r]. For the AIC variant, revealed[r]
  /// marks rows whose previous action was the access action.
  StepOutput step(Tape& tape, Var obs, LstmState state, std::span<PrivilegedProvider* const> providers,
                  std::span<RngStream> rngs, const StepOptions& options, std::span<const int> revealed = {}) const {
    const std::size_t m = obs.rows();
    if (obs.cols() != config_.obs_features) {
      throw DimensionError("policy: expected " + std::to_string(config_.obs_features) + " observation features, got " +
                           std::to_string(obs.cols()));
    }
    if (providers.size() != m || rngs.size() != m) throw DimensionError("policy: one provider and rng per row");
    for (auto* p : providers)
      if (p->dim() != config_.privileged_dim) throw DimensionError("policy: provider dimension mismatch");

    StepOutput out;
    out.state = core(tape, obs, state);
    Var s = out.state.h;
    Var z;
    switch (config_.variant) {
      case Variant::vbb:
      case Variant::bernoulli_reinforce: {
        Var d = options.force_d_cap ? tape.constant(Tensor({m, 1}, *options.force_d_cap)) : capacity(tape, s);
        bottleneck::GateOptions gate{options.mode, options.estimator, options.gate_threshold};
        bottleneck::ChannelOutput ch = bottleneck::sample_z(tape, encoder_, s, d, providers, rngs, gate);
        z = ch.z;
        out.d_cap = ch.d_cap;
        out.gate_logprob = ch.gate_logprob;
        out.accessed = std::move(ch.accessed);
        out.kl = ch.kl;
        if (options.mode == bottleneck::Mode::eval && !options.measure_providers.empty()) {
          Var f = encoder_(tape, s, tape.constant(query_all(options.measure_providers, m)));
          out.kl = bottleneck::kl_mixture(d, f);
        }
        break;
      }
      case Variant::vib: {
        auto v = bottleneck::vib_sample(tape, vib_, s, providers, rngs);
        z = v.z;
        out.kl = v.kl;
        out.accessed.assign(m, 1);
        break;
      }
      case Variant::uvfa: {
        z = encoder_(tape, s, tape.constant(query_all(providers, m)));
        out.accessed.assign(m, 1);
        break;
      }
      case Variant::rag: {
        Var d = tape.constant(Tensor({m, 1}, options.rag_probability));
        bottleneck::GateOptions gate{bottleneck::Mode::eval, bottleneck::GateEstimator::none, false};
        bottleneck::ChannelOutput ch = bottleneck::sample_z(tape, encoder_, s, d, providers, rngs, gate);
        z = ch.z;
        out.accessed = std::move(ch.accessed);
        break;
      }
      case Variant::aic: {
        if (!revealed.empty() && revealed.size() != m) throw DimensionError("policy: revealed flags per row");
        Tensor g({m, config_.privileged_dim}, 0.0);
        out.accessed.assign(m, 0);
        for (std::size_t r = 0; r < m; ++r) {
          if (revealed.empty() || !revealed[r]) continue;
          const auto v = providers[r]->query();
          std::copy(v.begin(), v.end(), g.row(r).begin());
          out.accessed[r] = 1;
        }
        z = encoder_(tape, s, tape.constant(std::move(g)));
        break;
      }
    }

    Var dec = ops::concat_cols(s, z);
    out.logits = actor_out_(tape, ops::tanh(actor1_(tape, dec)));
    auto sm = ops::softmax_logits(out.logits);
    out.probs = sm.probs;
    out.logprobs = sm.logprobs;
    out.value = critic_out_(tape, ops::tanh(critic2_(tape, ops::tanh(critic1_(tape, dec)))));
    return out;
  }

  Linear& capacity_output_layer() { return capacity_.output_layer(); }
  const bottleneck::Encoder& encoder() const { return encoder_; }

 private:
  static Tensor query_all(std::span<PrivilegedProvider* const> providers, std::size_t m) {
    const std::size_t gdim = providers.front()->dim();
    Tensor g({m, gdim});
    for (std::size_t r = 0; r < m; ++r) {
      const auto v = providers[r]->query();
      std::copy(v.begin(), v.end(), g.row(r).begin());
    }
    return g;
  }

  NetConfig config_;
  ParameterStore store_;
  Linear embed1_, embed2_;
  LstmCell lstm_;
  bottleneck::CapacityHeadDirect capacity_;
  bottleneck::CapacityHeadGaussian capacity_gaussian_;
  bottleneck::Encoder encoder_;
  bottleneck::VibChannel vib_;
  Linear actor1_, actor_out_;
  Linear critic1_, critic2_, critic_out_;
};

/// Index drawn from a probability row by inverse CDF on one uniform.
inline std::size_t sample_categorical(std::span<const double> probs, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace vbb::agent

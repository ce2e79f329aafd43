#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include "vbb/agent/env_batch.hpp"
#include "vbb/agent/policy.hpp"
#include "vbb/agent/train.hpp"
#include "vbb/grid/env.hpp"

namespace vbb::agent {

struct EvalSettings {
  std::string env = "MultiRoomN4S5";
  std::size_t episodes = 500;
  std::uint64_t seed = 1'000'003;
  bool greedy = false;
  bool gate_threshold = false;
  std::optional<double> force_d_cap;
  /// Parallel episodes per forward pass.
  std::size_t batch = 32;
  bool measure_bits = true;
  bool keep_logs = false;
};

struct EpisodeStep {
  grid::Pos pos;
  int dir = 0;
  std::size_t action = 0;
  double d_cap = -1.0;  // negative when the variant has no capacity head
  bool accessed = false;
  bool junction = false;
  std::optional<double> kl_nats;
};

struct EpisodeLog {
  std::size_t index = 0;
  std::uint64_t level_seed = 0;
  bool success = false;
  double reward = 0.0;
  std::vector<EpisodeStep> steps;
};

struct JunctionStats {
  std::size_t steps = 0;
  std::size_t junction_steps = 0;
  std::size_t accesses = 0;
  std::size_t junction_accesses = 0;
  double access_rate = 0.0;
  /// Share of access events taken at junction cells.
  double junction_access_fraction = 0.0;
  /// junction_access_fraction divided by the share of all steps at junctions.
  double junction_enrichment = 0.0;
};

inline JunctionStats junction_stats(const std::vector<EpisodeLog>& logs) {
  JunctionStats s;
  for (const auto& log : logs)
    for (const auto& st : log.steps) {
      ++s.steps;
      if (st.junction) ++s.junction_steps;
      if (st.accessed) {
        ++s.accesses;
        if (st.junction) ++s.junction_accesses;
      }
    }
  if (s.steps > 0) s.access_rate = static_cast<double>(s.accesses) / static_cast<double>(s.steps);
  if (s.accesses > 0) {
    s.junction_access_fraction = static_cast<double>(s.junction_accesses) / static_cast<double>(s.accesses);
  }
  if (s.junction_steps > 0 && s.steps > 0) {
    const double share = static_cast<double>(s.junction_steps) / static_cast<double>(s.steps);
    s.junction_enrichment = s.junction_access_fraction / share;
  }
  return s;
}

struct EvalResult {
  std::size_t episodes = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  JunctionStats junction;
  std::optional<double> mean_kl_nats;
  std::optional<double> mean_kl_bits;
  std::optional<double> mean_kl_bits_floored;
  std::size_t provider_invocations = 0;
  std::vector<EpisodeLog> logs;
};

/// Level seed of evaluation episode `index`.
inline std::uint64_t eval_level_seed(std::uint64_t seed, std::size_t index) {
  return RngStream(seed, 3 * static_cast<std::uint64_t>(index)).next_u64();
}

/// Runs `settings.episodes` episodes on fresh levels, each with its own
/// random streams, so results do not depend on the batch size.
inline EvalResult evaluate(const PolicyNet& net, const AgentSpec& spec, const EvalSettings& settings) {
  if (settings.episodes == 0) throw ConfigError("episodes", "at least one evaluation episode is required");
  if (settings.batch == 0) throw ConfigError("batch", "evaluation batch must be positive");
  const grid::EnvSpec env_spec = grid::parse_env_name(settings.env);
  if (grid::feature_dim(spec.view) != net.config().obs_features) {
    throw ConfigError("view", "observation shape does not match the network (" +
                                  std::to_string(grid::feature_dim(spec.view)) + " vs " +
                                  std::to_string(net.config().obs_features) + " features)");
  }
  if (provider_dim(spec.provider, spec.planner_horizon) != net.config().privileged_dim) {
    throw ConfigError("provider", "privileged input dimension does not match the network");
  }

  const Variant variant = net.config().variant;
  const bool gated = is_gated(variant);
  const std::size_t hidden = net.config().hidden;

  struct Slot {
    std::size_t index = 0;
    std::unique_ptr<grid::EnvState> env;
    std::unique_ptr<PrivilegedProvider> provider;
    std::unique_ptr<PrivilegedProvider> measure;
    RngStream action_rng, channel_rng;
    std::vector<double> h, c;
    int revealed = 0;
    EpisodeLog log;
  };

  EvalResult result;
  result.logs.resize(settings.episodes);
  std::size_t next_episode = 0;
  std::size_t invocations = 0;

  auto start = [&](Slot& slot) {
    const std::size_t i = next_episode++;
    slot.index = i;
    const std::uint64_t level_seed = eval_level_seed(settings.seed, i);
    slot.env = std::make_unique<grid::EnvState>(grid::reset(env_spec, level_seed, spec.max_steps));
    slot.provider = make_provider(spec.provider, slot.env.get(), spec.planner_horizon);
    slot.measure = make_provider(spec.provider, slot.env.get(), spec.planner_horizon);
    slot.action_rng = RngStream(settings.seed, 3 * static_cast<std::uint64_t>(i) + 1);
    slot.channel_rng = RngStream(settings.seed, 3 * static_cast<std::uint64_t>(i) + 2);
    slot.h.assign(hidden, 0.0);
    slot.c.assign(hidden, 0.0);
    slot.revealed = 0;
    slot.log = EpisodeLog{};
    slot.log.index = i;
    slot.log.level_seed = level_seed;
  };

  std::vector<Slot> slots;
  while (slots.size() < settings.batch && next_episode < settings.episodes) {
    slots.emplace_back();
    start(slots.back());
  }

  StepOptions opts;
  opts.mode = bottleneck::Mode::eval;
  opts.gate_threshold = settings.gate_threshold;
  opts.force_d_cap = settings.force_d_cap;

  while (!slots.empty()) {
    const std::size_t m = slots.size();
    Tape tape(TapeOptions{.record = false, .checked = true});
    Tensor obs({m, net.config().obs_features});
    Tensor h({m, hidden}), c({m, hidden});
    std::vector<PrivilegedProvider*> providers, measures;
    std::vector<RngStream> rngs;
    std::vector<int> revealed;
    for (std::size_t r = 0; r < m; ++r) {
      Slot& s = slots[r];
      grid::observation_features(grid::observe(*s.env, spec.view), obs.row(r));
      std::copy(s.h.begin(), s.h.end(), h.row(r).begin());
      std::copy(s.c.begin(), s.c.end(), c.row(r).begin());
      providers.push_back(s.provider.get());
      measures.push_back(s.measure.get());
      rngs.push_back(s.channel_rng);
      revealed.push_back(s.revealed);
    }
    opts.measure_providers = settings.measure_bits && gated ? std::span<PrivilegedProvider* const>(measures)
                                                            : std::span<PrivilegedProvider* const>();
    LstmState st{tape.constant(std::move(h)), tape.constant(std::move(c))};
    StepOutput out = net.step(tape, tape.constant(std::move(obs)), st, providers, rngs, opts, revealed);

    const Tensor& probs = out.probs.value();
    std::vector<Slot> survivors;
    for (std::size_t r = 0; r < m; ++r) {
      Slot& s = slots[r];
      s.channel_rng = rngs[r];
      const auto hr = out.state.h.value().row(r);
      const auto cr = out.state.c.value().row(r);
      s.h.assign(hr.begin(), hr.end());
      s.c.assign(cr.begin(), cr.end());

      EpisodeStep step;
      step.pos = s.env->pos;
      step.dir = static_cast<int>(s.env->dir);
      step.accessed = out.accessed[r] != 0;
      step.junction = grid::is_junction(s.env->grid(), s.env->pos, spec.junction_radius);
      if (out.d_cap.valid()) step.d_cap = out.d_cap.value()[r];
      if (out.kl.valid() && (variant == Variant::vib || settings.measure_bits)) {
        step.kl_nats = out.kl.value()[r];
      }
      const auto row = probs.row(r);
      step.action = settings.greedy ? argmax(row) : sample_categorical(row, s.action_rng);

      const ActionOutcome sr = apply_action(*s.env, step.action, spec.aic_cost);
      s.revealed = sr.reveal;
      s.log.reward += sr.reward;
      s.log.steps.push_back(step);

      if (sr.done) {
        s.log.success = s.env->success;
        invocations += s.provider->invocations();
        result.logs[s.index] = std::move(s.log);
        if (next_episode < settings.episodes) {
          start(s);
          survivors.push_back(std::move(s));
        }
      } else {
        survivors.push_back(std::move(s));
      }
    }
    slots = std::move(survivors);
  }

  result.episodes = settings.episodes;
  double reward_sum = 0.0, kl_sum = 0.0, kl_floor_sum = 0.0;
  std::size_t kl_count = 0;
  for (const auto& log : result.logs) {
    result.successes += log.success ? 1 : 0;
    reward_sum += log.reward;
    for (const auto& st : log.steps) {
      if (!st.kl_nats) continue;
      kl_sum += *st.kl_nats;
      kl_floor_sum += std::max(0.0, *st.kl_nats);
      ++kl_count;
    }
  }
  result.success_rate = static_cast<double>(result.successes) / static_cast<double>(result.episodes);
  result.mean_return = reward_sum / static_cast<double>(result.episodes);
  result.junction = junction_stats(result.logs);
  result.provider_invocations = invocations;
  if (kl_count > 0) {
    result.mean_kl_nats = kl_sum / static_cast<double>(kl_count);
    result.mean_kl_bits = *result.mean_kl_nats / std::numbers::ln2;
    result.mean_kl_bits_floored = kl_floor_sum / static_cast<double>(kl_count) / std::numbers::ln2;
  }
  if (!settings.keep_logs) result.logs.clear();
  return result;
}

}  // namespace vbb::agent

#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vbb/agent/a2c.hpp"
#include "vbb/agent/env_batch.hpp"
#include "vbb/agent/policy.hpp"
#include "vbb/grid/env.hpp"

namespace vbb::agent {

/// Network plus the environment-facing choices that shape it.
struct AgentSpec {
  NetConfig net;
  ProviderKind provider = ProviderKind::goal_offset;
  std::size_t planner_horizon = 3;
  int view = grid::kDefaultView;
  bottleneck::GateEstimator gate_estimator = bottleneck::GateEstimator::none;
  double aic_cost = 0.01;
  int junction_radius = 1;
  int max_steps = grid::kMaxSteps;

  /// Fills the network input/privileged dimensions from view and provider.
  void sync_dims() {
    net.obs_features = grid::feature_dim(view);
    net.privileged_dim = provider_dim(provider, planner_horizon);
  }

  bottleneck::GateEstimator effective_estimator() const {
    return net.variant == Variant::bernoulli_reinforce ? bottleneck::GateEstimator::score_function : gate_estimator;
  }
};

struct TrainSettings {
  std::string env = "MultiRoomN2S4";
  std::size_t workers = 8;
  std::uint64_t total_frames = 3'000'000;
  std::uint64_t seed = 1;
  std::uint64_t log_interval = 20'000;
  A2CSettings a2c;
  OptimizerSettings optimizer;
};

struct CurvePoint {
  std::uint64_t frames = 0;
  std::uint64_t updates = 0;
  std::uint64_t episodes = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
  double access_rate = 0.0;
  double mean_d_cap = 0.0;
  double mean_kl_nats = 0.0;
  double entropy = 0.0;
  double loss = 0.0;
  double wall_clock_s = 0.0;
};

struct ActionOutcome {
  double reward = 0.0;
  bool done = false;
  /// The privileged vector is revealed on the next decision (AIC access).
  int reveal = 0;
};

/// Executes a policy action. Index 7 is the AIC access action: the agent
/// stays put and pays `aic_cost`.
inline ActionOutcome apply_action(grid::EnvState& env, std::size_t action, double aic_cost) {
  if (action > kBaseActions) throw ContractError("action index " + std::to_string(action) + " out of range");
  if (action == kBaseActions) {
    const auto r = grid::step(env, grid::Action::done);
    return {r.reward - aic_cost, r.done, 1};
  }
  const auto r = grid::step(env, static_cast<grid::Action>(action));
  return {r.reward, r.done, 0};
}

/// Synchronous A2C over W workers with T-step rollouts.
class Trainer {
 public:
  static constexpr std::size_t kSuccessWindow = 500;

  Trainer(AgentSpec spec, TrainSettings settings)
      : spec_(std::move(spec)),
        settings_(std::move(settings)),
        env_spec_(grid::parse_env_name(settings_.env)),
        net_((spec_.sync_dims(), spec_.net), settings_.seed),
        optimizer_(settings_.optimizer) {
    if (settings_.workers == 0) throw ConfigError("workers", "at least one worker is required");
    if (settings_.a2c.rollout == 0) throw ConfigError("rollout", "rollout length must be positive");
    const std::size_t w = settings_.workers;
    envs_.resize(w);
    for (std::size_t i = 0; i < w; ++i) {
      level_rngs_.emplace_back(settings_.seed, 100 + i);
      action_rngs_.emplace_back(settings_.seed, 200 + i);
      channel_rngs_.emplace_back(settings_.seed, 300 + i);
    }
    for (std::size_t i = 0; i < w; ++i) {
      envs_[i] = new_episode(i);
      providers_.push_back(make_provider(spec_.provider, &envs_[i], spec_.planner_horizon));
    }
    for (std::size_t i = 0; i < w; ++i) recorders_.emplace_back(providers_[i].get());
    for (auto& r : recorders_) recorder_ptrs_.push_back(&r);
    h_ = Tensor({w, spec_.net.hidden}, 0.0);
    c_ = Tensor({w, spec_.net.hidden}, 0.0);
    revealed_.assign(w, 0);
    ep_return_.assign(w, 0.0);
    start_ = std::chrono::steady_clock::now();
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const AgentSpec& spec() const noexcept { return spec_; }
  const TrainSettings& settings() const noexcept { return settings_; }
  PolicyNet& net() noexcept { return net_; }
  Optimizer& optimizer() noexcept { return optimizer_; }
  std::uint64_t frames() const noexcept { return frames_; }
  std::uint64_t updates() const noexcept { return updates_; }
  bool finished() const noexcept { return frames_ >= settings_.total_frames; }
  const LossReport& last_loss() const noexcept { return last_loss_; }
  const RolloutBuffer& last_rollout() const noexcept { return buffer_; }

  /// Success rate over the most recent finished training episodes.
  double recent_success() const {
    if (recent_.empty()) return 0.0;
    double s = 0.0;
    for (int v : recent_) s += v;
    return s / static_cast<double>(recent_.size());
  }

  std::vector<RngStream*> rng_streams() {
    std::vector<RngStream*> out;
    for (auto* group : {&level_rngs_, &action_rngs_, &channel_rngs_})
      for (auto& r : *group) out.push_back(&r);
    return out;
  }
  void set_frames(std::uint64_t frames, std::uint64_t updates) {
    frames_ = frames;
    updates_ = updates;
  }

  StepOptions train_options() const {
    StepOptions o;
    o.mode = bottleneck::Mode::train;
    o.estimator = spec_.effective_estimator();
    return o;
  }

  /// Collects one rollout and applies one update.
  void update() {
    const std::size_t w = settings_.workers;
    const StepOptions opts = train_options();
    Tape tape;
    buffer_ = RolloutBuffer{};
    buffer_.h0 = h_;
    buffer_.c0 = c_;
    LstmState st{tape.constant(h_), tape.constant(c_)};
    std::vector<StepVars> vars;
    for (std::size_t t = 0; t < settings_.a2c.rollout; ++t) {
      RolloutStep step;
      step.obs = batch_features(envs_, spec_.view);
      for (const auto& r : channel_rngs_) step.channel_rng.push_back(r.state());
      step.revealed = revealed_;
      for (auto& r : recorders_) r.clear();
      StepOutput out = net_.step(tape, tape.constant(step.obs), st, recorder_ptrs_, channel_rngs_, opts, revealed_);
      step.privileged = Tensor({w, spec_.net.privileged_dim}, 0.0);
      for (std::size_t i = 0; i < w; ++i) {
        const auto& v = recorders_[i].last();
        std::copy(v.begin(), v.end(), step.privileged.row(i).begin());
      }
      step.accessed = out.accessed;
      if (out.d_cap.valid()) step.d_cap.assign(out.d_cap.value().values().begin(), out.d_cap.value().values().end());
      if (out.kl.valid()) step.kl.assign(out.kl.value().values().begin(), out.kl.value().values().end());
      step.values.assign(out.value.value().values().begin(), out.value.value().values().end());

      const Tensor& probs = out.probs.value();
      Tensor keep({w, 1}, 1.0);
      for (std::size_t i = 0; i < w; ++i) {
        const std::size_t a = sample_categorical(probs.row(i), action_rngs_[i]);
        const ActionOutcome o = apply_action(envs_[i], a, spec_.aic_cost);
        const double reward = o.reward;
        const bool done = o.done;
        int reveal_next = o.reveal;
        step.actions.push_back(a);
        step.rewards.push_back(reward);
        step.dones.push_back(done ? 1 : 0);
        window_.steps += 1;
        window_.accessed += out.accessed[i];
        if (!step.d_cap.empty()) window_.d_cap += step.d_cap[i];
        if (!step.kl.empty()) window_.kl += step.kl[i];
        ep_return_[i] += reward;
        if (done) {
          window_.episodes += 1;
          window_.returns += ep_return_[i];
          window_.successes += envs_[i].success ? 1 : 0;
          recent_.push_back(envs_[i].success ? 1 : 0);
          if (recent_.size() > kSuccessWindow) recent_.pop_front();
          ++episodes_;
          ep_return_[i] = 0.0;
          envs_[i] = new_episode(i);
          reveal_next = 0;
          keep[i] = 0.0;
        }
        revealed_[i] = reveal_next;
      }
      vars.push_back({out.logprobs, out.probs, out.value, out.kl, out.gate_logprob});
      Var k = tape.constant(keep);
      st = {ops::mul_col(out.state.h, k), ops::mul_col(out.state.c, k)};
      buffer_.steps.push_back(std::move(step));
    }
    h_ = st.h.value();
    c_ = st.c.value();
    buffer_.bootstrap = bootstrap_values();

    const Returns ret = nstep_returns(buffer_, settings_.a2c.gamma);
    Loss loss = a2c_loss(tape, vars, buffer_, ret, settings_.a2c, has_information_cost(spec_.net.variant),
                         is_gated(spec_.net.variant) &&
                             opts.estimator == bottleneck::GateEstimator::score_function);
    try {
      last_loss_ = a2c_update(tape, loss, net_.params(), optimizer_, settings_.a2c);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at frame " + std::to_string(frames_) + ", update " +
                         std::to_string(updates_));
    }
    window_.loss += last_loss_.total;
    window_.entropy += last_loss_.entropy;
    window_.updates += 1;
    frames_ += settings_.a2c.rollout * w;
    ++updates_;
  }

  /// Trains until the frame budget is spent, reporting every log interval.
  void run(const std::function<void(const CurvePoint&)>& on_log = {}) {
    std::uint64_t next_log = (frames_ / settings_.log_interval + 1) * settings_.log_interval;
    while (!finished()) {
      update();
      if (frames_ >= next_log || finished()) {
        const CurvePoint p = take_curve_point();
        if (on_log) on_log(p);
        next_log += settings_.log_interval;
      }
    }
  }

  /// Summarizes and clears the statistics gathered since the last call.
  CurvePoint take_curve_point() {
    CurvePoint p;
    p.frames = frames_;
    p.updates = updates_;
    p.episodes = episodes_;
    if (window_.episodes > 0) {
      p.mean_return = window_.returns / static_cast<double>(window_.episodes);
      p.success_rate = static_cast<double>(window_.successes) / static_cast<double>(window_.episodes);
    }
    if (window_.steps > 0) {
      p.access_rate = static_cast<double>(window_.accessed) / static_cast<double>(window_.steps);
      p.mean_d_cap = window_.d_cap / static_cast<double>(window_.steps);
      p.mean_kl_nats = window_.kl / static_cast<double>(window_.steps);
    }
    if (window_.updates > 0) {
      p.loss = window_.loss / static_cast<double>(window_.updates);
      p.entropy = window_.entropy / static_cast<double>(window_.updates);
    }
    p.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    window_ = Window{};
    return p;
  }

 private:
  struct Window {
    std::uint64_t steps = 0, accessed = 0, episodes = 0, successes = 0, updates = 0;
    double returns = 0.0, d_cap = 0.0, kl = 0.0, loss = 0.0, entropy = 0.0;
  };

  grid::EnvState new_episode(std::size_t worker) {
    return grid::reset(env_spec_, level_rngs_[worker].next_u64(), spec_.max_steps);
  }

  // V(s_T) on a forward-only tape. Channel streams are copied so the real
  // next step sees the same draws.
  std::vector<double> bootstrap_values() {
    Tape tape(TapeOptions{.record = false, .checked = true});
    std::vector<RngStream> rngs = channel_rngs_;
    std::vector<PrivilegedProvider*> ptrs;
    for (auto& p : providers_) ptrs.push_back(p.get());
    LstmState st{tape.constant(h_), tape.constant(c_)};
    StepOutput out =
        net_.step(tape, tape.constant(batch_features(envs_, spec_.view)), st, ptrs, rngs, train_options(), revealed_);
    const auto v = out.value.value().values();
    return {v.begin(), v.end()};
  }

  AgentSpec spec_;
  TrainSettings settings_;
  grid::EnvSpec env_spec_;
  PolicyNet net_;
  Optimizer optimizer_;
  std::vector<grid::EnvState> envs_;
  std::vector<std::unique_ptr<PrivilegedProvider>> providers_;
  std::deque<RecordingProvider> recorders_;
  std::vector<PrivilegedProvider*> recorder_ptrs_;
  std::vector<RngStream> level_rngs_, action_rngs_, channel_rngs_;
  Tensor h_, c_;
  std::vector<int> revealed_;
  std::vector<double> ep_return_;
  std::deque<int> recent_;
  std::uint64_t frames_ = 0, updates_ = 0, episodes_ = 0;
  Window window_;
  LossReport last_loss_;
  RolloutBuffer buffer_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace vbb::agent

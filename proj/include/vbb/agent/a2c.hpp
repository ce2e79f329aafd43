#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include "vbb/agent/env_batch.hpp"
#include "vbb/agent/policy.hpp"
#include "vbb/diff/optim.hpp"

namespace vbb::agent {

struct A2CSettings {
  double gamma = 0.99;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  double beta = 0.0;
  std::size_t rollout = 5;
};

/// Everything needed to rebuild the forward pass of one collection step.
struct RolloutStep {
  Tensor obs;         // [W×F]
  Tensor privileged;  // [W×G], zero rows where no provider was queried
  std::vector<RngStream::State> channel_rng;  // channel streams before the step
  std::vector<int> revealed;                  // AIC: previous action was "access"
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<int> dones;
  std::vector<double> values;
  std::vector<int> accessed;
  std::vector<double> d_cap;
  std::vector<double> kl;
};

struct RolloutBuffer {
  Tensor h0;
  Tensor c0;
  std::vector<RolloutStep> steps;
  std::vector<double> bootstrap;  // V(s_T) per worker

  std::size_t horizon() const noexcept { return steps.size(); }
  std::size_t workers() const noexcept { return steps.empty() ? 0 : steps.front().actions.size(); }
};

/// Graph handles of one step needed by the loss.
struct StepVars {
  Var logprobs;
  Var probs;
  Var value;
  Var kl;
  Var gate_logprob;
};

struct Returns {
  std::vector<std::vector<double>> returns;     // [T][W]
  std::vector<std::vector<double>> advantages;  // [T][W]
};

/// R_t = r_t + gamma * (1 - done_t) * R_{t+1}, seeded with the bootstrap value.
inline std::vector<std::vector<double>> nstep_returns(const std::vector<std::vector<double>>& rewards,
                                                      const std::vector<std::vector<int>>& dones,
                                                      const std::vector<double>& bootstrap, double gamma) {
  const std::size_t t_max = rewards.size();
  if (dones.size() != t_max) throw DimensionError("nstep_returns: rewards/dones length mismatch");
  std::vector<std::vector<double>> out(t_max);
  std::vector<double> running = bootstrap;
  for (std::size_t t = t_max; t-- > 0;) {
    if (rewards[t].size() != running.size() || dones[t].size() != running.size()) {
      throw DimensionError("nstep_returns: worker count mismatch");
    }
    out[t].resize(running.size());
    for (std::size_t w = 0; w < running.size(); ++w) {
      running[w] = rewards[t][w] + gamma * (dones[t][w] ? 0.0 : running[w]);
      out[t][w] = running[w];
    }
  }
  return out;
}

inline Returns nstep_returns(const RolloutBuffer& buffer, double gamma) {
  std::vector<std::vector<double>> rewards, values;
  std::vector<std::vector<int>> dones;
  for (const auto& s : buffer.steps) {
    rewards.push_back(s.rewards);
    dones.push_back(s.dones);
    values.push_back(s.values);
  }
  Returns r;
  r.returns = nstep_returns(rewards, dones, buffer.bootstrap, gamma);
  r.advantages = r.returns;
  for (std::size_t t = 0; t < values.size(); ++t)
    for (std::size_t w = 0; w < values[t].size(); ++w) r.advantages[t][w] -= values[t][w];
  return r;
}

struct LossReport {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double gate = 0.0;
  double grad_norm = 0.0;

  std::string describe() const {
    std::ostringstream os;
    os << "total=" << total << " policy=" << policy << " value=" << value << " entropy=" << entropy << " kl=" << kl
       << " gate=" << gate << " grad_norm=" << grad_norm;
    return os.str();
  }
};

struct Loss {
  Var total;
  LossReport report;
};

/// policy + value_coef * value - entropy_coef * entropy + beta * mean(kl)
/// [+ score-function term for the gate], every term averaged over T×W.
inline Loss a2c_loss(Tape& tape, const std::vector<StepVars>& vars, const RolloutBuffer& buffer, const Returns& ret,
                     const A2CSettings& s, bool use_kl, bool score_function) {
  const std::size_t t_max = vars.size();
  if (t_max == 0 || t_max != buffer.horizon()) throw DimensionError("a2c_loss: step count mismatch");
  const std::size_t w = buffer.workers();
  const double inv_n = 1.0 / static_cast<double>(t_max * w);

  Var policy, value, entropy, kl, gate;
  auto accumulate = [](Var& acc, Var term) { acc = acc.valid() ? ops::add(acc, term) : term; };
  for (std::size_t t = 0; t < t_max; ++t) {
    const StepVars& v = vars[t];
    Tensor adv({w, 1}), target({w, 1});
    for (std::size_t r = 0; r < w; ++r) {
      adv[r] = ret.advantages[t][r];
      target[r] = ret.returns[t][r];
    }
    Var a = tape.constant(adv);
    accumulate(policy, ops::sum(ops::mul(ops::pick(v.logprobs, buffer.steps[t].actions), a)));
    accumulate(value, ops::sum(ops::square(ops::sub(v.value, tape.constant(target)))));
    accumulate(entropy, ops::neg(ops::sum(ops::mul(v.probs, v.logprobs))));
    if (use_kl) {
      if (!v.kl.valid()) throw ContractError("a2c_loss: information cost missing for a costed variant");
      accumulate(kl, ops::sum(v.kl));
    }
    if (score_function) {
      if (!v.gate_logprob.valid()) throw ContractError("a2c_loss: gate log-probability missing");
      accumulate(gate, ops::sum(ops::mul(v.gate_logprob, a)));
    }
  }
  Loss out;
  Var pl = ops::scale(policy, -inv_n);
  Var vl = ops::scale(value, inv_n);
  Var en = ops::scale(entropy, inv_n);
  out.total = ops::add(pl, ops::scale(vl, s.value_coef));
  out.total = ops::sub(out.total, ops::scale(en, s.entropy_coef));
  out.report.policy = pl.value().item();
  out.report.value = vl.value().item();
  out.report.entropy = en.value().item();
  if (use_kl) {
    Var klm = ops::scale(kl, inv_n);
    out.report.kl = klm.value().item();
    out.total = ops::add(out.total, ops::scale(klm, s.beta));
  }
  if (score_function) {
    Var gl = ops::scale(gate, -inv_n);
    out.report.gate = gl.value().item();
    out.total = ops::add(out.total, gl);
  }
  out.report.total = out.total.value().item();
  return out;
}

/// Backward pass, global-norm clipping and one optimizer step.
inline LossReport a2c_update(Tape& tape, Loss& loss, ParameterStore& params, Optimizer& optimizer,
                             const A2CSettings& s) {
  const LossReport& r = loss.report;
  for (double v : {r.total, r.policy, r.value, r.entropy, r.kl, r.gate}) {
    if (!std::isfinite(v)) throw NumericError("non-finite loss component: " + r.describe());
  }
  params.zero_grad();
  tape.backward(loss.total);
  loss.report.grad_norm = clip_grad_norm(params, s.max_grad_norm);
  if (!std::isfinite(loss.report.grad_norm)) throw NumericError("non-finite gradient norm: " + loss.report.describe());
  optimizer.step(params);
  return loss.report;
}

/// Rebuilds the forward pass of a recorded rollout on `tape` using the
/// recorded observations, privileged inputs and channel random streams.
inline std::vector<StepVars> replay(Tape& tape, const PolicyNet& net, const RolloutBuffer& buffer,
                                    const StepOptions& options) {
  const std::size_t w = buffer.workers();
  LstmState st{tape.constant(buffer.h0), tape.constant(buffer.c0)};
  std::vector<FixedProvider> fixed(w);
  std::vector<PrivilegedProvider*> ptrs(w);
  std::vector<StepVars> vars;
  for (const RolloutStep& step : buffer.steps) {
    std::vector<RngStream> rngs;
    for (std::size_t r = 0; r < w; ++r) {
      const auto row = step.privileged.row(r);
      fixed[r].set(std::vector<double>(row.begin(), row.end()));
      ptrs[r] = &fixed[r];
      rngs.emplace_back(step.channel_rng[r]);
    }
    StepOutput out = net.step(tape, tape.constant(step.obs), st, ptrs, rngs, options, step.revealed);
    vars.push_back({out.logprobs, out.probs, out.value, out.kl, out.gate_logprob});
    Tensor keep({w, 1});
    for (std::size_t r = 0; r < w; ++r) keep[r] = step.dones[r] ? 0.0 : 1.0;
    Var k = tape.constant(keep);
    st = {ops::mul_col(out.state.h, k), ops::mul_col(out.state.c, k)};
  }
  return vars;
}

}  // namespace vbb::agent

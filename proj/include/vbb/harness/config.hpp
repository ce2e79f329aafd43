#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbb/agent/train.hpp"
#include "vbb/error.hpp"
#include "vbb/grid/grid.hpp"

namespace vbb::harness {

using json = nlohmann::json;

/// One experiment: a variant trained on one environment for each seed, then
/// evaluated on a list of environments.
struct ExperimentConfig {
  std::string train_env = "MultiRoomN2S4";
  std::vector<std::string> eval_envs{"MultiRoomN4S5"};
  agent::Variant variant = agent::Variant::vbb;
  std::optional<double> beta;

  std::string optimizer = "rmsprop";
  double lr = 7e-4;
  double rms_rho = 0.99;
  double eps = 1e-8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;

  double gamma = 0.99;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  std::size_t rollout = 5;

  std::size_t hidden = 128;
  std::size_t latent = 64;
  agent::CapacityHeadKind capacity_head = agent::CapacityHeadKind::direct;
  bottleneck::GateEstimator gate_estimator = bottleneck::GateEstimator::none;
  agent::ProviderKind provider = agent::ProviderKind::goal_offset;
  std::size_t planner_horizon = 3;
  int view = grid::kDefaultView;
  double aic_cost = 0.01;
  int junction_radius = 1;
  int max_steps = grid::kMaxSteps;

  std::size_t workers = 8;
  std::uint64_t total_frames = 3'000'000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t log_interval = 20'000;
  std::uint64_t checkpoint_interval = 500'000;

  std::size_t eval_episodes = 500;
  std::uint64_t eval_seed = 1'000'003;

  bool operator==(const ExperimentConfig&) const = default;
};

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["train_env"] = c.train_env;
  j["eval_envs"] = c.eval_envs;
  j["variant"] = agent::to_string(c.variant);
  j["beta"] = c.beta ? json(*c.beta) : json(nullptr);
  j["optimizer"] = c.optimizer;
  j["lr"] = c.lr;
  j["rms_rho"] = c.rms_rho;
  j["eps"] = c.eps;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["gamma"] = c.gamma;
  j["entropy_coef"] = c.entropy_coef;
  j["value_coef"] = c.value_coef;
  j["max_grad_norm"] = c.max_grad_norm;
  j["rollout"] = c.rollout;
  j["hidden"] = c.hidden;
  j["latent"] = c.latent;
  j["capacity_head"] = agent::to_string(c.capacity_head);
  j["gate_estimator"] = bottleneck::to_string(c.gate_estimator);
  j["provider"] = agent::to_string(c.provider);
  j["planner_horizon"] = c.planner_horizon;
  j["view"] = c.view;
  j["aic_cost"] = c.aic_cost;
  j["junction_radius"] = c.junction_radius;
  j["max_steps"] = c.max_steps;
  j["workers"] = c.workers;
  j["total_frames"] = c.total_frames;
  j["seeds"] = c.seeds;
  j["log_interval"] = c.log_interval;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["eval_episodes"] = c.eval_episodes;
  j["eval_seed"] = c.eval_seed;
  return j;
}

namespace detail {

template <typename T>
T field(const json& j, const char* name, const T& fallback) {
  auto it = j.find(name);
  if (it == j.end()) return fallback;
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError(name, "expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(name, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError(name, "must be non-negative");
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(name, "expected a string");
    }
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(name, e.what());
  }
}

}  // namespace detail

/// Checks ranges and cross-field requirements.
inline void validate(const ExperimentConfig& c) {
  auto check_env = [](const char* field, const std::string& name) {
    try {
      grid::parse_env_name(name);
    } catch (const ConfigError& e) {
      throw ConfigError(field, e.what());
    }
  };
  check_env("train_env", c.train_env);
  for (const auto& e : c.eval_envs) check_env("eval_envs", e);
  if (agent::has_information_cost(c.variant)) {
    if (!c.beta) throw ConfigError("beta", "required for variant " + agent::to_string(c.variant));
  }
  if (c.beta && !(*c.beta >= 0.0)) throw ConfigError("beta", "must be non-negative");
  if (c.optimizer != "rmsprop" && c.optimizer != "adam") {
    throw ConfigError("optimizer", "unknown optimizer '" + c.optimizer + "' (rmsprop, adam)");
  }
  if (!(c.lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw ConfigError("gamma", "must lie in [0,1]");
  if (!(c.max_grad_norm > 0.0)) throw ConfigError("max_grad_norm", "must be positive");
  if (c.rollout == 0) throw ConfigError("rollout", "must be positive");
  if (c.hidden == 0) throw ConfigError("hidden", "must be positive");
  if (c.latent == 0) throw ConfigError("latent", "must be positive");
  if (c.view < 3 || c.view % 2 == 0) throw ConfigError("view", "must be odd and at least 3");
  if (c.planner_horizon == 0) throw ConfigError("planner_horizon", "must be positive");
  if (c.junction_radius < 0) throw ConfigError("junction_radius", "must be non-negative");
  if (c.max_steps <= 0) throw ConfigError("max_steps", "must be positive");
  if (c.workers == 0) throw ConfigError("workers", "must be positive");
  if (c.total_frames == 0) throw ConfigError("total_frames", "must be positive");
  if (c.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (c.log_interval == 0) throw ConfigError("log_interval", "must be positive");
  if (c.eval_episodes == 0) throw ConfigError("eval_episodes", "must be positive");
  if (c.variant == agent::Variant::bernoulli_reinforce &&
      c.gate_estimator != bottleneck::GateEstimator::none &&
      c.gate_estimator != bottleneck::GateEstimator::score_function) {
    throw ConfigError("gate_estimator", "bernoulli_reinforce trains the gate with score_function");
  }
}

/// Parses and validates a config document. Unknown keys are rejected.
inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config", "top level must be a JSON object");
  static const std::set<std::string> known{
      "train_env",   "eval_envs",     "variant",        "beta",          "optimizer",       "lr",
      "rms_rho",     "eps",           "adam_beta1",     "adam_beta2",    "gamma",           "entropy_coef",
      "value_coef",  "max_grad_norm", "rollout",        "hidden",        "latent",          "capacity_head",
      "gate_estimator", "provider",   "planner_horizon", "view",         "aic_cost",        "junction_radius",
      "max_steps",   "workers",       "total_frames",   "seeds",         "log_interval",    "checkpoint_interval",
      "eval_episodes", "eval_seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(it.key(), "unknown configuration key");
  }
  ExperimentConfig c;
  using detail::field;
  c.train_env = field(j, "train_env", c.train_env);
  if (j.contains("eval_envs")) {
    const json& e = j["eval_envs"];
    if (!e.is_array()) throw ConfigError("eval_envs", "expected an array of environment names");
    c.eval_envs.clear();
    for (const auto& x : e) {
      if (!x.is_string()) throw ConfigError("eval_envs", "expected an array of environment names");
      c.eval_envs.push_back(x.get<std::string>());
    }
  }
  c.variant = agent::variant_from_string(field(j, "variant", agent::to_string(c.variant)));
  if (j.contains("beta") && !j["beta"].is_null()) {
    if (!j["beta"].is_number()) throw ConfigError("beta", "expected a number");
    c.beta = j["beta"].get<double>();
  }
  c.optimizer = field(j, "optimizer", c.optimizer);
  c.lr = field(j, "lr", c.lr);
  c.rms_rho = field(j, "rms_rho", c.rms_rho);
  c.eps = field(j, "eps", c.eps);
  c.adam_beta1 = field(j, "adam_beta1", c.adam_beta1);
  c.adam_beta2 = field(j, "adam_beta2", c.adam_beta2);
  c.gamma = field(j, "gamma", c.gamma);
  c.entropy_coef = field(j, "entropy_coef", c.entropy_coef);
  c.value_coef = field(j, "value_coef", c.value_coef);
  c.max_grad_norm = field(j, "max_grad_norm", c.max_grad_norm);
  c.rollout = field(j, "rollout", c.rollout);
  c.hidden = field(j, "hidden", c.hidden);
  c.latent = field(j, "latent", c.latent);
  c.capacity_head = agent::capacity_head_from_string(field(j, "capacity_head", agent::to_string(c.capacity_head)));
  c.gate_estimator = bottleneck::gate_estimator_from_string(field(j, "gate_estimator", bottleneck::to_string(c.gate_estimator)));
  c.provider = agent::provider_kind_from_string(field(j, "provider", agent::to_string(c.provider)));
  c.planner_horizon = field(j, "planner_horizon", c.planner_horizon);
  c.view = field(j, "view", c.view);
  c.aic_cost = field(j, "aic_cost", c.aic_cost);
  c.junction_radius = field(j, "junction_radius", c.junction_radius);
  c.max_steps = field(j, "max_steps", c.max_steps);
  c.workers = field(j, "workers", c.workers);
  c.total_frames = field(j, "total_frames", c.total_frames);
  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    if (!s.is_array()) throw ConfigError("seeds", "expected an array of non-negative integers");
    c.seeds.clear();
    for (const auto& x : s) {
      if (!x.is_number_unsigned()) throw ConfigError("seeds", "expected an array of non-negative integers");
      c.seeds.push_back(x.get<std::uint64_t>());
    }
  }
  c.log_interval = field(j, "log_interval", c.log_interval);
  c.checkpoint_interval = field(j, "checkpoint_interval", c.checkpoint_interval);
  c.eval_episodes = field(j, "eval_episodes", c.eval_episodes);
  c.eval_seed = field(j, "eval_seed", c.eval_seed);
  validate(c);
  return c;
}

inline ExperimentConfig config_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_string(ss.str());
}

inline agent::AgentSpec agent_spec(const ExperimentConfig& c) {
  agent::AgentSpec s;
  s.net.variant = c.variant;
  s.net.hidden = c.hidden;
  s.net.latent = c.latent;
  s.net.capacity_head = c.capacity_head;
  s.provider = c.provider;
  s.planner_horizon = c.planner_horizon;
  s.view = c.view;
  s.gate_estimator = c.gate_estimator;
  s.aic_cost = c.aic_cost;
  s.junction_radius = c.junction_radius;
  s.max_steps = c.max_steps;
  s.sync_dims();
  return s;
}

inline agent::TrainSettings train_settings(const ExperimentConfig& c, std::uint64_t seed) {
  agent::TrainSettings t;
  t.env = c.train_env;
  t.workers = c.workers;
  t.total_frames = c.total_frames;
  t.seed = seed;
  t.log_interval = c.log_interval;
  t.a2c.gamma = c.gamma;
  t.a2c.entropy_coef = c.entropy_coef;
  t.a2c.value_coef = c.value_coef;
  t.a2c.max_grad_norm = c.max_grad_norm;
  t.a2c.beta = c.beta.value_or(0.0);
  t.a2c.rollout = c.rollout;
  t.optimizer.name = c.optimizer;
  t.optimizer.lr = c.lr;
  t.optimizer.rho = c.rms_rho;
  t.optimizer.eps = c.eps;
  t.optimizer.beta1 = c.adam_beta1;
  t.optimizer.beta2 = c.adam_beta2;
  return t;
}

/// Stable run identifier: variant, provider, beta, training env and seed.
inline std::string run_id(const ExperimentConfig& c, std::uint64_t seed) {
  std::ostringstream os;
  os << agent::to_string(c.variant) << '_' << agent::to_string(c.provider) << "_b";
  if (c.beta) {
    os << *c.beta;
  } else {
    os << "na";
  }
  os << '_' << c.train_env << "_s" << seed;
  return os.str();
}

}  // namespace vbb::harness

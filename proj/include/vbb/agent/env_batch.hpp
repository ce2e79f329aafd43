#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vbb/grid/env.hpp"

namespace vbb::agent {

enum class ProviderKind { goal_offset, planner_oracle };

inline std::string to_string(ProviderKind k) { return k == ProviderKind::goal_offset ? "goal_offset" : "planner_oracle"; }

inline ProviderKind provider_kind_from_string(const std::string& s) {
  if (s == "goal_offset") return ProviderKind::goal_offset;
  if (s == "planner_oracle") return ProviderKind::planner_oracle;
  throw ConfigError("provider", "unknown provider '" + s + "' (goal_offset, planner_oracle)");
}

inline std::size_t provider_dim(ProviderKind k, std::size_t horizon) {
  return k == ProviderKind::goal_offset ? 2 : horizon * grid::kActionCount;
}

inline std::unique_ptr<PrivilegedProvider> make_provider(ProviderKind k, const grid::EnvState* state,
                                                         std::size_t horizon) {
  if (k == ProviderKind::goal_offset) return std::make_unique<grid::GoalOffsetProvider>(state);
  return std::make_unique<grid::PlannerOracleProvider>(state, horizon);
}

/// Forwards to another provider and keeps a copy of the last answer.
class RecordingProvider final : public PrivilegedProvider {
 public:
  explicit RecordingProvider(PrivilegedProvider* inner = nullptr) : inner_(inner) {}
  std::size_t dim() const override { return inner_->dim(); }

  void clear() {
    last_.assign(inner_->dim(), 0.0);
    queried_ = false;
  }
  const std::vector<double>& last() const noexcept { return last_; }
  bool queried() const noexcept { return queried_; }

 protected:
  std::vector<double> produce() override {
    last_ = inner_->query();
    queried_ = true;
    return last_;
  }

 private:
  PrivilegedProvider* inner_;
  std::vector<double> last_;
  bool queried_ = false;
};

/// Returns a fixed vector; used to replay recorded privileged inputs.
class FixedProvider final : public PrivilegedProvider {
 public:
  explicit FixedProvider(std::vector<double> v = {}) : v_(std::move(v)) {}
  std::size_t dim() const override { return v_.size(); }
  void set(std::vector<double> v) { v_ = std::move(v); }

 protected:
  std::vector<double> produce() override { return v_; }

 private:
  std::vector<double> v_;
};

/// Row-stacked network features of several environments.
inline Tensor batch_features(const std::vector<grid::EnvState>& envs, int view) {
  const std::size_t f = grid::feature_dim(view);
  Tensor out({envs.size(), f});
  for (std::size_t i = 0; i < envs.size(); ++i) grid::observation_features(grid::observe(envs[i], view), out.row(i));
  return out;
}

}  // namespace vbb::agent

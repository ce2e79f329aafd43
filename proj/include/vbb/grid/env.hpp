#pragma once

#include <array>
#include <algorithm>
#include <deque>
#include <span>
#include <vector>

#include "vbb/bottleneck.hpp"
#include "vbb/diff/rng.hpp"
#include "vbb/grid/generate.hpp"
#include "vbb/grid/planner.hpp"

namespace vbb::grid {

inline constexpr int kMaxSteps = 500;
inline constexpr int kDefaultView = 7;

/// MiniGrid object-type codes used in observation channel 0.
enum class TypeCode : std::uint8_t { unseen = 0, empty = 1, wall = 2, door = 4, key = 5, ball = 6, box = 7, goal = 8 };

struct EnvState {
  Level level;
  Pos pos;
  Direction dir = Direction::east;
  int steps = 0;
  int max_steps = kMaxSteps;
  bool done = false;
  bool success = false;
  RngStream rng;

  const Grid& grid() const noexcept { return level.grid; }
};

inline EnvState reset(Level level, int max_steps = kMaxSteps) {
  EnvState s;
  s.pos = level.start;
  s.dir = level.start_dir;
  s.rng = RngStream(level.seed, 1);
  s.level = std::move(level);
  s.max_steps = max_steps;
  return s;
}

inline EnvState reset(const EnvSpec& spec, std::uint64_t seed, int max_steps = kMaxSteps) {
  return reset(generate(spec, seed), max_steps);
}

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

inline StepResult step(EnvState& s, Action a) {
  if (s.done) throw ContractError("step called on a finished episode");
  ++s.steps;
  const Pos ahead = s.pos + dir_vec(s.dir);
  switch (a) {
    case Action::left: s.dir = turn_left(s.dir); break;
    case Action::right: s.dir = turn_right(s.dir); break;
    case Action::forward:
      if (s.level.grid.passable(ahead)) s.pos = ahead;
      break;
    case Action::toggle:
      if (s.level.grid.in_bounds(ahead) && s.level.grid.at(ahead).kind == CellKind::door) {
        s.level.grid.at(ahead).open = true;
      }
      break;
    case Action::pickup:
    case Action::drop:
    case Action::done: break;
  }
  StepResult r;
  if (s.pos == s.level.target) {
    r.reward = 1.0;
    s.success = true;
    s.done = true;
  } else if (s.steps >= s.max_steps) {
    s.done = true;
  }
  r.done = s.done;
  return r;
}

/// Egocentric view: view×view×3 codes (type, color, door open), row-major with
/// the agent at column view/2 of the last row, facing towards row 0.
struct Observation {
  int view = kDefaultView;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int vx, int vy, int ch) const {
    return data[static_cast<std::size_t>((vy * view + vx) * 3 + ch)];
  }
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// World cell seen at view coordinates (vx, vy).
inline Pos view_to_world(const EnvState& s, int view, int vx, int vy) {
  const int forward = view - 1 - vy;
  const int lateral = vx - view / 2;
  const Pos f = dir_vec(s.dir);
  const Pos r = right_vec(s.dir);
  return {s.pos.x + f.x * forward + r.x * lateral, s.pos.y + f.y * forward + r.y * lateral};
}

/// Visibility mask over the view window (row-major, view×view). Light floods
/// 4-connected from the agent through transparent cells; opaque cells reached
/// by the flood are visible but stop it.
inline std::vector<char> visibility(const EnvState& s, int view) {
  std::vector<char> vis(static_cast<std::size_t>(view * view), 0);
  const Grid& g = s.level.grid;
  const int ax = view / 2, ay = view - 1;
  std::deque<std::pair<int, int>> queue{{ax, ay}};
  vis[static_cast<std::size_t>(ay * view + ax)] = 1;
  while (!queue.empty()) {
    const auto [vx, vy] = queue.front();
    queue.pop_front();
    if (!g.transparent(view_to_world(s, view, vx, vy)) && !(vx == ax && vy == ay)) continue;
    for (auto [dx, dy] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}}) {
      const int nx = vx + dx, ny = vy + dy;
      if (nx < 0 || ny < 0 || nx >= view || ny >= view) continue;
      auto& v = vis[static_cast<std::size_t>(ny * view + nx)];
      if (v || !g.in_bounds(view_to_world(s, view, nx, ny))) continue;
      v = 1;
      queue.emplace_back(nx, ny);
    }
  }
  return vis;
}

inline TypeCode type_code(const Cell& c) {
  switch (c.kind) {
    case CellKind::empty: return TypeCode::empty;
    case CellKind::wall: return TypeCode::wall;
    case CellKind::door: return TypeCode::door;
    case CellKind::goal: return TypeCode::goal;
    case CellKind::object:
      switch (c.object) {
        case ObjectKind::key: return TypeCode::key;
        case ObjectKind::box: return TypeCode::box;
        default: return TypeCode::ball;
      }
  }
  return TypeCode::unseen;
}

inline Observation observe(const EnvState& s, int view = kDefaultView) {
  if (view < 3 || view % 2 == 0) throw DimensionError("view size must be odd and >= 3");
  Observation o;
  o.view = view;
  o.data.assign(static_cast<std::size_t>(view * view * 3), 0);
  const auto vis = visibility(s, view);
  for (int vy = 0; vy < view; ++vy)
    for (int vx = 0; vx < view; ++vx) {
      if (!vis[static_cast<std::size_t>(vy * view + vx)]) continue;
      const Cell& c = s.level.grid.at(view_to_world(s, view, vx, vy));
      auto* px = &o.data[static_cast<std::size_t>((vy * view + vx) * 3)];
      px[0] = static_cast<std::uint8_t>(type_code(c));
      px[1] = c.kind == CellKind::empty ? 0 : static_cast<std::uint8_t>(c.color);
      px[2] = c.kind == CellKind::door && c.open ? 1 : 0;
    }
  return o;
}

inline constexpr std::size_t kFeaturesPerCell = 7;

inline std::size_t feature_dim(int view) { return static_cast<std::size_t>(view * view) * kFeaturesPerCell; }

/// Network input: per cell a one-hot over {unseen, empty, wall, door, object,
/// goal} followed by the door-open flag.
inline void observation_features(const Observation& o, std::span<double> out) {
  if (out.size() != feature_dim(o.view)) throw DimensionError("observation feature buffer has wrong size");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(o.view * o.view); ++i) {
    std::size_t slot = 0;
    switch (static_cast<TypeCode>(o.data[i * 3])) {
      case TypeCode::unseen: slot = 0; break;
      case TypeCode::empty: slot = 1; break;
      case TypeCode::wall: slot = 2; break;
      case TypeCode::door: slot = 3; break;
      case TypeCode::goal: slot = 5; break;
      default: slot = 4; break;
    }
    out[i * kFeaturesPerCell + slot] = 1.0;
    out[i * kFeaturesPerCell + 6] = o.data[i * 3 + 2];
  }
}

/// Goal displacement in the agent frame: (leftward, forward) / grid width.
inline std::array<double, 2> goal_offset(const EnvState& s) {
  const Pos d = s.level.target - s.pos;
  const Pos f = dir_vec(s.dir);
  const Pos r = right_vec(s.dir);
  const double forward = d.x * f.x + d.y * f.y;
  const double right = d.x * r.x + d.y * r.y;
  const double scale = 1.0 / s.level.grid.width();
  return {-right * scale + 0.0, forward * scale + 0.0};
}

class GoalOffsetProvider final : public PrivilegedProvider {
 public:
  explicit GoalOffsetProvider(const EnvState* state = nullptr) : state_(state) {}
  void bind(const EnvState* state) noexcept { state_ = state; }
  std::size_t dim() const override { return 2; }

 protected:
  std::vector<double> produce() override {
    if (!state_) throw ProviderError("goal offset provider is not bound to an environment");
    const auto g = goal_offset(*state_);
    return {g[0], g[1]};
  }

 private:
  const EnvState* state_;
};

/// One-hot encoding of the next `horizon` actions of the shortest plan to the
/// target. Positions past the end of the plan are all-zero.
class PlannerOracleProvider final : public PrivilegedProvider {
 public:
  explicit PlannerOracleProvider(const EnvState* state = nullptr, std::size_t horizon = 3)
      : state_(state), horizon_(horizon) {}
  void bind(const EnvState* state) noexcept { state_ = state; }
  std::size_t dim() const override { return horizon_ * kActionCount; }

 protected:
  std::vector<double> produce() override {
    if (!state_) throw ProviderError("planner provider is not bound to an environment");
    std::vector<Action> plan;
    try {
      plan = bfs_plan(state_->level.grid, state_->pos, state_->dir, state_->level.target);
    } catch (const PlanningError& e) {
      throw ProviderError(std::string("planner provider: ") + e.what());
    }
    std::vector<double> out(dim(), 0.0);
    for (std::size_t k = 0; k < horizon_ && k < plan.size(); ++k) {
      out[k * kActionCount + static_cast<std::size_t>(plan[k])] = 1.0;
    }
    return out;
  }

 private:
  const EnvState* state_;
  std::size_t horizon_;
};

}  // namespace vbb::grid

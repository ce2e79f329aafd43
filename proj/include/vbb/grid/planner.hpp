#pragma once

#include <algorithm>
#include <array>
#include <deque>
#include <vector>

#include "vbb/grid/grid.hpp"

namespace vbb::grid {

/// MiniGrid action set, in MiniGrid's numbering.
enum class Action : std::uint8_t { left = 0, right = 1, forward = 2, pickup = 3, drop = 4, toggle = 5, done = 6 };
inline constexpr std::size_t kActionCount = 7;

/// Cells the agent can eventually stand on: passable now or a door it can open.
inline bool traversable(const Grid& g, Pos p) {
  return g.in_bounds(p) && (g.passable(p) || g.at(p).kind == CellKind::door);
}

/// 4-connected flood over traversable cells.
inline bool reachable(const Grid& g, Pos from, Pos to) {
  if (!g.in_bounds(from) || !g.in_bounds(to)) return false;
  std::vector<char> seen(static_cast<std::size_t>(g.width() * g.height()), 0);
  std::deque<Pos> queue{from};
  seen[static_cast<std::size_t>(from.y * g.width() + from.x)] = 1;
  static constexpr std::array<Pos, 4> steps{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
  while (!queue.empty()) {
    const Pos p = queue.front();
    queue.pop_front();
    if (p == to) return true;
    for (Pos d : steps) {
      const Pos q = p + d;
      if (!traversable(g, q)) continue;
      auto& s = seen[static_cast<std::size_t>(q.y * g.width() + q.x)];
      if (!s) {
        s = 1;
        queue.push_back(q);
      }
    }
  }
  return false;
}

/// Shortest action sequence from a pose to a target cell.
///
/// Breadth-first search over (x, y, direction, door-ahead-opened). Turning and
/// moving cost one action each; a closed door ahead must be toggled before it
/// can be entered. Successors are expanded in the order left, right, forward,
/// toggle, which fixes tie-breaking between equal-length plans.
inline std::vector<Action> bfs_plan(const Grid& g, Pos from, Direction dir, Pos to) {
  if (!g.in_bounds(from) || !g.in_bounds(to)) throw PlanningError("bfs_plan: endpoint outside grid");
  if (from == to) return {};
  const int w = g.width(), h = g.height();
  auto key = [&](Pos p, int d, int flag) { return static_cast<std::size_t>(((p.y * w + p.x) * 4 + d) * 2 + flag); };
  const std::size_t n = static_cast<std::size_t>(w * h * 8);
  std::vector<int> parent(n, -1);
  std::vector<Action> via(n, Action::done);
  std::vector<char> seen(n, 0);

  struct Node {
    Pos p;
    int d;
    int flag;
  };
  std::deque<Node> queue;
  const std::size_t start = key(from, static_cast<int>(dir), 0);
  seen[start] = 1;
  queue.push_back({from, static_cast<int>(dir), 0});

  while (!queue.empty()) {
    const Node cur = queue.front();
    queue.pop_front();
    const std::size_t ck = key(cur.p, cur.d, cur.flag);
    const Pos ahead = cur.p + dir_vec(static_cast<Direction>(cur.d));
    const bool door_ahead = g.in_bounds(ahead) && g.at(ahead).kind == CellKind::door && !g.at(ahead).open;

    std::array<std::pair<Action, Node>, 4> succ;
    std::size_t count = 0;
    succ[count++] = {Action::left, {cur.p, (cur.d + 3) % 4, 0}};
    succ[count++] = {Action::right, {cur.p, (cur.d + 1) % 4, 0}};
    if (g.passable(ahead) || (door_ahead && cur.flag)) succ[count++] = {Action::forward, {ahead, cur.d, 0}};
    if (door_ahead && !cur.flag) succ[count++] = {Action::toggle, {cur.p, cur.d, 1}};

    for (std::size_t i = 0; i < count; ++i) {
      const auto& [action, next] = succ[i];
      const std::size_t nk = key(next.p, next.d, next.flag);
      if (seen[nk]) continue;
      seen[nk] = 1;
      parent[nk] = static_cast<int>(ck);
      via[nk] = action;
      if (next.p == to) {
        std::vector<Action> plan;
        for (std::size_t k = nk; k != start; k = static_cast<std::size_t>(parent[k])) plan.push_back(via[k]);
        std::reverse(plan.begin(), plan.end());
        return plan;
      }
      queue.push_back(next);
    }
  }
  throw PlanningError("bfs_plan: target unreachable");
}

/// Decision-point test: a door cell, within Chebyshev distance `radius` of a
/// door, or a cell with at least three traversable orthogonal neighbours.
inline bool is_junction(const Grid& g, Pos p, int radius = 1) {
  if (!g.in_bounds(p)) return false;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const Pos q{p.x + dx, p.y + dy};
      if (g.in_bounds(q) && g.at(q).kind == CellKind::door) return true;
    }
  int open = 0;
  for (Pos d : {Pos{1, 0}, Pos{0, 1}, Pos{-1, 0}, Pos{0, -1}}) open += traversable(g, p + d) ? 1 : 0;
  return open >= 3;
}

}  // namespace vbb::grid

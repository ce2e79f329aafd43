#pragma once

#include <optional>
#include <vector>

#include "vbb/diff/rng.hpp"
#include "vbb/grid/grid.hpp"
#include "vbb/grid/planner.hpp"

namespace vbb::grid {

inline constexpr int kMultiRoomGridSize = 25;
inline constexpr int kMaxGenerationAttempts = 1000;

namespace detail {

// Uniform integer in [lo, hi).
inline int rand_int(RngStream& rng, int lo, int hi) {
  return static_cast<int>(rng.uniform_range(lo, hi - 1));
}

struct ChainRoom {
  Room room;
  Pos entry_door;
};

// Recursive room chaining: each new room is attached to an exit door cut in a
// wall of the previous room, so consecutive rooms share that wall.
inline bool place_room(int rooms_left, std::vector<ChainRoom>& rooms, int min_size, int max_size, int entry_wall,
                       Pos entry_door, int grid_size, RngStream& rng) {
  const int sx = rand_int(rng, min_size, max_size + 1);
  const int sy = rand_int(rng, min_size, max_size + 1);
  int tx = 0, ty = 0;
  if (entry_wall == 0) {
    tx = entry_door.x - sx + 1;
    ty = rand_int(rng, entry_door.y - sy + 2, entry_door.y);
  } else if (entry_wall == 1) {
    tx = rand_int(rng, entry_door.x - sx + 2, entry_door.x);
    ty = entry_door.y - sy + 1;
  } else if (entry_wall == 2) {
    tx = entry_door.x;
    ty = rand_int(rng, entry_door.y - sy + 2, entry_door.y);
  } else {
    tx = rand_int(rng, entry_door.x - sx + 2, entry_door.x);
    ty = entry_door.y;
  }
  if (tx < 0 || ty < 0) return false;
  if (tx + sx > grid_size || ty + sy >= grid_size) return false;
  // The previous room shares a wall with this one, so it is exempt.
  for (std::size_t i = 0; i + 1 < rooms.size(); ++i) {
    const auto& r = rooms[i];
    const bool apart = tx + sx < r.room.top.x || r.room.top.x + r.room.size.x <= tx || ty + sy < r.room.top.y ||
                       r.room.top.y + r.room.size.y <= ty;
    if (!apart) return false;
  }
  rooms.push_back({Room{{tx, ty}, {sx, sy}}, entry_door});
  if (rooms_left == 1) return true;

  for (int i = 0; i < 8; ++i) {
    std::vector<int> walls;
    for (int wdx = 0; wdx < 4; ++wdx)
      if (wdx != entry_wall) walls.push_back(wdx);
    const int exit_wall = walls[rng.uniform_int(walls.size())];
    const int next_entry = (exit_wall + 2) % 4;
    Pos exit_door;
    if (exit_wall == 0) {
      exit_door = {tx + sx - 1, ty + rand_int(rng, 1, sy - 1)};
    } else if (exit_wall == 1) {
      exit_door = {tx + rand_int(rng, 1, sx - 1), ty + sy - 1};
    } else if (exit_wall == 2) {
      exit_door = {tx, ty + rand_int(rng, 1, sy - 1)};
    } else {
      exit_door = {tx + rand_int(rng, 1, sx - 1), ty};
    }
    if (place_room(rooms_left - 1, rooms, min_size, max_size, next_entry, exit_door, grid_size, rng)) break;
  }
  return true;
}

inline Pos random_interior_cell(const Grid& g, const Room& room, RngStream& rng, std::optional<Pos> avoid = {}) {
  for (int tries = 0; tries < 10000; ++tries) {
    const Pos p{rand_int(rng, room.top.x + 1, room.top.x + room.size.x - 1),
                rand_int(rng, room.top.y + 1, room.top.y + room.size.y - 1)};
    if (g.at(p).kind == CellKind::empty && (!avoid || !(p == *avoid))) return p;
  }
  throw GenerationError("no free cell in room");
}

inline Color random_door_color(RngStream& rng, std::optional<Color> differ_from) {
  for (;;) {
    const Color c = static_cast<Color>(rng.uniform_int(kColorCount));
    if (!differ_from || c != *differ_from) return c;
  }
}

}  // namespace detail

/// Chain of `rooms` rooms with sides in [4, max_size] (walls included) inside a
/// 25×25 grid. Agent in the first room, goal in the last, closed doors between
/// consecutive rooms.
inline Level gen_multiroom(int rooms, int max_size, std::uint64_t seed) {
  if (rooms < 1) throw GenerationError("gen_multiroom: need at least one room");
  if (max_size < 4 || max_size > 12) throw GenerationError("gen_multiroom: room size must be in [4,12]");
  const int size = kMultiRoomGridSize;
  RngStream rng(seed, 0);

  std::vector<detail::ChainRoom> chain;
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    std::vector<detail::ChainRoom> candidate;
    const int entry_wall = detail::rand_int(rng, 0, 4);
    const Pos entry{detail::rand_int(rng, 0, size - 2), detail::rand_int(rng, 0, size - 2)};
    detail::place_room(rooms, candidate, 4, max_size, entry_wall, entry, size, rng);
    if (static_cast<int>(candidate.size()) == rooms) {
      chain = std::move(candidate);
      break;
    }
  }
  if (static_cast<int>(chain.size()) != rooms) {
    throw GenerationError("gen_multiroom: could not place " + std::to_string(rooms) + " rooms after " +
                          std::to_string(kMaxGenerationAttempts) + " attempts (seed " + std::to_string(seed) + ")");
  }

  Level level;
  level.seed = seed;
  level.grid = Grid(size, size, Cell::wall());
  for (const auto& r : chain) {
    for (int y = r.room.top.y + 1; y < r.room.top.y + r.room.size.y - 1; ++y)
      for (int x = r.room.top.x + 1; x < r.room.top.x + r.room.size.x - 1; ++x) level.grid.set({x, y}, Cell{});
    level.rooms.push_back(r.room);
  }
  std::optional<Color> prev_color;
  for (std::size_t i = 1; i < chain.size(); ++i) {
    const Color c = detail::random_door_color(rng, prev_color);
    level.grid.set(chain[i].entry_door, Cell::door(c, false));
    prev_color = c;
  }
  level.start = detail::random_interior_cell(level.grid, level.rooms.front(), rng);
  level.start_dir = static_cast<Direction>(rng.uniform_int(4));
  level.target = detail::random_interior_cell(level.grid, level.rooms.back(), rng, level.start);
  level.grid.set(level.target, Cell::goal());
  if (!reachable(level.grid, level.start, level.target)) {
    throw GenerationError("gen_multiroom: generated level fails reachability (seed " + std::to_string(seed) + ")");
  }
  return level;
}

/// 3×3 lattice of rooms with (size-2)×(size-2) interiors sharing walls, a
/// closed door between every pair of adjacent rooms, the agent in the central
/// room and a single object in one of the eight outer rooms.
inline Level gen_findobj(int room_size, std::uint64_t seed) {
  if (room_size < 4) throw GenerationError("gen_findobj: room size must be >= 4");
  const int step = room_size - 1;
  const int size = 3 * step + 1;
  RngStream rng(seed, 0);

  Level level;
  level.seed = seed;
  level.grid = Grid(size, size, Cell::wall());
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) {
      Room r{{i * step, j * step}, {room_size, room_size}};
      for (int y = r.top.y + 1; y < r.top.y + room_size - 1; ++y)
        for (int x = r.top.x + 1; x < r.top.x + room_size - 1; ++x) level.grid.set({x, y}, Cell{});
      level.rooms.push_back(r);
    }
  // Vertical shared walls then horizontal ones.
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 2; ++i) {
      const Pos door{(i + 1) * step, j * step + detail::rand_int(rng, 1, room_size - 1)};
      level.grid.set(door, Cell::door(static_cast<Color>(rng.uniform_int(kColorCount)), false));
    }
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 3; ++i) {
      const Pos door{i * step + detail::rand_int(rng, 1, room_size - 1), (j + 1) * step};
      level.grid.set(door, Cell::door(static_cast<Color>(rng.uniform_int(kColorCount)), false));
    }

  const Room& center = level.rooms[4];
  level.start = detail::random_interior_cell(level.grid, center, rng);
  level.start_dir = static_cast<Direction>(rng.uniform_int(4));
  static constexpr std::array<int, 8> outer{0, 1, 2, 3, 5, 6, 7, 8};
  const Room& target_room = level.rooms[static_cast<std::size_t>(outer[rng.uniform_int(outer.size())])];
  level.target = detail::random_interior_cell(level.grid, target_room, rng);
  const auto kind = static_cast<ObjectKind>(1 + rng.uniform_int(3));
  level.grid.set(level.target, Cell::item(kind, static_cast<Color>(rng.uniform_int(kColorCount))));
  if (!reachable(level.grid, level.start, level.target)) {
    throw GenerationError("gen_findobj: generated level fails reachability (seed " + std::to_string(seed) + ")");
  }
  return level;
}

inline Level generate(const EnvSpec& spec, std::uint64_t seed) {
  return spec.family == Family::multiroom ? gen_multiroom(spec.rooms, spec.size, seed) : gen_findobj(spec.size, seed);
}

/// Index of the room whose interior contains `p`, if any.
inline std::optional<std::size_t> room_of(const Level& level, Pos p) {
  for (std::size_t i = 0; i < level.rooms.size(); ++i)
    if (level.rooms[i].contains_interior(p)) return i;
  return std::nullopt;
}

}  // namespace vbb::grid

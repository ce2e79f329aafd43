#pragma once

#include <array>
#include <cstdint>
#include <regex>
#include <string>
#include <vector>

#include "vbb/error.hpp"

namespace vbb::grid {

enum class CellKind : std::uint8_t { empty, wall, door, goal, object };
enum class Color : std::uint8_t { red, green, blue, purple, yellow, grey };
enum class ObjectKind : std::uint8_t { none, key, ball, box };

inline constexpr int kColorCount = 6;

struct Cell {
  CellKind kind = CellKind::empty;
  Color color = Color::grey;
  bool open = false;  // doors only
  ObjectKind object = ObjectKind::none;

  friend bool operator==(const Cell&, const Cell&) = default;

  static Cell wall() { return {CellKind::wall, Color::grey, false, ObjectKind::none}; }
  static Cell door(Color c, bool is_open = false) { return {CellKind::door, c, is_open, ObjectKind::none}; }
  static Cell goal() { return {CellKind::goal, Color::green, false, ObjectKind::none}; }
  static Cell item(ObjectKind k, Color c) { return {CellKind::object, c, false, k}; }
};

struct Pos {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pos&, const Pos&) = default;
  friend Pos operator+(Pos a, Pos b) { return {a.x + b.x, a.y + b.y}; }
  friend Pos operator-(Pos a, Pos b) { return {a.x - b.x, a.y - b.y}; }
};

/// Facing direction, numbered clockwise from east (x grows east, y grows south).
enum class Direction : std::uint8_t { east = 0, south = 1, west = 2, north = 3 };

inline Pos dir_vec(Direction d) {
  static constexpr std::array<Pos, 4> v{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
  return v[static_cast<int>(d)];
}
inline Pos right_vec(Direction d) {
  const Pos f = dir_vec(d);
  return {-f.y, f.x};
}
inline Direction turn_left(Direction d) { return static_cast<Direction>((static_cast<int>(d) + 3) % 4); }
inline Direction turn_right(Direction d) { return static_cast<Direction>((static_cast<int>(d) + 1) % 4); }

/// Axis-aligned room including its walls.
struct Room {
  Pos top;
  Pos size;
  bool contains_interior(Pos p) const {
    return p.x > top.x && p.x < top.x + size.x - 1 && p.y > top.y && p.y < top.y + size.y - 1;
  }
};

class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, Cell fill = Cell::wall())
      : width_(width), height_(height), cells_(static_cast<std::size_t>(width * height), fill) {
    if (width <= 0 || height <= 0) throw DimensionError("grid dimensions must be positive");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool in_bounds(Pos p) const noexcept { return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_; }

  const Cell& at(Pos p) const { return cells_.at(index(p)); }
  Cell& at(Pos p) { return cells_.at(index(p)); }
  void set(Pos p, Cell c) { cells_.at(index(p)) = c; }

  /// The agent can stand on this cell.
  bool passable(Pos p) const {
    if (!in_bounds(p)) return false;
    const Cell& c = at(p);
    switch (c.kind) {
      case CellKind::empty:
      case CellKind::goal:
      case CellKind::object: return true;
      case CellKind::door: return c.open;
      case CellKind::wall: return false;
    }
    return false;
  }

  /// Light passes through (walls and closed doors block sight).
  bool transparent(Pos p) const {
    if (!in_bounds(p)) return false;
    const Cell& c = at(p);
    return c.kind != CellKind::wall && !(c.kind == CellKind::door && !c.open);
  }

  void wall_rect(Pos top, Pos size) {
    for (int x = top.x; x < top.x + size.x; ++x) {
      set({x, top.y}, Cell::wall());
      set({x, top.y + size.y - 1}, Cell::wall());
    }
    for (int y = top.y; y < top.y + size.y; ++y) {
      set({top.x, y}, Cell::wall());
      set({top.x + size.x - 1, y}, Cell::wall());
    }
  }

  const std::vector<Cell>& cells() const noexcept { return cells_; }
  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(Pos p) const {
    if (!in_bounds(p)) throw DimensionError("cell (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") out of grid");
    return static_cast<std::size_t>(p.y * width_ + p.x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Cell> cells_;
};

/// A generated level: grid, rooms, start pose and target cell.
struct Level {
  Grid grid;
  std::vector<Room> rooms;
  Pos start;
  Direction start_dir = Direction::east;
  Pos target;
  std::uint64_t seed = 0;
};

enum class Family { multiroom, findobj };

/// Parsed environment name: MultiRoomN{rooms}S{size} or FindObjS{size}.
struct EnvSpec {
  Family family = Family::multiroom;
  int rooms = 1;
  int size = 4;

  std::string name() const {
    return family == Family::multiroom ? "MultiRoomN" + std::to_string(rooms) + "S" + std::to_string(size)
                                       : "FindObjS" + std::to_string(size);
  }
  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

inline EnvSpec parse_env_name(const std::string& name) {
  static const std::regex multiroom(R"(MultiRoomN(\d{1,3})S(\d{1,3}))");
  static const std::regex findobj(R"(FindObjS(\d{1,3}))");
  std::smatch m;
  if (std::regex_match(name, m, multiroom)) {
    EnvSpec s{Family::multiroom, std::stoi(m[1]), std::stoi(m[2])};
    if (s.rooms < 1) throw ConfigError("env", "MultiRoom needs at least one room: " + name);
    if (s.size < 4 || s.size > 12) throw ConfigError("env", "MultiRoom room size must be in [4,12]: " + name);
    return s;
  }
  if (std::regex_match(name, m, findobj)) {
    EnvSpec s{Family::findobj, 9, std::stoi(m[1])};
    if (s.size < 4) throw ConfigError("env", "FindObj room size must be >= 4: " + name);
    return s;
  }
  throw ConfigError("env", "unparseable environment name '" + name + "' (expected MultiRoomN<X>S<Y> or FindObjS<Y>)");
}

inline char agent_glyph(Direction d) {
  switch (d) {
    case Direction::east: return '>';
    case Direction::south: return 'v';
    case Direction::west: return '<';
    case Direction::north: return '^';
  }
  return '?';
}

inline char cell_glyph(const Cell& c) {
  switch (c.kind) {
    case CellKind::empty: return '.';
    case CellKind::wall: return '#';
    case CellKind::door: return c.open ? 'd' : 'D';
    case CellKind::goal: return 'G';
    case CellKind::object: return 'O';
  }
  return '?';
}

/// One character per cell, rows separated by '\n'.
inline std::string render(const Grid& grid, Pos agent, Direction dir) {
  std::string out;
  out.reserve(static_cast<std::size_t>((grid.width() + 1) * grid.height()));
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      const Pos p{x, y};
      out += p == agent ? agent_glyph(dir) : cell_glyph(grid.at(p));
    }
    out += '\n';
  }
  return out;
}

}  // namespace vbb::grid

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ftp::gridworld {

inline constexpr int kGridSize = 8;
inline constexpr int kCells = kGridSize * kGridSize;
inline constexpr int kMaxScore = 10;
inline constexpr int kMaxProgramLength = 10;
inline constexpr int kPairsPerInstance = 5;

// Cell value: kObstruction or a score in [0, kMaxScore].
inline constexpr std::int8_t kObstruction = -1;

enum class Direction : std::uint8_t { north = 0, east = 1, south = 2, west = 3 };

struct World {
  std::array<std::int8_t, kCells> cells{};  // row-major
  int row = 1;
  int col = 1;
  Direction dir = Direction::north;

  std::int8_t at(int r, int c) const { return cells[std::size_t(r * kGridSize + c)]; }
  std::int8_t& at(int r, int c) { return cells[std::size_t(r * kGridSize + c)]; }

  // Edges obstructed, scores in range, turtle on a free cell.
  bool valid() const;

  bool operator==(const World&) const = default;
};

enum class Instruction : std::uint8_t { move = 0, left = 1, right = 2, mark = 3, unmark = 4 };

inline constexpr int kInstructionCount = 5;

using Program = std::vector<Instruction>;

// Program text uses M, L, R, + and -.
char instruction_char(Instruction i);
Instruction instruction_from_char(char c);
std::string program_string(const Program& p);
Program parse_program(const std::string& text);

// Move advances one cell unless the target is obstructed; Left / Right turn
// 90 degrees; Mark / Unmark change the current cell's score within
// [0, kMaxScore]. Total on any world.
World step(World w, Instruction i);
World run(World w, const Program& p);

struct WorldParams {
  double p_obstruction = 0.15;  // per interior cell
  double p_zero = 0.7;          // otherwise a score uniform in 1..10
  int max_attempts = 100;
};

// Throws GenerationError when no free cell appears within max_attempts.
World random_world(std::mt19937_64& rng, const WorldParams& params = {});

Program random_program(std::mt19937_64& rng, int length);

struct GridInstance {
  std::array<World, kPairsPerInstance> starts;
  std::array<World, kPairsPerInstance> stops;
  Program program;

  // stop == run(start, program) for every pair.
  bool consistent() const;
};

// Instance with the given program and fresh random start worlds.
GridInstance make_instance(std::mt19937_64& rng, Program program, const WorldParams& params = {});

// Program length uniform in [min_len, max_len].
GridInstance random_instance(std::mt19937_64& rng, int min_len, int max_len, const WorldParams& params = {});

// ASCII picture: '#' obstruction, score digits ('A' for 10), turtle as
// ^ > v < over its cell.
std::string render(const World& w);

}  // namespace ftp::gridworld

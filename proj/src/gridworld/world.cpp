#include "ftp/gridworld/world.hpp"

#include <algorithm>

#include "ftp/core/errors.hpp"

namespace ftp::gridworld {

namespace {

constexpr int kRowStep[4] = {-1, 0, 1, 0};
constexpr int kColStep[4] = {0, 1, 0, -1};

bool on_edge(int r, int c) { return r == 0 || c == 0 || r == kGridSize - 1 || c == kGridSize - 1; }

}  // namespace

bool World::valid() const {
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const auto v = at(r, c);
      if (on_edge(r, c) && v != kObstruction) return false;
      if (v != kObstruction && (v < 0 || v > kMaxScore)) return false;
    }
  }
  if (row < 0 || row >= kGridSize || col < 0 || col >= kGridSize) return false;
  return at(row, col) != kObstruction && static_cast<int>(dir) < 4;
}

char instruction_char(Instruction i) {
  switch (i) {
    case Instruction::move:
      return 'M';
    case Instruction::left:
      return 'L';
    case Instruction::right:
      return 'R';
    case Instruction::mark:
      return '+';
    case Instruction::unmark:
      return '-';
  }
  return '?';
}

Instruction instruction_from_char(char c) {
  switch (c) {
    case 'M':
      return Instruction::move;
    case 'L':
      return Instruction::left;
    case 'R':
      return Instruction::right;
    case '+':
      return Instruction::mark;
    case '-':
      return Instruction::unmark;
    default:
      throw FormatError(std::string("unknown instruction character '") + c + "'", 0);
  }
}

std::string program_string(const Program& p) {
  std::string s;
  for (auto i : p) s.push_back(instruction_char(i));
  return s;
}

Program parse_program(const std::string& text) {
  Program p;
  for (std::size_t i = 0; i < text.size(); ++i) {
    try {
      p.push_back(instruction_from_char(text[i]));
    } catch (const FormatError&) {
      throw FormatError(std::string("unknown instruction character '") + text[i] + "'", i);
    }
  }
  return p;
}

World step(World w, Instruction i) {
  const int d = static_cast<int>(w.dir);
  switch (i) {
    case Instruction::move: {
      const int r = w.row + kRowStep[d];
      const int c = w.col + kColStep[d];
      if (r >= 0 && r < kGridSize && c >= 0 && c < kGridSize && w.at(r, c) != kObstruction) {
        w.row = r;
        w.col = c;
      }
      break;
    }
    case Instruction::left:
      w.dir = static_cast<Direction>((d + 3) % 4);
      break;
    case Instruction::right:
      w.dir = static_cast<Direction>((d + 1) % 4);
      break;
    case Instruction::mark: {
      auto& v = w.at(w.row, w.col);
      if (v != kObstruction && v < kMaxScore) ++v;
      break;
    }
    case Instruction::unmark: {
      auto& v = w.at(w.row, w.col);
      if (v != kObstruction && v > 0) --v;
      break;
    }
  }
  return w;
}

World run(World w, const Program& p) {
  for (auto i : p) w = step(w, i);
  return w;
}

World random_world(std::mt19937_64& rng, const WorldParams& params) {
  std::bernoulli_distribution obstruct(params.p_obstruction);
  std::bernoulli_distribution zero(params.p_zero);
  std::uniform_int_distribution<int> score(1, kMaxScore);
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    World w;
    std::vector<int> free;
    for (int r = 0; r < kGridSize; ++r) {
      for (int c = 0; c < kGridSize; ++c) {
        if (on_edge(r, c) || obstruct(rng)) {
          w.at(r, c) = kObstruction;
        } else {
          w.at(r, c) = zero(rng) ? 0 : static_cast<std::int8_t>(score(rng));
          free.push_back(r * kGridSize + c);
        }
      }
    }
    if (free.empty()) continue;
    const int cell = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    w.row = cell / kGridSize;
    w.col = cell % kGridSize;
    w.dir = static_cast<Direction>(std::uniform_int_distribution<int>(0, 3)(rng));
    return w;
  }
  throw GenerationError("no free interior cell after " + std::to_string(params.max_attempts) +
                        " attempts (p_obstruction=" + std::to_string(params.p_obstruction) + ")");
}

Program random_program(std::mt19937_64& rng, int length) {
  std::uniform_int_distribution<int> pick(0, kInstructionCount - 1);
  Program p(std::size_t(std::max(length, 0)));
  for (auto& i : p) i = static_cast<Instruction>(pick(rng));
  return p;
}

bool GridInstance::consistent() const {
  for (int i = 0; i < kPairsPerInstance; ++i) {
    if (!(run(starts[std::size_t(i)], program) == stops[std::size_t(i)])) return false;
  }
  return true;
}

GridInstance make_instance(std::mt19937_64& rng, Program program, const WorldParams& params) {
  GridInstance inst;
  inst.program = std::move(program);
  for (int i = 0; i < kPairsPerInstance; ++i) {
    inst.starts[std::size_t(i)] = random_world(rng, params);
    inst.stops[std::size_t(i)] = run(inst.starts[std::size_t(i)], inst.program);
  }
  return inst;
}

GridInstance random_instance(std::mt19937_64& rng, int min_len, int max_len, const WorldParams& params) {
  if (min_len < 1 || max_len > kMaxProgramLength || min_len > max_len) {
    throw ConfigError("program length range [" + std::to_string(min_len) + ", " + std::to_string(max_len) +
                      "] outside [1, 10]");
  }
  const int len = std::uniform_int_distribution<int>(min_len, max_len)(rng);
  auto program = random_program(rng, len);
  return make_instance(rng, std::move(program), params);
}

std::string render(const World& w) {
  static const char kTurtle[4] = {'^', '>', 'v', '<'};
  std::string out;
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const auto v = w.at(r, c);
      char ch = v == kObstruction ? '#' : (v == kMaxScore ? 'A' : char('0' + v));
      if (r == w.row && c == w.col) {
        out.push_back(kTurtle[static_cast<int>(w.dir)]);
        out.push_back(ch);
      } else {
        out.push_back(' ');
        out.push_back(ch);
      }
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace ftp::gridworld

#include "ftp/gridworld/codec.hpp"

#include <string>

#include "ftp/core/errors.hpp"

namespace ftp::gridworld {

TokenId cell_token(std::int8_t cell) {
  if (cell == kObstruction) return tok::kObstruction;
  return tok::kScore0 + TokenId(cell);
}

TokenId turtle_token(Direction dir, std::int8_t score) {
  return tok::kTurtle0 + TokenId(static_cast<int>(dir) * (kMaxScore + 1) + score);
}

TokenId instruction_token(Instruction i) { return tok::kMove + TokenId(static_cast<int>(i)); }

std::optional<Instruction> token_instruction(TokenId id) {
  if (id < tok::kMove || id > tok::kUnmark) return std::nullopt;
  return static_cast<Instruction>(id - tok::kMove);
}

bool is_grid_token(TokenId id) { return id >= tok::kObstruction && id < tok::kMove; }

std::array<TokenId, kWorldTokens> encode_world(const World& w) {
  std::array<TokenId, kWorldTokens> out{};
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      out[std::size_t(r * kGridSize + c)] = cell_token(w.at(r, c));
    }
  }
  out[std::size_t(w.row * kGridSize + w.col)] = turtle_token(w.dir, w.at(w.row, w.col));
  return out;
}

World decode_world(std::span<const TokenId> ids) {
  if (ids.size() != kWorldTokens) {
    throw DecodeError("a world needs " + std::to_string(kWorldTokens) + " tokens, got " + std::to_string(ids.size()),
                      0);
  }
  World w;
  int turtles = 0;
  for (std::size_t i = 0; i < kWorldTokens; ++i) {
    const TokenId id = ids[i];
    if (!is_grid_token(id)) throw DecodeError("non-grid token " + std::to_string(id), i);
    if (id == tok::kObstruction) {
      w.cells[i] = kObstruction;
    } else if (id < tok::kTurtle0) {
      w.cells[i] = std::int8_t(id - tok::kScore0);
    } else {
      const int t = id - tok::kTurtle0;
      w.cells[i] = std::int8_t(t % (kMaxScore + 1));
      w.dir = static_cast<Direction>(t / (kMaxScore + 1));
      w.row = int(i) / kGridSize;
      w.col = int(i) % kGridSize;
      if (++turtles > 1) throw DecodeError("second turtle cell", i);
    }
  }
  if (turtles == 0) throw DecodeError("world has no turtle cell", 0);
  if (!w.valid()) throw DecodeError("decoded world violates the edge or score invariants", 0);
  return w;
}

std::vector<TokenId> encode_prompt(const GridInstance& inst) {
  std::vector<TokenId> out;
  out.reserve(kSequenceLength);
  for (int i = 0; i < kPairsPerInstance; ++i) {
    const auto a = encode_world(inst.starts[std::size_t(i)]);
    const auto b = encode_world(inst.stops[std::size_t(i)]);
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::vector<TokenId> encode_instance(const GridInstance& inst) {
  if (inst.program.empty() || inst.program.size() > std::size_t(kMaxProgramLength)) {
    throw ContractError("program length " + std::to_string(inst.program.size()) + " outside [1, 10]");
  }
  auto out = encode_prompt(inst);
  for (auto i : inst.program) out.push_back(instruction_token(i));
  out.push_back(tok::kEos);
  out.resize(kSequenceLength, tok::kPad);
  return out;
}

Program decode_program(std::span<const TokenId> ids) {
  Program p;
  for (std::size_t at = kGridRegion; at < ids.size(); ++at) {
    if (ids[at] == tok::kEos) {
      if (p.empty()) throw DecodeError("empty program", at);
      return p;
    }
    const auto ins = token_instruction(ids[at]);
    if (!ins) throw DecodeError("non-instruction token " + std::to_string(ids[at]) + " in program region", at);
    if (p.size() == std::size_t(kMaxProgramLength)) throw DecodeError("program longer than 10 instructions", at);
    p.push_back(*ins);
  }
  throw DecodeError("program region has no EOS", ids.size());
}

GridInstance decode_instance(std::span<const TokenId> ids) {
  if (ids.size() != kSequenceLength) {
    throw DecodeError("sequence of " + std::to_string(ids.size()) + " tokens, expected 662", 0);
  }
  GridInstance inst;
  for (std::size_t g = 0; g < 2 * std::size_t(kPairsPerInstance); ++g) {
    const std::size_t base = g * kWorldTokens;
    try {
      auto& dst = g % 2 == 0 ? inst.starts[g / 2] : inst.stops[g / 2];
      dst = decode_world(ids.subspan(base, kWorldTokens));
    } catch (const DecodeError& e) {
      throw DecodeError("invalid grid " + std::to_string(g), base + e.position());
    }
  }
  inst.program = decode_program(ids);
  const std::size_t eos = kGridRegion + inst.program.size();
  for (std::size_t at = eos + 1; at < ids.size(); ++at) {
    if (ids[at] != tok::kPad) throw DecodeError("expected PAD after EOS", at);
  }
  return inst;
}

std::optional<Program> parse_generated(std::span<const TokenId> generated) {
  Program p;
  for (TokenId id : generated) {
    if (id == tok::kEos) break;
    const auto ins = token_instruction(id);
    if (!ins) return std::nullopt;
    p.push_back(*ins);
  }
  if (p.empty() || p.size() > std::size_t(kMaxProgramLength)) return std::nullopt;
  return p;
}

}  // namespace ftp::gridworld

#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "ftp/gridworld/world.hpp"
#include "ftp/numerics/ops.hpp"

namespace ftp::gridworld {

using numerics::TokenId;

// Token ids. Free cells are S0..S10; the turtle's cell is one token carrying
// both its direction and the cell score.
namespace tok {
inline constexpr TokenId kObstruction = 0;
inline constexpr TokenId kScore0 = 1;     // S0..S10 = 1..11
inline constexpr TokenId kTurtle0 = 12;   // T_dir_score = 12 + dir * 11 + score
inline constexpr TokenId kMove = 56;
inline constexpr TokenId kLeft = 57;
inline constexpr TokenId kRight = 58;
inline constexpr TokenId kMark = 59;
inline constexpr TokenId kUnmark = 60;
inline constexpr TokenId kEos = 61;
inline constexpr TokenId kPad = 62;
inline constexpr std::size_t kVocabSize = 63;
}  // namespace tok

inline constexpr std::size_t kWorldTokens = kCells;
inline constexpr std::size_t kGridRegion = 2 * kPairsPerInstance * kWorldTokens;  // 640
inline constexpr std::size_t kSequenceLength = 662;
// Longest generation: ten instructions then EOS.
inline constexpr std::size_t kMaxGeneratedTokens = kMaxProgramLength + 1;

TokenId cell_token(std::int8_t cell);
TokenId turtle_token(Direction dir, std::int8_t score);
TokenId instruction_token(Instruction i);
std::optional<Instruction> token_instruction(TokenId id);
bool is_grid_token(TokenId id);

std::array<TokenId, kWorldTokens> encode_world(const World& w);
// Throws DecodeError unless the 64 tokens hold grid tokens with exactly one
// turtle cell and form a valid World.
World decode_world(std::span<const TokenId> ids);

// start_0, stop_0, ..., start_4, stop_4, program, EOS, PAD up to 662.
std::vector<TokenId> encode_instance(const GridInstance& inst);
// Grid region only: the generation prompt.
std::vector<TokenId> encode_prompt(const GridInstance& inst);

// Reads the program from position 640 up to EOS. Throws DecodeError with the
// offending position for a non-instruction token, a missing EOS, or a
// program length outside [1, 10].
Program decode_program(std::span<const TokenId> ids);

// Worlds and program from a full encoded sequence; DecodeError when the
// sequence is malformed.
GridInstance decode_instance(std::span<const TokenId> ids);

// A generated continuation: instruction tokens then EOS (or the end of the
// span). Empty, over-long, or non-instruction content yields nullopt.
std::optional<Program> parse_generated(std::span<const TokenId> generated);

}  // namespace ftp::gridworld

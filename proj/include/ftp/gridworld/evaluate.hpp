#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ftp/gridworld/codec.hpp"
#include "ftp/model/models.hpp"

namespace ftp::gridworld {

// Maps 640-token prompts to generated continuations (at most 11 tokens,
// normally ending in EOS).
using ProgramGenerator = std::function<std::vector<std::vector<TokenId>>(const std::vector<std::vector<TokenId>>&)>;

struct LengthBreakdown {
  std::size_t total = 0;
  std::size_t correct = 0;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t ill_formed = 0;
  std::size_t unique = 0;
  double fraction_correct = 0.0;
  double fraction_unique = 0.0;
  std::map<int, LengthBreakdown> per_length;  // keyed by ground-truth length

  std::string to_json() const;
};

// A generated program is correct when it is well-formed and maps every start
// grid of the instance to its stop grid. Uniqueness counts distinct generated
// token sequences (up to EOS).
bool program_correct(const GridInstance& inst, std::span<const TokenId> generated);

EvalReport evaluate(const ProgramGenerator& generator, const std::vector<GridInstance>& test,
                    std::size_t batch_size = 16);

// Greedy decoding through the shared KV-cached encoder.
template <typename T>
ProgramGenerator greedy_generator(const model::GptModel<T>& model);
template <typename T>
ProgramGenerator greedy_generator(const model::FtpModel<T>& model);

}  // namespace ftp::gridworld

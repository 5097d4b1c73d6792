#include "ftp/gridworld/evaluate.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

#include "ftp/core/errors.hpp"
#include "ftp/inference/generation.hpp"

namespace ftp::gridworld {

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["total"] = total;
  j["correct"] = correct;
  j["ill_formed"] = ill_formed;
  j["unique"] = unique;
  j["fraction_correct"] = fraction_correct;
  j["fraction_unique"] = fraction_unique;
  auto& lengths = j["per_length"];
  lengths = nlohmann::json::object();
  for (const auto& [len, b] : per_length) {
    lengths[std::to_string(len)] = {{"total", b.total},
                                    {"correct", b.correct},
                                    {"fraction_correct", b.total ? double(b.correct) / double(b.total) : 0.0}};
  }
  return j.dump(2);
}

bool program_correct(const GridInstance& inst, std::span<const TokenId> generated) {
  const auto program = parse_generated(generated);
  if (!program) return false;
  for (int i = 0; i < kPairsPerInstance; ++i) {
    if (!(run(inst.starts[std::size_t(i)], *program) == inst.stops[std::size_t(i)])) return false;
  }
  return true;
}

EvalReport evaluate(const ProgramGenerator& generator, const std::vector<GridInstance>& test,
                    std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("evaluation batch size must be positive");
  EvalReport r;
  std::set<std::vector<TokenId>> distinct;
  for (std::size_t start = 0; start < test.size(); start += batch_size) {
    const std::size_t end = std::min(test.size(), start + batch_size);
    std::vector<std::vector<TokenId>> prompts;
    prompts.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) prompts.push_back(encode_prompt(test[i]));
    const auto outputs = generator(prompts);
    if (outputs.size() != prompts.size()) {
      throw ContractError("generator returned " + std::to_string(outputs.size()) + " outputs for " +
                          std::to_string(prompts.size()) + " prompts");
    }
    for (std::size_t i = start; i < end; ++i) {
      const auto& gen = outputs[i - start];
      auto stop = std::find(gen.begin(), gen.end(), tok::kEos);
      distinct.emplace(gen.begin(), stop);
      const bool ok = program_correct(test[i], gen);
      if (!parse_generated(gen)) ++r.ill_formed;
      auto& b = r.per_length[int(test[i].program.size())];
      ++b.total;
      if (ok) {
        ++b.correct;
        ++r.correct;
      }
      ++r.total;
    }
  }
  r.unique = distinct.size();
  if (r.total > 0) {
    r.fraction_correct = double(r.correct) / double(r.total);
    r.fraction_unique = double(r.unique) / double(r.total);
  }
  return r;
}

template <typename T>
ProgramGenerator greedy_generator(const model::GptModel<T>& model) {
  return [&model](const std::vector<std::vector<TokenId>>& prompts) {
    return inference::greedy_batch(model, prompts, kMaxGeneratedTokens, tok::kEos);
  };
}

template <typename T>
ProgramGenerator greedy_generator(const model::FtpModel<T>& model) {
  return [&model](const std::vector<std::vector<TokenId>>& prompts) {
    return inference::greedy_batch(model, prompts, kMaxGeneratedTokens, tok::kEos);
  };
}

template ProgramGenerator greedy_generator(const model::GptModel<float>&);
template ProgramGenerator greedy_generator(const model::FtpModel<float>&);
template ProgramGenerator greedy_generator(const model::GptModel<double>&);
template ProgramGenerator greedy_generator(const model::FtpModel<double>&);

}  // namespace ftp::gridworld

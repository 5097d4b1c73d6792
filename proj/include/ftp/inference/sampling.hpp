#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ftp/numerics/ops.hpp"

namespace ftp::inference {

using numerics::TokenId;

struct SamplerConfig {
  std::size_t top_k = 100;
  double temperature = 1.0;
  std::size_t lookahead_k = 4;
  std::size_t lookahead_l = 0;  // greedy decoder steps after each candidate
  double gamma = 0.8;
  std::uint64_t seed = 0;
  std::optional<TokenId> suppress;  // never sampled when set

  // Throws ConfigError on top_k == 0, temperature <= 0 or lookahead_k == 0.
  void validate() const;
};

enum class Strategy { gpt, ftp_single, ftp_lookahead };

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy s);

// Candidate tokens with log-domain scores. Sampling draws candidate i with
// probability proportional to exp(scores[i]).
struct ScoredCandidates {
  std::vector<TokenId> tokens;
  std::vector<double> scores;
};

// Indices of the k largest logits, largest first; equal logits are ordered
// by lower token id. Ids in `excluded` are skipped.
std::vector<TokenId> top_k_ids(std::span<const double> logits, std::size_t k,
                               std::optional<TokenId> excluded = std::nullopt);

// Top-k candidates with scores log softmax(logits / temperature)
// renormalized over the k retained tokens.
ScoredCandidates top_k_scores(std::span<const double> logits, std::size_t k, double temperature,
                              std::optional<TokenId> excluded = std::nullopt);

// softmax(scores): the sampling distribution over candidates.
std::vector<double> candidate_probabilities(std::span<const double> scores);

// Draws an index from a probability vector with one uniform variate.
std::size_t sample_index(std::span<const double> probs, std::mt19937_64& rng);

// Probability vector of sample_topk over top_k_ids(logits, top_k).
std::vector<double> topk_distribution(std::span<const double> logits, std::size_t top_k, double temperature,
                                      std::optional<TokenId> excluded = std::nullopt);

// Zero probability outside the top_k logits, softmax(logits / temperature)
// within them.
TokenId sample_topk(std::span<const double> logits, std::size_t top_k, double temperature, std::mt19937_64& rng,
                    std::optional<TokenId> excluded = std::nullopt);

// Decoder-only view of an FTP model at one context position: the
// pseudo-sequence is fixed and only decoder prefixes vary.
class DecoderOracle {
 public:
  virtual ~DecoderOracle() = default;
  virtual std::size_t vocab_size() const = 0;
  // Longest decoder input (n_future).
  virtual std::size_t window() const = 0;
  // Logits of the token following each prefix. All prefixes have the same
  // length, at most window().
  virtual std::vector<std::vector<double>> next(const std::vector<std::vector<TokenId>>& prefixes) const = 0;
};

// Lookahead scoring. Candidates are the top-K tokens after the single seed
// token; each starts from its renormalized top-K log probability (at the
// configured temperature). For j = 1..L the decoder extends every candidate
// greedily in one batch and gamma^j * log p(greedy token) is added.
ScoredCandidates lookahead_scores(const DecoderOracle& decoder, TokenId seed, std::size_t k, std::size_t l,
                                  double gamma, double temperature = 1.0,
                                  std::optional<TokenId> excluded = std::nullopt);

// Samples one candidate from softmax(lookahead scores).
TokenId lookahead_sample(const DecoderOracle& decoder, TokenId seed, const SamplerConfig& config,
                         std::mt19937_64& rng);

// Chooses the next token given the full context so far.
using NextTokenFn = std::function<TokenId(std::span<const TokenId> context)>;

// Appends n tokens chosen by `next`. Returns prompt + generated tokens.
// Throws ContractError on an empty prompt.
std::vector<TokenId> generate_tokens(const NextTokenFn& next, std::span<const TokenId> prompt, std::size_t n);

}  // namespace ftp::inference

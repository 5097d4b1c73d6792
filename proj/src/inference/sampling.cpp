#include "ftp/inference/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ftp/core/errors.hpp"

namespace ftp::inference {

void SamplerConfig::validate() const {
  if (top_k == 0) throw ConfigError("top_k must be at least 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive, got " + std::to_string(temperature));
  if (lookahead_k == 0) throw ConfigError("lookahead K must be at least 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("lookahead gamma must lie in [0, 1]");
}

Strategy parse_strategy(const std::string& name) {
  if (name == "gpt") return Strategy::gpt;
  if (name == "ftp_single") return Strategy::ftp_single;
  if (name == "ftp_lookahead") return Strategy::ftp_lookahead;
  throw ConfigError("unknown strategy '" + name + "' (expected gpt, ftp_single or ftp_lookahead)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::gpt:
      return "gpt";
    case Strategy::ftp_single:
      return "ftp_single";
    case Strategy::ftp_lookahead:
      return "ftp_lookahead";
  }
  return "?";
}

std::vector<TokenId> top_k_ids(std::span<const double> logits, std::size_t k, std::optional<TokenId> excluded) {
  std::vector<TokenId> ids;
  ids.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (excluded && TokenId(i) == *excluded) continue;
    ids.push_back(TokenId(i));
  }
  if (k > ids.size()) {
    throw ContractError("top_k " + std::to_string(k) + " exceeds the " + std::to_string(ids.size()) +
                        " available tokens");
  }
  auto before = [&](TokenId a, TokenId b) {
    if (logits[std::size_t(a)] != logits[std::size_t(b)]) return logits[std::size_t(a)] > logits[std::size_t(b)];
    return a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + std::ptrdiff_t(k), ids.end(), before);
  ids.resize(k);
  return ids;
}

ScoredCandidates top_k_scores(std::span<const double> logits, std::size_t k, double temperature,
                              std::optional<TokenId> excluded) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  ScoredCandidates out;
  out.tokens = top_k_ids(logits, k, excluded);
  out.scores.resize(k);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    out.scores[i] = logits[std::size_t(out.tokens[i])] / temperature;
    mx = std::max(mx, out.scores[i]);
  }
  double total = 0.0;
  for (double s : out.scores) total += std::exp(s - mx);
  const double lse = mx + std::log(total);
  for (auto& s : out.scores) s -= lse;
  return out;
}

std::vector<double> candidate_probabilities(std::span<const double> scores) {
  std::vector<double> p(scores.size());
  if (scores.empty()) return p;
  const double mx = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(scores[i] - mx);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

std::size_t sample_index(std::span<const double> probs, std::mt19937_64& rng) {
  if (probs.empty()) throw ContractError("cannot sample from an empty distribution");
  const double u = std::generate_canonical<double, 53>(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // rounding left a sliver above the cumulative total
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

std::vector<double> topk_distribution(std::span<const double> logits, std::size_t top_k, double temperature,
                                      std::optional<TokenId> excluded) {
  return candidate_probabilities(top_k_scores(logits, top_k, temperature, excluded).scores);
}

TokenId sample_topk(std::span<const double> logits, std::size_t top_k, double temperature, std::mt19937_64& rng,
                    std::optional<TokenId> excluded) {
  const auto c = top_k_scores(logits, top_k, temperature, excluded);
  return c.tokens[sample_index(candidate_probabilities(c.scores), rng)];
}

namespace {

double log_softmax_at(std::span<const double> logits, std::size_t index) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - mx);
  return logits[index] - mx - std::log(total);
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

ScoredCandidates lookahead_scores(const DecoderOracle& decoder, TokenId seed, std::size_t k, std::size_t l,
                                  double gamma, double temperature, std::optional<TokenId> excluded) {
  if (k == 0 || k > decoder.vocab_size()) {
    throw ContractError("lookahead K " + std::to_string(k) + " outside [1, " + std::to_string(decoder.vocab_size()) +
                        "]");
  }
  if (l + 1 > decoder.window()) {
    throw ContractError("lookahead distance " + std::to_string(l) + " exceeds the decoder window of " +
                        std::to_string(decoder.window()) + " (L <= n_future - 1)");
  }
  const auto first = decoder.next({{seed}});
  auto out = top_k_scores(first.front(), k, temperature, excluded);
  std::vector<std::vector<TokenId>> prefixes(k);
  for (std::size_t i = 0; i < k; ++i) prefixes[i] = {seed, out.tokens[i]};
  double weight = 1.0;
  for (std::size_t j = 1; j <= l; ++j) {
    weight *= gamma;
    const auto logits = decoder.next(prefixes);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t g = argmax(logits[i]);
      out.scores[i] += weight * log_softmax_at(logits[i], g);
      prefixes[i].push_back(TokenId(g));
    }
  }
  return out;
}

TokenId lookahead_sample(const DecoderOracle& decoder, TokenId seed, const SamplerConfig& config,
                         std::mt19937_64& rng) {
  const auto c = lookahead_scores(decoder, seed, config.lookahead_k, config.lookahead_l, config.gamma,
                                  config.temperature, config.suppress);
  return c.tokens[sample_index(candidate_probabilities(c.scores), rng)];
}

std::vector<TokenId> generate_tokens(const NextTokenFn& next, std::span<const TokenId> prompt, std::size_t n) {
  if (prompt.empty()) throw ContractError("generation needs a non-empty prompt");
  std::vector<TokenId> out(prompt.begin(), prompt.end());
  out.reserve(prompt.size() + n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(next(out));
  return out;
}

}  // namespace ftp::inference

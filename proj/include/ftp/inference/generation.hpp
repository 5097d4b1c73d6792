#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ftp/inference/sampling.hpp"
#include "ftp/model/models.hpp"

namespace ftp::inference {

// Logits for the token following the context. The context must be
// non-empty and no longer than enc_ctx.
template <typename T>
std::vector<double> next_logits_gpt(const model::GptModel<T>& model, std::span<const TokenId> context);

// Encoder over the context, pseudo-sequence of the last position, decoder
// seeded with the last context token; logits of its first output.
template <typename T>
std::vector<double> next_logits_ftp(const model::FtpModel<T>& model, std::span<const TokenId> context);

// Encoder over a growing context. Consecutive calls whose context extends
// the previous one reuse cached keys and values; a context longer than
// enc_ctx is cut to its last enc_ctx tokens (sliding window), which
// restarts the cache.
template <typename T>
class ContextEncoder {
 public:
  explicit ContextEncoder(const model::Encoder<T>& encoder, std::size_t context_limit);

  // Top-layer embedding [1, dim] of the last context token.
  numerics::Tensor<T> last_embedding(std::span<const TokenId> context);

 private:
  const model::Encoder<T>* encoder_;
  std::size_t limit_;
  model::EncoderCache<T> cache_;
  std::vector<TokenId> tokens_;
  numerics::Tensor<T> last_;
};

// DecoderOracle over a real FTP model with a fixed pseudo-sequence [1, S, dim].
template <typename T>
class FtpDecoderOracle : public DecoderOracle {
 public:
  FtpDecoderOracle(const model::FtpModel<T>& model, numerics::Tensor<T> pseudo);

  std::size_t vocab_size() const override;
  std::size_t window() const override;
  std::vector<std::vector<double>> next(const std::vector<std::vector<TokenId>>& prefixes) const override;

 private:
  const model::FtpModel<T>* model_;
  numerics::Tensor<T> pseudo_;
};

// Top-k sampling from the GPT head.
template <typename T>
std::vector<TokenId> generate(const model::GptModel<T>& model, std::span<const TokenId> prompt, std::size_t n,
                              const SamplerConfig& config, std::mt19937_64& rng);

// ftp_single samples top-k from next_logits_ftp; ftp_lookahead samples
// from lookahead scores with config.lookahead_k / lookahead_l / gamma.
template <typename T>
std::vector<TokenId> generate(const model::FtpModel<T>& model, std::span<const TokenId> prompt, std::size_t n,
                              Strategy strategy, const SamplerConfig& config, std::mt19937_64& rng);

// Greedy continuation of equal-length prompts, batched. A row stops after
// emitting `stop` or after max_new tokens. Returns the generated tokens per
// row, including a final stop token.
template <typename T>
std::vector<std::vector<TokenId>> greedy_batch(const model::GptModel<T>& model,
                                               const std::vector<std::vector<TokenId>>& prompts,
                                               std::size_t max_new, std::optional<TokenId> stop);
template <typename T>
std::vector<std::vector<TokenId>> greedy_batch(const model::FtpModel<T>& model,
                                               const std::vector<std::vector<TokenId>>& prompts,
                                               std::size_t max_new, std::optional<TokenId> stop);

}  // namespace ftp::inference

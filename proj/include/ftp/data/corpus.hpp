#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ftp/numerics/ops.hpp"

namespace ftp::data {

using numerics::TokenId;

inline constexpr int kCorpusVersion = 1;

struct CorpusMeta {
  std::size_t vocab_size = 0;
  std::string tokenizer;
};

struct TokenCorpus {
  std::vector<TokenId> ids;
  CorpusMeta meta;

  std::size_t size() const { return ids.size(); }
};

// Writes ids as little-endian u32 to `path` and a key=value sidecar to
// `path` + ".meta" (format, version, vocab_size, tokenizer, count). Ids must
// be below meta.vocab_size.
void write_corpus(const std::filesystem::path& path, std::span<const TokenId> ids, const CorpusMeta& meta);

// Throws FormatError (with byte offset) for malformed files and
// UnsupportedVersionError for other format versions.
TokenCorpus read_corpus(const std::filesystem::path& path);

std::filesystem::path meta_path(const std::filesystem::path& corpus_path);

// Contiguous window of len + n_future tokens starting uniformly at random.
std::vector<TokenId> sample_window(const TokenCorpus& corpus, std::mt19937_64& rng, std::size_t len,
                                   std::size_t n_future);

// Aligned encoder / decoder arrays. dec_in[b, t, k] = window[b][t + k] and
// dec_target[b, t, k] = window[b][t + k + 1].
struct Batch {
  std::size_t batch = 0, len = 0, n_future = 0;
  std::vector<TokenId> enc_tokens;   // [batch, len]
  std::vector<TokenId> dec_in;       // [batch, len, n_future]
  std::vector<TokenId> dec_target;   // [batch, len, n_future]
  std::vector<std::uint8_t> loss_mask;  // [batch, len, n_future]

  std::size_t index(std::size_t b, std::size_t t, std::size_t k) const { return (b * len + t) * n_future + k; }
};

// Windows must all have the same length greater than n_future. Targets equal
// to pad_id (when given) are masked out.
Batch make_batch(const std::vector<std::vector<TokenId>>& windows, std::size_t n_future,
                 std::optional<TokenId> pad_id = std::nullopt);

// Independent stream seed for a worker derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t stream);

// Deterministic stream of batches of random windows.
class BatchStream {
 public:
  BatchStream(const TokenCorpus& corpus, std::size_t batch, std::size_t len, std::size_t n_future,
              std::uint64_t seed);

  Batch next();

  // Text form of the generator state, for checkpoints.
  std::string rng_state() const;
  void set_rng_state(const std::string& state);

 private:
  const TokenCorpus* corpus_;
  std::size_t batch_, len_, n_future_;
  std::mt19937_64 rng_;
};

}  // namespace ftp::data

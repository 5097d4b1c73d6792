#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ftp/core/errors.hpp"
#include "ftp/model/config.hpp"
#include "ftp/model/layers.hpp"

namespace ftp::model {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  bool decay;  // false for norm weights and the shared embedding table
};

template <typename T>
struct EncoderBlock {
  Tensor<T> ln1, ln2;
  AttentionWeights<T> attn;
  SwiGluWeights<T> mlp;
};

template <typename T>
struct DecoderBlock {
  Tensor<T> ln1, ln2, ln3;
  AttentionWeights<T> self_attn, cross_attn;
  SwiGluWeights<T> mlp;
};

// Per-layer attention caches of an encoder run over a growing prefix.
template <typename T>
struct EncoderCache {
  std::vector<AttentionCache<T>> layers;
  std::size_t batch = 0;

  std::size_t length() const { return layers.empty() ? 0 : layers.front().length; }
};

// Pre-norm causal transformer over token ids, ending in a final norm. The
// token table is a shared handle owned jointly with the LM head.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModelConfig& config, Tensor<T> table, std::mt19937_64& rng);

  // tokens holds batch * len ids, row-major. Returns [batch, len, dim].
  Tensor<T> forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                    const DropoutContext& drop = {}) const;

  // Top-layer embeddings [batch, n, dim] of n new tokens per sequence
  // appended to the cached prefix. Equals the matching rows of forward() on
  // the whole sequence exactly. Does not record gradients.
  Tensor<T> extend(EncoderCache<T>& cache, std::span<const TokenId> tokens, std::size_t batch,
                   std::size_t n) const;

  void append_parameters(std::vector<NamedParameter<T>>& out) const;

  std::vector<EncoderBlock<T>> blocks;
  Tensor<T> final_norm;

 private:
  ModelConfig config_;
  Tensor<T> table_;
};

// Pseudo-sequence projection followed by the small cross-attending decoder.
template <typename T>
class FtpDecoder {
 public:
  FtpDecoder() = default;
  FtpDecoder(const ModelConfig& config, Tensor<T> table, std::mt19937_64& rng);

  // e [R, dim] -> [R, pseudo_seq, dim].
  Tensor<T> project(const Tensor<T>& e) const;

  // dec_tokens holds R * nd ids; pseudo is [R, pseudo_seq, dim]. Returns
  // post-norm hidden states [R, nd, dim].
  Tensor<T> hidden(std::span<const TokenId> dec_tokens, std::size_t nd, const Tensor<T>& pseudo,
                   const DropoutContext& drop = {}) const;

  // Logits [R, nd, vocab] through the shared LM head.
  Tensor<T> forward(std::span<const TokenId> dec_tokens, std::size_t nd, const Tensor<T>& pseudo,
                    const DropoutContext& drop = {}) const;

  void append_parameters(std::vector<NamedParameter<T>>& out) const;

  Tensor<T> projection;  // [dim, pseudo_seq * dim]
  Tensor<T> positions;   // [n_future, dim]
  std::vector<DecoderBlock<T>> blocks;
  Tensor<T> final_norm;

 private:
  ModelConfig config_;
  Tensor<T> table_;
};

template <typename T>
class GptModel {
 public:
  GptModel() = default;
  GptModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Tensor<T>& table() const { return table_; }
  const Encoder<T>& encoder() const { return encoder_; }

  // Post-norm top-layer embeddings [batch, len, dim].
  Tensor<T> encoder_forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                            const DropoutContext& drop = {}) const;
  // Next-token logits [batch, len, vocab].
  Tensor<T> forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                    const DropoutContext& drop = {}) const;

  std::vector<NamedParameter<T>> named_parameters() const;

 private:
  ModelConfig config_;
  Tensor<T> table_;
  Encoder<T> encoder_;
};

template <typename T>
class FtpModel {
 public:
  FtpModel() = default;
  FtpModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Tensor<T>& table() const { return table_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const FtpDecoder<T>& decoder() const { return decoder_; }

  Tensor<T> encoder_forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                            const DropoutContext& drop = {}) const;
  Tensor<T> project_pseudo_sequence(const Tensor<T>& e) const { return decoder_.project(e); }
  Tensor<T> decoder_forward(std::span<const TokenId> dec_tokens, std::size_t nd, const Tensor<T>& pseudo,
                            const DropoutContext& drop = {}) const;

  // Teacher-forced logits [batch, len, n_future, vocab]. dec_inputs holds
  // batch * len * n_future ids and dec_inputs[b, t, 0] must equal
  // tokens[b, t].
  Tensor<T> forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                    std::span<const TokenId> dec_inputs, const DropoutContext& drop = {}) const;

  // As forward, but runs the decoder only for the listed flat positions
  // (b * len + t). dec_inputs holds rows.size() * nd ids. Returns
  // [rows, nd, vocab].
  Tensor<T> forward_rows(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                         std::span<const std::size_t> rows, std::span<const TokenId> dec_inputs,
                         std::size_t nd, const DropoutContext& drop = {}) const;

  std::vector<NamedParameter<T>> named_parameters() const;

 private:
  ModelConfig config_;
  Tensor<T> table_;
  Encoder<T> encoder_;
  FtpDecoder<T> decoder_;
};

// Copies values between parameter lists with identical names and shapes,
// converting element type. Throws ContractError on any mismatch.
template <typename Dst, typename Src>
void copy_parameter_values(const std::vector<NamedParameter<Dst>>& dst,
                           const std::vector<NamedParameter<Src>>& src) {
  if (dst.size() != src.size()) {
    throw ContractError("parameter lists differ in length: " + std::to_string(dst.size()) + " vs " +
                        std::to_string(src.size()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
      throw ContractError("parameter mismatch at " + dst[i].name + " / " + src[i].name);
    }
    Tensor<Dst> handle = dst[i].tensor;  // shares storage
    auto out = handle.mutable_values();
    auto in = src[i].tensor.values();
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = static_cast<Dst>(in[j]);
  }
}

// Total element count of a parameter list.
template <typename T>
std::size_t parameter_elements(const std::vector<NamedParameter<T>>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace ftp::model

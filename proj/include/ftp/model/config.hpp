#pragma once

#include <cstddef>
#include <cstdint>

namespace ftp::model {

struct ModelConfig {
  std::size_t vocab_size = 258;
  std::size_t dim = 64;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 1;
  std::size_t heads = 4;
  std::size_t mlp_dim = 192;
  std::size_t enc_ctx = 64;
  std::size_t n_future = 8;
  std::size_t pseudo_seq = 8;
  double gamma = 0.8;
  double dropout = 0.0;

  std::size_t head_dim() const { return dim / heads; }

  // Throws ConfigError naming the first violated constraint. The decoder
  // fields are only checked when `with_decoder` is set.
  void validate(bool with_decoder = true) const;

  bool operator==(const ModelConfig&) const = default;
};

// Table 1 shape: 12x768 encoder, MLP 2304, 3-layer decoder, Seq 12, N 8.
ModelConfig reference_config();

// Exact parameter counts. Norm weights are included with the component they
// belong to; the shared token embedding is reported separately.
struct ParameterCount {
  std::uint64_t encoder_layers = 0;  // all encoder blocks
  std::uint64_t encoder_final_norm = 0;
  std::uint64_t projection = 0;
  std::uint64_t decoder_layers = 0;  // all decoder blocks
  std::uint64_t decoder_final_norm = 0;
  std::uint64_t decoder_positions = 0;
  std::uint64_t embeddings = 0;

  std::uint64_t encoder() const { return encoder_layers + encoder_final_norm; }
  std::uint64_t decoder() const { return decoder_layers + decoder_final_norm + decoder_positions; }
  std::uint64_t total() const { return encoder() + projection + decoder() + embeddings; }
};

ParameterCount count_parameters(const ModelConfig& config);

}  // namespace ftp::model

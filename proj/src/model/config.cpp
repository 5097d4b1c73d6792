#include "ftp/model/config.hpp"

#include <string>

#include "ftp/core/errors.hpp"

namespace ftp::model {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid model config: " + what);
}

}  // namespace

void ModelConfig::validate(bool with_decoder) const {
  require(vocab_size >= 1, "vocab_size must be positive");
  require(dim >= 1 && heads >= 1, "dim and heads must be positive");
  require(dim % heads == 0,
          "dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  require(head_dim() % 2 == 0, "head_dim " + std::to_string(head_dim()) + " must be even for rotary pairs");
  require(mlp_dim >= 1, "mlp_dim must be positive");
  require(enc_layers >= 1, "enc_layers must be positive");
  require(enc_ctx >= 1, "enc_ctx must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  if (!with_decoder) return;
  require(dec_layers >= 1, "dec_layers must be positive");
  require(n_future >= 1, "n_future must be at least 1");
  require(pseudo_seq >= 1, "pseudo_seq must be at least 1");
  require(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
}

ModelConfig reference_config() {
  ModelConfig c;
  c.vocab_size = 50257;
  c.dim = 768;
  c.enc_layers = 12;
  c.dec_layers = 3;
  c.heads = 12;
  c.mlp_dim = 2304;
  c.enc_ctx = 1024;
  c.n_future = 8;
  c.pseudo_seq = 12;
  c.gamma = 0.8;
  return c;
}

ParameterCount count_parameters(const ModelConfig& c) {
  const std::uint64_t d = c.dim;
  const std::uint64_t mlp = 3 * d * c.mlp_dim;
  ParameterCount p;
  p.encoder_layers = c.enc_layers * (4 * d * d + mlp + 2 * d);
  p.encoder_final_norm = d;
  p.projection = d * c.pseudo_seq * d;
  p.decoder_layers = c.dec_layers * (8 * d * d + mlp + 3 * d);
  p.decoder_final_norm = d;
  p.decoder_positions = c.n_future * d;
  p.embeddings = c.vocab_size * d;
  return p;
}

}  // namespace ftp::model

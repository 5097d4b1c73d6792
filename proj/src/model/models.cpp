#include "ftp/model/models.hpp"

#include <cmath>
#include <string>

#include "ftp/core/errors.hpp"

namespace ftp::model {

using namespace numerics;

namespace {

double residual_std(std::size_t layers) { return 0.02 / std::sqrt(2.0 * double(layers)); }

template <typename T>
void check_ids(std::span<const TokenId> ids, std::size_t expected, std::size_t vocab, const char* what) {
  if (ids.size() != expected) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(expected) + " token ids, got " +
                         std::to_string(ids.size()));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || std::size_t(ids[i]) >= vocab) {
      throw IndexError(std::string(what) + ": token id " + std::to_string(ids[i]) + " at index " +
                       std::to_string(i) + " outside vocabulary of " + std::to_string(vocab));
    }
  }
}

template <typename T>
void add_attention(std::vector<NamedParameter<T>>& out, const std::string& prefix, const AttentionWeights<T>& w) {
  out.push_back({prefix + ".wq", w.wq, true});
  out.push_back({prefix + ".wk", w.wk, true});
  out.push_back({prefix + ".wv", w.wv, true});
  out.push_back({prefix + ".wo", w.wo, true});
}

template <typename T>
void add_mlp(std::vector<NamedParameter<T>>& out, const std::string& prefix, const SwiGluWeights<T>& w) {
  out.push_back({prefix + ".w_gate", w.w_gate, true});
  out.push_back({prefix + ".w_up", w.w_up, true});
  out.push_back({prefix + ".w_down", w.w_down, true});
}

template <typename T>
Tensor<T> ones(std::size_t dim) {
  return Tensor<T>::full({dim}, T{1}, true);
}

}  // namespace

template <typename T>
Encoder<T>::Encoder(const ModelConfig& config, Tensor<T> table, std::mt19937_64& rng)
    : config_(config), table_(std::move(table)) {
  const double out_std = residual_std(config.enc_layers);
  for (std::size_t i = 0; i < config.enc_layers; ++i) {
    EncoderBlock<T> b;
    b.ln1 = ones<T>(config.dim);
    b.ln2 = ones<T>(config.dim);
    b.attn = init_attention<T>(config.dim, out_std, rng);
    b.mlp = init_swiglu<T>(config.dim, config.mlp_dim, out_std, rng);
    blocks.push_back(std::move(b));
  }
  final_norm = ones<T>(config.dim);
}

template <typename T>
Tensor<T> Encoder<T>::forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                              const DropoutContext& drop) const {
  check_ids<T>(tokens, batch * len, config_.vocab_size, "encoder_forward");
  if (len == 0 || batch == 0) throw ContractError("encoder_forward needs at least one token");
  if (len > config_.enc_ctx) {
    throw ContractError("encoder input length " + std::to_string(len) + " exceeds context " +
                        std::to_string(config_.enc_ctx));
  }
  auto x = maybe_dropout(embedding(table_, tokens, {batch, len}), drop);
  for (const auto& b : blocks) {
    x = add(x, maybe_dropout(causal_self_attention(b.attn, layer_norm(x, b.ln1), config_.heads, config_.enc_ctx), drop));
    x = add(x, maybe_dropout(swiglu_mlp(b.mlp, layer_norm(x, b.ln2)), drop));
  }
  return layer_norm(x, final_norm);
}

template <typename T>
Tensor<T> Encoder<T>::extend(EncoderCache<T>& cache, std::span<const TokenId> tokens, std::size_t batch,
                             std::size_t n) const {
  NoGradGuard guard;
  check_ids<T>(tokens, batch * n, config_.vocab_size, "encoder_extend");
  if (n == 0 || batch == 0) throw ContractError("encoder_extend needs at least one token");
  if (cache.layers.empty()) {
    cache.layers.resize(blocks.size());
    cache.batch = batch;
  } else if (cache.batch != batch) {
    throw DimensionError("encoder cache batch " + std::to_string(cache.batch) + " does not match " +
                         std::to_string(batch));
  }
  auto x = embedding(table_, tokens, {batch, n});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    x = add(x, cached_self_attention(b.attn, layer_norm(x, b.ln1), config_.heads, config_.enc_ctx, cache.layers[i]));
    x = add(x, swiglu_mlp(b.mlp, layer_norm(x, b.ln2)));
  }
  return layer_norm(x, final_norm);
}

template <typename T>
void Encoder<T>::append_parameters(std::vector<NamedParameter<T>>& out) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "enc." + std::to_string(i);
    out.push_back({p + ".ln1", blocks[i].ln1, false});
    out.push_back({p + ".ln2", blocks[i].ln2, false});
    add_attention(out, p + ".attn", blocks[i].attn);
    add_mlp(out, p + ".mlp", blocks[i].mlp);
  }
  out.push_back({"enc.norm", final_norm, false});
}

template <typename T>
FtpDecoder<T>::FtpDecoder(const ModelConfig& config, Tensor<T> table, std::mt19937_64& rng)
    : config_(config), table_(std::move(table)) {
  projection = normal<T>({config.dim, config.pseudo_seq * config.dim}, 0.02, rng, true);
  positions = normal<T>({config.n_future, config.dim}, 0.02, rng, true);
  const double out_std = residual_std(config.dec_layers);
  for (std::size_t i = 0; i < config.dec_layers; ++i) {
    DecoderBlock<T> b;
    b.ln1 = ones<T>(config.dim);
    b.ln2 = ones<T>(config.dim);
    b.ln3 = ones<T>(config.dim);
    b.self_attn = init_attention<T>(config.dim, out_std, rng);
    b.cross_attn = init_attention<T>(config.dim, out_std, rng);
    b.mlp = init_swiglu<T>(config.dim, config.mlp_dim, out_std, rng);
    blocks.push_back(std::move(b));
  }
  final_norm = ones<T>(config.dim);
}

template <typename T>
Tensor<T> FtpDecoder<T>::project(const Tensor<T>& e) const {
  if (e.rank() != 2 || e.shape()[1] != config_.dim) {
    throw DimensionError("pseudo-sequence projection expects [R, " + std::to_string(config_.dim) + "], got " +
                         shape_str(e.shape()));
  }
  return reshape(matmul(e, projection), {e.shape()[0], config_.pseudo_seq, config_.dim});
}

template <typename T>
Tensor<T> FtpDecoder<T>::hidden(std::span<const TokenId> dec_tokens, std::size_t nd, const Tensor<T>& pseudo,
                                const DropoutContext& drop) const {
  if (nd == 0 || nd > config_.n_future) {
    throw ContractError("decoder length " + std::to_string(nd) + " outside [1, " +
                        std::to_string(config_.n_future) + "]");
  }
  if (pseudo.rank() != 3 || pseudo.shape()[2] != config_.dim) {
    throw DimensionError("decoder memory must be [R, S, " + std::to_string(config_.dim) + "], got " +
                         shape_str(pseudo.shape()));
  }
  const std::size_t rows = pseudo.shape()[0];
  check_ids<T>(dec_tokens, rows * nd, config_.vocab_size, "decoder_forward");
  auto x = add(embedding(table_, dec_tokens, {rows, nd}), narrow(positions, 0, 0, nd));
  x = maybe_dropout(x, drop);
  for (const auto& b : blocks) {
    x = add(x, maybe_dropout(causal_self_attention(b.self_attn, layer_norm(x, b.ln1), config_.heads, config_.n_future), drop));
    x = add(x, maybe_dropout(cross_attention(b.cross_attn, layer_norm(x, b.ln2), pseudo, config_.heads), drop));
    x = add(x, maybe_dropout(swiglu_mlp(b.mlp, layer_norm(x, b.ln3)), drop));
  }
  return layer_norm(x, final_norm);
}

template <typename T>
Tensor<T> FtpDecoder<T>::forward(std::span<const TokenId> dec_tokens, std::size_t nd, const Tensor<T>& pseudo,
                                 const DropoutContext& drop) const {
  return matmul(hidden(dec_tokens, nd, pseudo, drop), table_, true);
}

template <typename T>
void FtpDecoder<T>::append_parameters(std::vector<NamedParameter<T>>& out) const {
  out.push_back({"dec.proj", projection, true});
  out.push_back({"dec.pos", positions, true});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "dec." + std::to_string(i);
    out.push_back({p + ".ln1", blocks[i].ln1, false});
    out.push_back({p + ".ln2", blocks[i].ln2, false});
    out.push_back({p + ".ln3", blocks[i].ln3, false});
    add_attention(out, p + ".self", blocks[i].self_attn);
    add_attention(out, p + ".cross", blocks[i].cross_attn);
    add_mlp(out, p + ".mlp", blocks[i].mlp);
  }
  out.push_back({"dec.norm", final_norm, false});
}

template <typename T>
GptModel<T>::GptModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate(false);
  std::mt19937_64 rng(seed);
  table_ = normal<T>({config.vocab_size, config.dim}, 0.02, rng, true);
  encoder_ = Encoder<T>(config, table_, rng);
}

template <typename T>
Tensor<T> GptModel<T>::encoder_forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                                       const DropoutContext& drop) const {
  return encoder_.forward(tokens, batch, len, drop);
}

template <typename T>
Tensor<T> GptModel<T>::forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                               const DropoutContext& drop) const {
  return matmul(encoder_.forward(tokens, batch, len, drop), table_, true);
}

template <typename T>
std::vector<NamedParameter<T>> GptModel<T>::named_parameters() const {
  std::vector<NamedParameter<T>> out{{"embed.table", table_, false}};
  encoder_.append_parameters(out);
  return out;
}

template <typename T>
FtpModel<T>::FtpModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate(true);
  std::mt19937_64 rng(seed);
  table_ = normal<T>({config.vocab_size, config.dim}, 0.02, rng, true);
  encoder_ = Encoder<T>(config, table_, rng);
  decoder_ = FtpDecoder<T>(config, table_, rng);
}

template <typename T>
Tensor<T> FtpModel<T>::encoder_forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                                       const DropoutContext& drop) const {
  return encoder_.forward(tokens, batch, len, drop);
}

template <typename T>
Tensor<T> FtpModel<T>::decoder_forward(std::span<const TokenId> dec_tokens, std::size_t nd,
                                       const Tensor<T>& pseudo, const DropoutContext& drop) const {
  return decoder_.forward(dec_tokens, nd, pseudo, drop);
}

template <typename T>
Tensor<T> FtpModel<T>::forward(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                               std::span<const TokenId> dec_inputs, const DropoutContext& drop) const {
  const std::size_t n = config_.n_future;
  if (dec_inputs.size() != batch * len * n) {
    throw DimensionError("ftp_forward: expected " + std::to_string(batch * len * n) + " decoder ids, got " +
                         std::to_string(dec_inputs.size()));
  }
  for (std::size_t r = 0; r < batch * len; ++r) {
    if (dec_inputs[r * n] != tokens[r]) {
      throw ContractError("ftp_forward: decoder input at flat position " + std::to_string(r) +
                          " is not seeded with the encoder token");
    }
  }
  auto enc = encoder_.forward(tokens, batch, len, drop);
  auto pseudo = decoder_.project(reshape(enc, {batch * len, config_.dim}));
  auto logits = decoder_.forward(dec_inputs, n, pseudo, drop);
  return reshape(logits, {batch, len, n, config_.vocab_size});
}

template <typename T>
Tensor<T> FtpModel<T>::forward_rows(std::span<const TokenId> tokens, std::size_t batch, std::size_t len,
                                    std::span<const std::size_t> rows, std::span<const TokenId> dec_inputs,
                                    std::size_t nd, const DropoutContext& drop) const {
  if (dec_inputs.size() != rows.size() * nd) {
    throw DimensionError("ftp_forward_rows: expected " + std::to_string(rows.size() * nd) +
                         " decoder ids, got " + std::to_string(dec_inputs.size()));
  }
  std::vector<TokenId> picks(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= batch * len) throw IndexError("ftp_forward_rows: row " + std::to_string(rows[r]) + " out of range");
    if (dec_inputs[r * nd] != tokens[rows[r]]) {
      throw ContractError("ftp_forward_rows: decoder input for row " + std::to_string(rows[r]) +
                          " is not seeded with the encoder token");
    }
    picks[r] = static_cast<TokenId>(rows[r]);
  }
  auto enc = encoder_.forward(tokens, batch, len, drop);
  auto picked = embedding(reshape(enc, {batch * len, config_.dim}), picks, {rows.size()});
  return decoder_.forward(dec_inputs, nd, decoder_.project(picked), drop);
}

template <typename T>
std::vector<NamedParameter<T>> FtpModel<T>::named_parameters() const {
  std::vector<NamedParameter<T>> out{{"embed.table", table_, false}};
  encoder_.append_parameters(out);
  decoder_.append_parameters(out);
  return out;
}

template class Encoder<float>;
template class Encoder<double>;
template class FtpDecoder<float>;
template class FtpDecoder<double>;
template class GptModel<float>;
template class GptModel<double>;
template class FtpModel<float>;
template class FtpModel<double>;

}  // namespace ftp::model

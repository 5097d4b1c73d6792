#pragma once

#include <random>
#include <span>
#include <utility>
#include <vector>

#include "ftp/numerics/ops.hpp"

namespace ftp::model {

using numerics::Tensor;
using numerics::TokenId;

// Linear weights are stored [in, out] and applied as x @ W. No biases.
template <typename T>
struct AttentionWeights {
  Tensor<T> wq, wk, wv, wo;
};

template <typename T>
struct SwiGluWeights {
  Tensor<T> w_gate, w_up, w_down;
};

// Dropout source for a forward pass. A null rng or zero rate disables it.
struct DropoutContext {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
};

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, const DropoutContext& ctx);

// Rotates queries and keys at the given positions: q gets the growing XPOS
// scale, k the inverse one.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> xpos_apply(const Tensor<T>& q, const Tensor<T>& k,
                                           std::span<const std::size_t> positions);

// x [B, T, dim] -> [B, T, dim]. Positions are 0..T-1; T must not exceed
// max_len.
template <typename T>
Tensor<T> causal_self_attention(const AttentionWeights<T>& w, const Tensor<T>& x, std::size_t heads,
                                std::size_t max_len);

// Rotated keys and values of one attention layer, kept for incremental
// decoding. k and v hold one buffer per (batch, head) pair, each length *
// head_dim values.
template <typename T>
struct AttentionCache {
  std::size_t length = 0;
  std::vector<std::vector<T>> k, v;
};

// Causal self-attention for x [B, n, dim] at positions [cache.length,
// cache.length + n), attending to the cached prefix and appending the new
// keys and values. Matches causal_self_attention on the full sequence
// exactly. Does not record gradients.
template <typename T>
Tensor<T> cached_self_attention(const AttentionWeights<T>& w, const Tensor<T>& x, std::size_t heads,
                                std::size_t max_len, AttentionCache<T>& cache);

// x [B, Nd, dim] attends to every slot of kv [B, S, dim]. No positional
// signal is applied.
template <typename T>
Tensor<T> cross_attention(const AttentionWeights<T>& w, const Tensor<T>& x, const Tensor<T>& kv,
                          std::size_t heads);

// (silu(x W) * (x V)) W2.
template <typename T>
Tensor<T> swiglu_mlp(const SwiGluWeights<T>& w, const Tensor<T>& x);

template <typename T>
AttentionWeights<T> init_attention(std::size_t dim, double out_std, std::mt19937_64& rng);

template <typename T>
SwiGluWeights<T> init_swiglu(std::size_t dim, std::size_t mlp_dim, double out_std, std::mt19937_64& rng);

}  // namespace ftp::model

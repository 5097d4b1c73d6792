#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ftp/numerics/tensor.hpp"

namespace ftp::numerics {

using TokenId = std::int32_t;

inline constexpr TokenId kIgnoreIndex = -1;
inline constexpr double kLayerNormEps = 1e-5;

// Elementwise arithmetic with numpy-style broadcasting of trailing extents.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> silu(const Tensor<T>& x);
// Exact (erf) form.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// a [.., m, k] @ b [.., k, n] -> [.., m, n]. With transpose_b, b is laid out
// [.., n, k]. Batch extents broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
// sum_i weights[i] * x[i], scalar result. weights has numel(x) entries.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t axis0, std::size_t axis1);
// Slice [start, start + length) along axis.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);
// Softmax over the last axis of x [.., Tq, Tk] where row i may only attend
// to columns j <= i + (Tk - Tq). Masked entries are exactly zero.
template <typename T>
Tensor<T> causal_softmax_rows(const Tensor<T>& x);

// Normalizes each trailing row to zero mean / unit variance, then scales by
// weight. No bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& weight);

// Gathers rows of table [V, d] -> ids_shape + [d]. Gradient scatter-adds.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids, const Shape& ids_shape);

// Per-row cross entropy -log softmax(logits)[target] for logits [.., V].
// Rows whose target equals kIgnoreIndex yield zero loss and zero gradient.
template <typename T>
Tensor<T> cross_entropy_rows(const Tensor<T>& logits, std::span<const TokenId> targets);
// Mean cross entropy over non-ignored rows; zero when every row is ignored.
template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, std::span<const TokenId> targets);

struct XposParams {
  double theta = 10000.0;
  double scale_base = 512.0;
};

// Rotary rotation of adjacent feature pairs with XPOS magnitude scaling.
// x is [.., T, head_dim] and positions has T entries. Queries use
// direction +1 (scale zeta^(m / scale_base)) and keys direction -1, so the
// product of a rotated query and key depends only on their offset.
template <typename T>
Tensor<T> xpos_rotate(const Tensor<T>& x, std::span<const std::size_t> positions, int direction,
                      const XposParams& params = {});

// Per-pair XPOS base zeta_i = (2i + 0.4 d) / (1.4 d).
double xpos_zeta(std::size_t pair, std::size_t head_dim);

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng);

template <typename T>
Tensor<T> normal(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad = false);

}  // namespace ftp::numerics

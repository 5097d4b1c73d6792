#pragma once

#include <cstddef>

#include "ftp/numerics/tensor.hpp"

namespace ftp::numerics {

namespace kernels {

// Causal attention for the query positions [first, first + rows) of one
// head. q is [rows, hd]; k and v are [first + rows, hd] and cover positions
// 0.. first + rows - 1. Writes out [rows, hd]. When probs is non-null it
// receives the attention weights, row stride first + rows, zero beyond each
// row's causal limit.
//
// A query row's output depends only on keys at or before its position and is
// computed the same way whatever `first` and `rows` are, so a cached
// one-row-at-a-time evaluation reproduces the full one exactly.
template <typename T>
void causal_attention_rows(const T* q, const T* k, const T* v, std::size_t first, std::size_t rows,
                           std::size_t hd, T scale, T* out, T* probs);

}  // namespace kernels

// softmax(scale * q k^T, causal) v over the last two axes of q, k, v, all
// shaped [.., T, hd]. Equivalent to matmul / scale / causal_softmax_rows /
// matmul, without materializing the masked half.
template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, T scale);

}  // namespace ftp::numerics

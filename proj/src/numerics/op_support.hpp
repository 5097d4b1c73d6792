#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ftp/core/errors.hpp"
#include "ftp/numerics/tensor.hpp"

namespace ftp::numerics::detail {

// Gradient buffer of the i-th input, or nullptr when that input does not
// take part in differentiation.
template <typename T>
T* input_grad(Node<T>& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer().data() : nullptr;
}

template <typename T>
const std::vector<T>& input_value(const Node<T>& self, std::size_t i) {
  return self.inputs[i]->value;
}

inline std::size_t leading_rows(const Shape& shape) {
  std::size_t rows = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  return rows;
}

inline void require_rank(const Shape& shape, std::size_t min_rank, const char* op) {
  if (shape.size() < min_rank) {
    throw DimensionError(std::string(op) + " expects rank >= " + std::to_string(min_rank) +
                         ", got shape " + shape_str(shape));
  }
}

// Softmax of row[0, valid) into out[0, valid); the remainder is zeroed.
template <typename T>
inline void softmax_row(const T* row, T* out, std::size_t valid, std::size_t cols) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < valid; ++j) mx = std::max(mx, row[j]);
  T total{0};
  for (std::size_t j = 0; j < valid; ++j) {
    out[j] = std::exp(row[j] - mx);
    total += out[j];
  }
  const T inv = T{1} / total;
  for (std::size_t j = 0; j < valid; ++j) out[j] *= inv;
  for (std::size_t j = valid; j < cols; ++j) out[j] = T{0};
}

}  // namespace ftp::numerics::detail

#pragma once

#include <cstddef>

namespace ftp::numerics::kernels {

// Strided read-only view of a matrix: element (i, j) lives at
// data[i * row_stride + j * col_stride]. Swapping the strides transposes.
template <typename T>
struct MatrixView {
  const T* data;
  std::ptrdiff_t row_stride;
  std::ptrdiff_t col_stride;

  MatrixView transposed() const { return {data, col_stride, row_stride}; }
};

template <typename T>
MatrixView<T> row_major(const T* data, std::size_t cols) {
  return {data, static_cast<std::ptrdiff_t>(cols), 1};
}

// C[m, n] = A[m, k] * B[k, n]   (or C += ... when accumulate is set).
//
// C is row-major with leading dimension ldc. Every output element is a
// sequential sum over k evaluated by one micro-kernel, so its value does not
// depend on m, n, tiling position or the values in other rows. Causality and
// prefix-consistency checks rely on this.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, MatrixView<T> a, MatrixView<T> b, T* c,
          std::size_t ldc, bool accumulate);

}  // namespace ftp::numerics::kernels

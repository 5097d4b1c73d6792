#include "ftp/numerics/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace ftp::numerics::kernels {

namespace {

template <typename T>
struct Simd {
  typedef T vec __attribute__((vector_size(64)));
  static constexpr std::size_t lanes = 64 / sizeof(T);
};

constexpr std::size_t kRowTile = 8;
constexpr std::size_t kRowChunk = 128;

template <typename T>
constexpr std::size_t col_tile() {
  return 2 * Simd<T>::lanes;
}

// Packed A holds kRowTile rows interleaved per k step; packed B holds
// col_tile() columns per k step. Padding entries are zero.
template <typename T>
void micro_kernel(std::size_t k, const T* ap, const T* bp, T* out) {
  using V = typename Simd<T>::vec;
  constexpr std::size_t L = Simd<T>::lanes;
  constexpr std::size_t NR = col_tile<T>();
  V acc[kRowTile][2];
  for (std::size_t r = 0; r < kRowTile; ++r) acc[r][0] = acc[r][1] = V{};
  for (std::size_t p = 0; p < k; ++p) {
    V b0, b1;
    std::memcpy(&b0, bp + p * NR, sizeof(V));
    std::memcpy(&b1, bp + p * NR + L, sizeof(V));
    const T* arow = ap + p * kRowTile;
    for (std::size_t r = 0; r < kRowTile; ++r) {
      const V av = V{} + arow[r];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < kRowTile; ++r) {
    std::memcpy(out + r * NR, &acc[r][0], sizeof(V));
    std::memcpy(out + r * NR + L, &acc[r][1], sizeof(V));
  }
}

template <typename T>
struct Scratch {
  std::vector<T> a;
  std::vector<T> b;
};

template <typename T>
Scratch<T>& scratch() {
  thread_local Scratch<T> s;
  return s;
}

}  // namespace

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, MatrixView<T> a, MatrixView<T> b, T* c,
          std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T{0});
    }
    return;
  }
  constexpr std::size_t NR = col_tile<T>();
  const std::size_t panels = (n + NR - 1) / NR;

  auto& s = scratch<T>();
  s.b.resize(panels * k * NR);
  for (std::size_t pj = 0; pj < panels; ++pj) {
    T* dst = s.b.data() + pj * k * NR;
    const std::size_t j0 = pj * NR;
    const std::size_t width = std::min(NR, n - j0);
    for (std::size_t p = 0; p < k; ++p) {
      const T* src = b.data + static_cast<std::ptrdiff_t>(p) * b.row_stride;
      T* row = dst + p * NR;
      if (b.col_stride == 1) {
        std::memcpy(row, src + j0, width * sizeof(T));
      } else {
        for (std::size_t j = 0; j < width; ++j) {
          row[j] = src[static_cast<std::ptrdiff_t>(j0 + j) * b.col_stride];
        }
      }
      std::fill(row + width, row + NR, T{0});
    }
  }

  T tile[kRowTile * NR];
  for (std::size_t i0 = 0; i0 < m; i0 += kRowChunk) {
    const std::size_t rows = std::min(kRowChunk, m - i0);
    const std::size_t tiles = (rows + kRowTile - 1) / kRowTile;
    s.a.resize(tiles * k * kRowTile);
    for (std::size_t t = 0; t < tiles; ++t) {
      T* dst = s.a.data() + t * k * kRowTile;
      const std::size_t r0 = i0 + t * kRowTile;
      const std::size_t height = std::min(kRowTile, m - r0);
      for (std::size_t r = 0; r < height; ++r) {
        const T* src = a.data + static_cast<std::ptrdiff_t>(r0 + r) * a.row_stride;
        if (a.col_stride == 1) {
          for (std::size_t p = 0; p < k; ++p) dst[p * kRowTile + r] = src[p];
        } else {
          for (std::size_t p = 0; p < k; ++p) {
            dst[p * kRowTile + r] = src[static_cast<std::ptrdiff_t>(p) * a.col_stride];
          }
        }
      }
      for (std::size_t r = height; r < kRowTile; ++r) {
        for (std::size_t p = 0; p < k; ++p) dst[p * kRowTile + r] = T{0};
      }
    }
    for (std::size_t pj = 0; pj < panels; ++pj) {
      const T* bp = s.b.data() + pj * k * NR;
      const std::size_t j0 = pj * NR;
      const std::size_t width = std::min(NR, n - j0);
      for (std::size_t t = 0; t < tiles; ++t) {
        const std::size_t r0 = i0 + t * kRowTile;
        const std::size_t height = std::min(kRowTile, m - r0);
        micro_kernel<T>(k, s.a.data() + t * k * kRowTile, bp, tile);
        for (std::size_t r = 0; r < height; ++r) {
          T* crow = c + (r0 + r) * ldc + j0;
          const T* trow = tile + r * NR;
          if (accumulate) {
            for (std::size_t j = 0; j < width; ++j) crow[j] += trow[j];
          } else {
            std::memcpy(crow, trow, width * sizeof(T));
          }
        }
      }
    }
  }
}

template void gemm<float>(std::size_t, std::size_t, std::size_t, MatrixView<float>,
                          MatrixView<float>, float*, std::size_t, bool);
template void gemm<double>(std::size_t, std::size_t, std::size_t, MatrixView<double>,
                           MatrixView<double>, double*, std::size_t, bool);

}  // namespace ftp::numerics::kernels

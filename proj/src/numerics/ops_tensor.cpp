#include <algorithm>
#include <cstring>

#include "ftp/numerics/gemm.hpp"
#include "ftp/numerics/ops.hpp"
#include "op_support.hpp"

namespace ftp::numerics {

using detail::input_grad;
using detail::input_value;
using detail::Node;

namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_strides;
  std::vector<std::size_t> b_strides;
};

std::vector<std::size_t> aligned_strides(const Shape& in, std::size_t rank) {
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t axis = in.size() - 1 - i;
    const std::size_t out_axis = rank - 1 - i;
    strides[out_axis] = in[axis] == 1 ? 0 : stride;
    stride *= in[axis];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  BroadcastPlan p;
  p.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    }
    p.out[rank - 1 - i] = ea == 1 ? eb : ea;
  }
  p.a_strides = aligned_strides(a, rank);
  p.b_strides = aligned_strides(b, rank);
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element in
// row-major order.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t rank = p.out.size();
  const std::size_t total = shape_numel(p.out);
  if (total == 0) return;
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t inner = p.out[rank - 1];
  const std::size_t sa = p.a_strides[rank - 1];
  const std::size_t sb = p.b_strides[rank - 1];
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ia + j * sa, ib + j * sb);
    // advance the outer multi-index
    for (std::size_t axis = rank - 1; axis-- > 0;) {
      ++idx[axis];
      ia += p.a_strides[axis];
      ib += p.b_strides[axis];
      if (idx[axis] < p.out[axis]) break;
      ia -= p.a_strides[axis] * idx[axis];
      ib -= p.b_strides[axis] * idx[axis];
      idx[axis] = 0;
    }
  }
}

enum class Arith { add, sub, mul };

template <typename T>
Tensor<T> arith(const Tensor<T>& a, const Tensor<T>& b, Arith kind, const char* name) {
  const auto& av = a.values();
  const auto& bv = b.values();
  if (a.shape() == b.shape()) {
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = kind == Arith::add ? av[i] + bv[i] : kind == Arith::sub ? av[i] - bv[i] : av[i] * bv[i];
    }
    return Tensor<T>::make_result(a.shape(), std::move(out), name, {a, b}, [kind](Node<T>& self) {
      const auto& g = self.grad;
      if (T* ga = input_grad(self, 0)) {
        if (kind == Arith::mul) {
          const auto& y = input_value(self, 1);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
      }
      if (T* gb = input_grad(self, 1)) {
        if (kind == Arith::mul) {
          const auto& x = input_value(self, 0);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
        } else if (kind == Arith::sub) {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
      }
    });
  }

  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  std::vector<T> out(shape_numel(plan.out));
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = kind == Arith::add ? av[ia] + bv[ib] : kind == Arith::sub ? av[ia] - bv[ib] : av[ia] * bv[ib];
  });
  Shape out_shape = plan.out;
  return Tensor<T>::make_result(
      std::move(out_shape), std::move(out), name, {a, b}, [kind, plan](Node<T>& self) {
        const auto& g = self.grad;
        const auto& x = input_value(self, 0);
        const auto& y = input_value(self, 1);
        T* ga = input_grad(self, 0);
        T* gb = input_grad(self, 1);
        for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          if (ga) ga[ia] += kind == Arith::mul ? g[o] * y[ib] : g[o];
          if (gb) gb[ib] += kind == Arith::mul ? g[o] * x[ia] : kind == Arith::sub ? -g[o] : g[o];
        });
      });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return arith(a, b, Arith::add, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return arith(a, b, Arith::sub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return arith(a, b, Arith::mul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return Tensor<T>::make_result(a.shape(), std::move(out), "scale", {a}, [factor](Node<T>& self) {
    if (T* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(as) + " and " + shape_str(bs));
  }
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t bk = transpose_b ? bs.back() : bs[bs.size() - 2];
  const std::size_t n = transpose_b ? bs[bs.size() - 2] : bs.back();
  if (k != bk) {
    throw DimensionError("matmul inner extents differ: " + shape_str(as) + " @ " + shape_str(bs) +
                         (transpose_b ? "^T" : ""));
  }

  using kernels::MatrixView;
  const auto b_view = [&](const T* data) -> MatrixView<T> {
    return transpose_b ? MatrixView<T>{data, 1, static_cast<std::ptrdiff_t>(k)}
                       : MatrixView<T>{data, static_cast<std::ptrdiff_t>(n), 1};
  };

  // A rank-2 right operand is shared by every row of the left operand.
  if (bs.size() == 2) {
    const std::size_t rows = shape_numel(as) / k;
    Shape out_shape(as.begin(), as.end() - 1);
    out_shape.push_back(n);
    std::vector<T> out(rows * n);
    kernels::gemm<T>(rows, n, k, kernels::row_major(a.values().data(), k), b_view(b.values().data()),
                     out.data(), n, false);
    return Tensor<T>::make_result(
        std::move(out_shape), std::move(out), "matmul", {a, b}, [rows, n, k, transpose_b](Node<T>& self) {
          const T* g = self.grad.data();
          const T* x = input_value(self, 0).data();
          const T* w = input_value(self, 1).data();
          if (T* ga = input_grad(self, 0)) {
            // dA = dC @ B^T
            const MatrixView<T> bt = transpose_b ? MatrixView<T>{w, static_cast<std::ptrdiff_t>(k), 1}
                                                 : MatrixView<T>{w, 1, static_cast<std::ptrdiff_t>(n)};
            kernels::gemm<T>(rows, k, n, kernels::row_major(g, n), bt, ga, k, true);
          }
          if (T* gb = input_grad(self, 1)) {
            if (transpose_b) {
              // dB [n, k] = dC^T @ A
              kernels::gemm<T>(n, k, rows, kernels::row_major(g, n).transposed(), kernels::row_major(x, k),
                               gb, k, true);
            } else {
              kernels::gemm<T>(k, n, rows, kernels::row_major(x, k).transposed(), kernels::row_major(g, n),
                               gb, n, true);
            }
          }
        });
  }

  Shape a_batch(as.begin(), as.end() - 2);
  Shape b_batch(bs.begin(), bs.end() - 2);
  auto plan = plan_broadcast(a_batch, b_batch, "matmul");
  Shape out_shape = plan.out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  const std::size_t batches = shape_numel(plan.out);
  std::vector<std::size_t> a_off(batches), b_off(batches);
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    a_off[o] = ia * m * k;
    b_off[o] = ib * k * n;
  });
  std::vector<T> out(batches * m * n);
  const T* ad = a.values().data();
  const T* bd = b.values().data();
  for (std::size_t i = 0; i < batches; ++i) {
    kernels::gemm<T>(m, n, k, kernels::row_major(ad + a_off[i], k), b_view(bd + b_off[i]),
                     out.data() + i * m * n, n, false);
  }
  return Tensor<T>::make_result(
      std::move(out_shape), std::move(out), "matmul", {a, b},
      [m, n, k, transpose_b, a_off, b_off](Node<T>& self) {
        const T* g = self.grad.data();
        const T* x = input_value(self, 0).data();
        const T* w = input_value(self, 1).data();
        T* ga = input_grad(self, 0);
        T* gb = input_grad(self, 1);
        for (std::size_t i = 0; i < a_off.size(); ++i) {
          const T* gi = g + i * m * n;
          const T* wi = w + b_off[i];
          if (ga) {
            const MatrixView<T> bt = transpose_b ? MatrixView<T>{wi, static_cast<std::ptrdiff_t>(k), 1}
                                                 : MatrixView<T>{wi, 1, static_cast<std::ptrdiff_t>(n)};
            kernels::gemm<T>(m, k, n, kernels::row_major(gi, n), bt, ga + a_off[i], k, true);
          }
          if (gb) {
            if (transpose_b) {
              kernels::gemm<T>(n, k, m, kernels::row_major(gi, n).transposed(),
                               kernels::row_major(x + a_off[i], k), gb + b_off[i], k, true);
            } else {
              kernels::gemm<T>(k, n, m, kernels::row_major(x + a_off[i], k).transposed(),
                               kernels::row_major(gi, n), gb + b_off[i], n, true);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total{0};
  for (T v : x.values()) total += v;
  return Tensor<T>::make_result({}, {total}, "sum", {x}, [](Node<T>& self) {
    if (T* gx = input_grad(self, 0)) {
      const T g = self.grad[0];
      const std::size_t n = input_value(self, 0).size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights) {
  if (weights.size() != x.numel()) {
    throw DimensionError("weighted_sum: " + std::to_string(weights.size()) + " weights for tensor " +
                         shape_str(x.shape()));
  }
  T total{0};
  const auto& xv = x.values();
  for (std::size_t i = 0; i < weights.size(); ++i) total += weights[i] * xv[i];
  std::vector<T> w(weights.begin(), weights.end());
  return Tensor<T>::make_result({}, {total}, "weighted_sum", {x}, [w = std::move(w)](Node<T>& self) {
    if (T* gx = input_grad(self, 0)) {
      const T g = self.grad[0];
      for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const auto& xv = x.values();
  std::vector<T> out(xv.begin(), xv.end());
  return Tensor<T>::make_result(std::move(shape), std::move(out), "reshape", {x}, [](Node<T>& self) {
    if (T* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
  });
}

namespace {

// Swaps axes a0 < a1 of a tensor viewed as [outer, A, mid, B, inner].
template <typename T>
void swap_axes(const T* src, T* dst, std::size_t outer, std::size_t ea, std::size_t mid, std::size_t eb,
               std::size_t inner, bool accumulate) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < ea; ++i) {
      for (std::size_t md = 0; md < mid; ++md) {
        for (std::size_t j = 0; j < eb; ++j) {
          const T* s = src + ((((o * ea + i) * mid + md) * eb + j) * inner);
          T* d = dst + ((((o * eb + j) * mid + md) * ea + i) * inner);
          if (accumulate) {
            for (std::size_t q = 0; q < inner; ++q) d[q] += s[q];
          } else {
            std::memcpy(d, s, inner * sizeof(T));
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t axis0, std::size_t axis1) {
  const Shape& s = x.shape();
  if (axis0 >= s.size() || axis1 >= s.size()) {
    throw DimensionError("transpose axes out of range for shape " + shape_str(s));
  }
  if (axis0 == axis1) return reshape(x, s);
  const std::size_t a0 = std::min(axis0, axis1);
  const std::size_t a1 = std::max(axis0, axis1);
  std::size_t outer = 1, mid = 1, inner = 1;
  for (std::size_t i = 0; i < a0; ++i) outer *= s[i];
  for (std::size_t i = a0 + 1; i < a1; ++i) mid *= s[i];
  for (std::size_t i = a1 + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t ea = s[a0], eb = s[a1];
  Shape out_shape = s;
  std::swap(out_shape[a0], out_shape[a1]);
  std::vector<T> out(x.numel());
  swap_axes(x.values().data(), out.data(), outer, ea, mid, eb, inner, false);
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), "transpose", {x},
                                [=](Node<T>& self) {
                                  if (T* gx = input_grad(self, 0)) {
                                    swap_axes(self.grad.data(), gx, outer, eb, mid, ea, inner, true);
                                  }
                                });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw DimensionError("narrow(" + std::to_string(axis) + ", " + std::to_string(start) + ", " +
                         std::to_string(length) + ") out of range for shape " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t extent = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<T> out(outer * length * inner);
  const T* src = x.values().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * length * inner, src + (o * extent + start) * inner, length * inner * sizeof(T));
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), "narrow", {x}, [=](Node<T>& self) {
    if (T* gx = input_grad(self, 0)) {
      const T* g = self.grad.data();
      for (std::size_t o = 0; o < outer; ++o) {
        T* d = gx + (o * extent + start) * inner;
        const T* gs = g + o * length * inner;
        for (std::size_t q = 0; q < length * inner; ++q) d[q] += gs[q];
      }
    }
  });
}

#define FTP_INSTANTIATE(T)                                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool);                      \
  template Tensor<T> sum(const Tensor<T>&);                                                 \
  template Tensor<T> mean(const Tensor<T>&);                                                \
  template Tensor<T> weighted_sum(const Tensor<T>&, std::span<const T>);                    \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                      \
  template Tensor<T> transpose(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> narrow(const Tensor<T>&, std::size_t, std::size_t, std::size_t);

FTP_INSTANTIATE(float)
FTP_INSTANTIATE(double)
#undef FTP_INSTANTIATE

}  // namespace ftp::numerics

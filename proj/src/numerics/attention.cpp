#include "ftp/numerics/attention.hpp"

#include <algorithm>
#include <memory>
#include <vector>

#include "ftp/numerics/gemm.hpp"
#include "op_support.hpp"

namespace ftp::numerics {

using detail::input_grad;
using detail::input_value;
using detail::Node;

namespace {

constexpr std::size_t kQueryBlock = 64;

}  // namespace

namespace kernels {

template <typename T>
void causal_attention_rows(const T* q, const T* k, const T* v, std::size_t first, std::size_t rows,
                           std::size_t hd, T scale, T* out, T* probs) {
  const std::size_t total = first + rows;
  std::vector<T> scores;
  std::vector<T> local;
  for (std::size_t b0 = 0; b0 < rows; b0 += kQueryBlock) {
    const std::size_t nb = std::min(kQueryBlock, rows - b0);
    const std::size_t lim = first + b0 + nb;
    scores.resize(nb * lim);
    gemm<T>(nb, lim, hd, row_major(q + b0 * hd, hd), row_major(k, hd).transposed(), scores.data(), lim, false);
    for (auto& s : scores) s *= scale;
    T* p;
    std::size_t ldp;
    if (probs) {
      p = probs + b0 * total;
      ldp = total;
    } else {
      local.resize(nb * lim);
      p = local.data();
      ldp = lim;
    }
    for (std::size_t i = 0; i < nb; ++i) {
      detail::softmax_row(scores.data() + i * lim, p + i * ldp, first + b0 + i + 1, lim);
      if (probs) std::fill(p + i * ldp + lim, p + i * ldp + total, T{0});
    }
    gemm<T>(nb, hd, lim, MatrixView<T>{p, static_cast<std::ptrdiff_t>(ldp), 1}, row_major(v, hd),
            out + b0 * hd, hd, false);
  }
}

template void causal_attention_rows<float>(const float*, const float*, const float*, std::size_t, std::size_t,
                                           std::size_t, float, float*, float*);
template void causal_attention_rows<double>(const double*, const double*, const double*, std::size_t,
                                            std::size_t, std::size_t, double, double*, double*);

}  // namespace kernels

template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, T scale) {
  detail::require_rank(q.shape(), 2, "causal_attention");
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("causal_attention operands differ: q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  const Shape& s = q.shape();
  const std::size_t hd = s.back();
  const std::size_t len = s[s.size() - 2];
  const std::size_t slices = detail::leading_rows(s) / std::max<std::size_t>(len, 1);
  const bool keep = GradMode::enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  auto probs = keep ? std::make_shared<std::vector<T>>(slices * len * len) : nullptr;
  std::vector<T> out(q.numel());
  const T* qd = q.values().data();
  const T* kd = k.values().data();
  const T* vd = v.values().data();
  for (std::size_t b = 0; b < slices; ++b) {
    const std::size_t off = b * len * hd;
    kernels::causal_attention_rows<T>(qd + off, kd + off, vd + off, 0, len, hd, scale, out.data() + off,
                                      probs ? probs->data() + b * len * len : nullptr);
  }
  return Tensor<T>::make_result(s, std::move(out), "causal_attention", {q, k, v}, [probs, slices, len, hd,
                                                                                   scale](Node<T>& self) {
    using kernels::gemm;
    using kernels::MatrixView;
    using kernels::row_major;
    T* gq = input_grad(self, 0);
    T* gk = input_grad(self, 1);
    T* gv = input_grad(self, 2);
    const T* qv = input_value(self, 0).data();
    const T* kv = input_value(self, 1).data();
    const T* vv = input_value(self, 2).data();
    const T* g = self.grad.data();
    std::vector<T> dp;
    for (std::size_t b = 0; b < slices; ++b) {
      const std::size_t off = b * len * hd;
      const T* p_all = probs->data() + b * len * len;
      for (std::size_t i0 = 0; i0 < len; i0 += kQueryBlock) {
        const std::size_t nb = std::min(kQueryBlock, len - i0);
        const std::size_t lim = i0 + nb;
        const MatrixView<T> p_blk{p_all + i0 * len, static_cast<std::ptrdiff_t>(len), 1};
        if (gv) {
          // dV[:lim] += P^T dO
          gemm<T>(lim, hd, nb, p_blk.transposed(), row_major(g + off + i0 * hd, hd), gv + off, hd, true);
        }
        if (!gq && !gk) continue;
        // dP = dO V^T, then dS = P * (dP - <P, dP>) * scale
        dp.resize(nb * lim);
        gemm<T>(nb, lim, hd, row_major(g + off + i0 * hd, hd), row_major(vv + off, hd).transposed(), dp.data(),
                lim, false);
        for (std::size_t i = 0; i < nb; ++i) {
          const T* pr = p_all + (i0 + i) * len;
          T* dr = dp.data() + i * lim;
          const std::size_t valid = i0 + i + 1;
          T dot{0};
          for (std::size_t j = 0; j < valid; ++j) dot += pr[j] * dr[j];
          for (std::size_t j = 0; j < valid; ++j) dr[j] = pr[j] * (dr[j] - dot) * scale;
          std::fill(dr + valid, dr + lim, T{0});
        }
        const MatrixView<T> ds = row_major(dp.data(), lim);
        if (gq) gemm<T>(nb, hd, lim, ds, row_major(kv + off, hd), gq + off + i0 * hd, hd, true);
        if (gk) gemm<T>(lim, hd, nb, ds.transposed(), row_major(qv + off + i0 * hd, hd), gk + off, hd, true);
      }
    }
  });
}

template Tensor<float> causal_attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> causal_attention(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                         double);

}  // namespace ftp::numerics

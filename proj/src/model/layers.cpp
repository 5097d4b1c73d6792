#include "ftp/model/layers.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "ftp/core/errors.hpp"
#include "ftp/numerics/attention.hpp"

namespace ftp::model {

using namespace numerics;

namespace {

// [B, T, dim] -> [B, H, T, hd]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  const Shape& s = x.shape();
  return transpose(reshape(x, {s[0], s[1], heads, s[2] / heads}), 1, 2);
}

// [B, H, T, hd] -> [B, T, dim]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const Shape& s = x.shape();
  return reshape(transpose(x, 1, 2), {s[0], s[2], s[1] * s[3]});
}

template <typename T>
void require_rank3(const Tensor<T>& x, std::size_t dim, const char* what) {
  if (x.rank() != 3 || x.shape()[2] != dim) {
    throw DimensionError(std::string(what) + " expects [B, T, " + std::to_string(dim) + "], got " +
                         shape_str(x.shape()));
  }
}

template <typename T>
Tensor<T> init_linear(std::size_t in, std::size_t out, double stddev, std::mt19937_64& rng) {
  return normal<T>({in, out}, stddev, rng, true);
}

}  // namespace

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, const DropoutContext& ctx) {
  return ctx.active() ? dropout(x, ctx.rate, *ctx.rng) : x;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> xpos_apply(const Tensor<T>& q, const Tensor<T>& k,
                                           std::span<const std::size_t> positions) {
  return {xpos_rotate(q, positions, +1), xpos_rotate(k, positions, -1)};
}

template <typename T>
Tensor<T> causal_self_attention(const AttentionWeights<T>& w, const Tensor<T>& x, std::size_t heads,
                                std::size_t max_len) {
  const std::size_t dim = w.wq.shape()[0];
  require_rank3(x, dim, "causal_self_attention");
  const std::size_t len = x.shape()[1];
  if (len > max_len) {
    throw ContractError("sequence length " + std::to_string(len) + " exceeds context " + std::to_string(max_len));
  }
  const std::size_t hd = dim / heads;
  std::vector<std::size_t> positions(len);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  auto q = split_heads(matmul(x, w.wq), heads);
  auto k = split_heads(matmul(x, w.wk), heads);
  auto v = split_heads(matmul(x, w.wv), heads);
  auto [qr, kr] = xpos_apply(q, k, positions);
  auto attn = causal_attention(qr, kr, v, static_cast<T>(1.0 / std::sqrt(double(hd))));
  return matmul(merge_heads(attn), w.wo);
}

template <typename T>
Tensor<T> cached_self_attention(const AttentionWeights<T>& w, const Tensor<T>& x, std::size_t heads,
                                std::size_t max_len, AttentionCache<T>& cache) {
  NoGradGuard guard;
  const std::size_t dim = w.wq.shape()[0];
  require_rank3(x, dim, "cached_self_attention");
  const std::size_t batch = x.shape()[0];
  const std::size_t n = x.shape()[1];
  const std::size_t first = cache.length;
  if (first + n > max_len) {
    throw ContractError("sequence length " + std::to_string(first + n) + " exceeds context " +
                        std::to_string(max_len));
  }
  if (cache.k.empty()) {
    cache.k.resize(batch * heads);
    cache.v.resize(batch * heads);
  } else if (cache.k.size() != batch * heads) {
    throw DimensionError("attention cache holds " + std::to_string(cache.k.size()) + " streams, input needs " +
                         std::to_string(batch * heads));
  }
  const std::size_t hd = dim / heads;
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), first);
  auto q = split_heads(matmul(x, w.wq), heads);
  auto k = split_heads(matmul(x, w.wk), heads);
  auto v = split_heads(matmul(x, w.wv), heads);
  auto [qr, kr] = xpos_apply(q, k, positions);
  const T scale = static_cast<T>(1.0 / std::sqrt(double(hd)));
  std::vector<T> out(batch * heads * n * hd);
  for (std::size_t s = 0; s < batch * heads; ++s) {
    const T* kn = kr.values().data() + s * n * hd;
    const T* vn = v.values().data() + s * n * hd;
    cache.k[s].insert(cache.k[s].end(), kn, kn + n * hd);
    cache.v[s].insert(cache.v[s].end(), vn, vn + n * hd);
    kernels::causal_attention_rows<T>(qr.values().data() + s * n * hd, cache.k[s].data(), cache.v[s].data(), first,
                                      n, hd, scale, out.data() + s * n * hd, nullptr);
  }
  cache.length = first + n;
  auto attn = Tensor<T>::from_values({batch, heads, n, hd}, std::move(out));
  return matmul(merge_heads(attn), w.wo);
}

template <typename T>
Tensor<T> cross_attention(const AttentionWeights<T>& w, const Tensor<T>& x, const Tensor<T>& kv,
                          std::size_t heads) {
  const std::size_t dim = w.wq.shape()[0];
  require_rank3(x, dim, "cross_attention query");
  require_rank3(kv, dim, "cross_attention memory");
  if (x.shape()[0] != kv.shape()[0]) {
    throw DimensionError("cross_attention batch mismatch: " + shape_str(x.shape()) + " vs " +
                         shape_str(kv.shape()));
  }
  const std::size_t hd = dim / heads;
  auto q = split_heads(matmul(x, w.wq), heads);
  auto k = split_heads(matmul(kv, w.wk), heads);
  auto v = split_heads(matmul(kv, w.wv), heads);
  auto scores = scale(matmul(q, k, true), static_cast<T>(1.0 / std::sqrt(double(hd))));
  auto attn = matmul(softmax_rows(scores), v);
  return matmul(merge_heads(attn), w.wo);
}

template <typename T>
Tensor<T> swiglu_mlp(const SwiGluWeights<T>& w, const Tensor<T>& x) {
  return matmul(mul(silu(matmul(x, w.w_gate)), matmul(x, w.w_up)), w.w_down);
}

template <typename T>
AttentionWeights<T> init_attention(std::size_t dim, double out_std, std::mt19937_64& rng) {
  AttentionWeights<T> w;
  w.wq = init_linear<T>(dim, dim, 0.02, rng);
  w.wk = init_linear<T>(dim, dim, 0.02, rng);
  w.wv = init_linear<T>(dim, dim, 0.02, rng);
  w.wo = init_linear<T>(dim, dim, out_std, rng);
  return w;
}

template <typename T>
SwiGluWeights<T> init_swiglu(std::size_t dim, std::size_t mlp_dim, double out_std, std::mt19937_64& rng) {
  SwiGluWeights<T> w;
  w.w_gate = init_linear<T>(dim, mlp_dim, 0.02, rng);
  w.w_up = init_linear<T>(dim, mlp_dim, 0.02, rng);
  w.w_down = init_linear<T>(mlp_dim, dim, out_std, rng);
  return w;
}

#define FTP_INSTANTIATE(T)                                                                                 \
  template Tensor<T> maybe_dropout(const Tensor<T>&, const DropoutContext&);                             \
  template std::pair<Tensor<T>, Tensor<T>> xpos_apply(const Tensor<T>&, const Tensor<T>&,                \
                                                      std::span<const std::size_t>);                     \
  template Tensor<T> causal_self_attention(const AttentionWeights<T>&, const Tensor<T>&, std::size_t,    \
                                           std::size_t);                                                 \
  template Tensor<T> cached_self_attention(const AttentionWeights<T>&, const Tensor<T>&, std::size_t,    \
                                           std::size_t, AttentionCache<T>&);                             \
  template Tensor<T> cross_attention(const AttentionWeights<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                     std::size_t);                                                       \
  template Tensor<T> swiglu_mlp(const SwiGluWeights<T>&, const Tensor<T>&);                              \
  template AttentionWeights<T> init_attention<T>(std::size_t, double, std::mt19937_64&);                 \
  template SwiGluWeights<T> init_swiglu<T>(std::size_t, std::size_t, double, std::mt19937_64&);

FTP_INSTANTIATE(float)
FTP_INSTANTIATE(double)
#undef FTP_INSTANTIATE

}  // namespace ftp::model

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ftp/numerics/ops.hpp"
#include "op_support.hpp"

namespace ftp::numerics {

using detail::input_grad;
using detail::input_value;
using detail::leading_rows;
using detail::Node;
using detail::require_rank;
using detail::softmax_row;

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / (T{1} + std::exp(-xv[i]));
  return Tensor<T>::make_result(x.shape(), std::move(out), "silu", {x}, [](Node<T>& self) {
    if (T* gx = input_grad(self, 0)) {
      const auto& v = input_value(self, 0);
      for (std::size_t i = 0; i < v.size(); ++i) {
        const T s = T{1} / (T{1} + std::exp(-v[i]));
        gx[i] += self.grad[i] * s * (T{1} + v[i] * (T{1} - s));
      }
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const auto& xv = x.values();
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = T{0.5} * xv[i] * (T{1} + std::erf(xv[i] * inv_sqrt2));
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), "gelu", {x}, [inv_sqrt2](Node<T>& self) {
    if (T* gx = input_grad(self, 0)) {
      const auto& v = input_value(self, 0);
      const T inv_sqrt_2pi = static_cast<T>(1.0 / std::sqrt(2.0 * std::numbers::pi));
      for (std::size_t i = 0; i < v.size(); ++i) {
        const T cdf = T{0.5} * (T{1} + std::erf(v[i] * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * v[i] * v[i]);
        gx[i] += self.grad[i] * (cdf + v[i] * pdf);
      }
    }
  });
}

namespace {

template <typename T>
void softmax_backward(Node<T>& self, std::size_t rows, std::size_t cols) {
  T* gx = input_grad(self, 0);
  if (!gx) return;
  const T* y = self.value.data();
  const T* g = self.grad.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* yr = y + r * cols;
    const T* gr = g + r * cols;
    T dot{0};
    for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * gr[j];
    T* out = gx + r * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += yr[j] * (gr[j] - dot);
  }
}

}  // namespace

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_rank(x.shape(), 1, "softmax_rows");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = leading_rows(x.shape());
  std::vector<T> out(x.numel());
  const T* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) softmax_row(xv + r * cols, out.data() + r * cols, cols, cols);
  return Tensor<T>::make_result(x.shape(), std::move(out), "softmax_rows", {x},
                                [rows, cols](Node<T>& self) { softmax_backward(self, rows, cols); });
}

template <typename T>
Tensor<T> causal_softmax_rows(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "causal_softmax_rows");
  const Shape& s = x.shape();
  const std::size_t tk = s.back();
  const std::size_t tq = s[s.size() - 2];
  if (tq > tk) {
    throw DimensionError("causal_softmax_rows needs Tq <= Tk, got shape " + shape_str(s));
  }
  const std::size_t offset = tk - tq;
  const std::size_t rows = leading_rows(s);
  std::vector<T> out(x.numel());
  const T* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t i = r % tq;
    softmax_row(xv + r * tk, out.data() + r * tk, i + offset + 1, tk);
  }
  return Tensor<T>::make_result(s, std::move(out), "causal_softmax_rows", {x},
                                [rows, tk](Node<T>& self) { softmax_backward(self, rows, tk); });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& weight) {
  require_rank(x.shape(), 1, "layer_norm");
  const std::size_t d = x.shape().back();
  if (weight.shape() != Shape{d}) {
    throw DimensionError("layer_norm weight " + shape_str(weight.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = leading_rows(x.shape());
  const T* xv = x.values().data();
  const T* w = weight.values().data();
  std::vector<T> out(x.numel());
  // normalized rows and inverse std are kept for the backward pass
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    T mu{0};
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T is = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * w[j];
    }
  }
  const bool keep = GradMode::enabled() && (x.requires_grad() || weight.requires_grad());
  if (!keep) {
    xhat.clear();
    inv_std.clear();
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), "layer_norm", {x, weight},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        const T* g = self.grad.data();
        const T* w = input_value(self, 1).data();
        if (T* gw = input_grad(self, 1)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) gw[j] += g[r * d + j] * xhat[r * d + j];
          }
        }
        if (T* gx = input_grad(self, 0)) {
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_g{0}, mean_gx{0};
            for (std::size_t j = 0; j < d; ++j) {
              const T gh = g[r * d + j] * w[j];
              mean_g += gh;
              mean_gx += gh * xhat[r * d + j];
            }
            mean_g /= static_cast<T>(d);
            mean_gx /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T gh = g[r * d + j] * w[j];
              gx[r * d + j] += inv_std[r] * (gh - mean_g - xhat[r * d + j] * mean_gx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids, const Shape& ids_shape) {
  if (table.rank() != 2) throw DimensionError("embedding table must be [V, d], got " + shape_str(table.shape()));
  if (shape_numel(ids_shape) != ids.size()) {
    throw DimensionError("embedding: " + std::to_string(ids.size()) + " ids for shape " + shape_str(ids_shape));
  }
  const std::size_t vocab = table.shape()[0];
  const std::size_t d = table.shape()[1];
  std::vector<TokenId> idx(ids.begin(), ids.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw IndexError("token id " + std::to_string(idx[i]) + " at position " + std::to_string(i) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
  }
  Shape out_shape = ids_shape;
  out_shape.push_back(d);
  std::vector<T> out(idx.size() * d);
  const T* tv = table.values().data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(tv + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), "embedding", {table},
                                [d, idx = std::move(idx)](Node<T>& self) {
                                  if (T* gt = input_grad(self, 0)) {
                                    const T* g = self.grad.data();
                                    for (std::size_t i = 0; i < idx.size(); ++i) {
                                      T* row = gt + static_cast<std::size_t>(idx[i]) * d;
                                      for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> cross_entropy_rows(const Tensor<T>& logits, std::span<const TokenId> targets) {
  require_rank(logits.shape(), 1, "cross_entropy_rows");
  const std::size_t vocab = logits.shape().back();
  const std::size_t rows = leading_rows(logits.shape());
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] == kIgnoreIndex) continue;
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= vocab) {
      throw IndexError("target " + std::to_string(tgt[r]) + " in row " + std::to_string(r) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
  }
  const T* x = logits.values().data();
  std::vector<T> out(rows, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] == kIgnoreIndex) continue;
    const T* row = x + r * vocab;
    T mx = *std::max_element(row, row + vocab);
    T total{0};
    for (std::size_t j = 0; j < vocab; ++j) total += std::exp(row[j] - mx);
    out[r] = std::log(total) + mx - row[tgt[r]];
  }
  Shape out_shape(logits.shape().begin(), logits.shape().end() - 1);
  return Tensor<T>::make_result(
      std::move(out_shape), std::move(out), "cross_entropy_rows", {logits},
      [rows, vocab, tgt = std::move(tgt)](Node<T>& self) {
        T* gx = input_grad(self, 0);
        if (!gx) return;
        const T* x = input_value(self, 0).data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T g = self.grad[r];
          if (tgt[r] == kIgnoreIndex || g == T{0}) continue;
          const T* row = x + r * vocab;
          T mx = *std::max_element(row, row + vocab);
          T total{0};
          for (std::size_t j = 0; j < vocab; ++j) total += std::exp(row[j] - mx);
          const T inv = T{1} / total;
          T* out = gx + r * vocab;
          for (std::size_t j = 0; j < vocab; ++j) out[j] += g * std::exp(row[j] - mx) * inv;
          out[tgt[r]] -= g;
        }
      });
}

template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, std::span<const TokenId> targets) {
  auto rows = cross_entropy_rows(logits, targets);
  std::size_t active = 0;
  for (TokenId t : targets) active += t != kIgnoreIndex;
  std::vector<T> w(targets.size(), T{0});
  if (active > 0) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] != kIgnoreIndex) w[i] = T{1} / static_cast<T>(active);
    }
  }
  return weighted_sum(rows, std::span<const T>(w));
}

double xpos_zeta(std::size_t pair, std::size_t head_dim) {
  const double d = static_cast<double>(head_dim);
  return (2.0 * static_cast<double>(pair) + 0.4 * d) / (1.4 * d);
}

template <typename T>
Tensor<T> xpos_rotate(const Tensor<T>& x, std::span<const std::size_t> positions, int direction,
                      const XposParams& params) {
  require_rank(x.shape(), 2, "xpos_rotate");
  const Shape& s = x.shape();
  const std::size_t hd = s.back();
  const std::size_t t = s[s.size() - 2];
  if (hd % 2 != 0) throw ConfigError("xpos_rotate needs an even head dimension, got " + std::to_string(hd));
  if (positions.size() != t) {
    throw DimensionError("xpos_rotate: " + std::to_string(positions.size()) + " positions for shape " +
                         shape_str(s));
  }
  if (direction != 1 && direction != -1) throw ContractError("xpos direction must be +1 or -1");
  const std::size_t pairs = hd / 2;
  // per (position, pair): cos * scale, sin * scale
  std::vector<T> cs(t * pairs), sn(t * pairs);
  for (std::size_t p = 0; p < t; ++p) {
    const double m = static_cast<double>(positions[p]);
    for (std::size_t i = 0; i < pairs; ++i) {
      const double inv_freq = std::pow(params.theta, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
      const double angle = m * inv_freq;
      const double sc = std::pow(xpos_zeta(i, hd), direction * m / params.scale_base);
      cs[p * pairs + i] = static_cast<T>(std::cos(angle) * sc);
      sn[p * pairs + i] = static_cast<T>(std::sin(angle) * sc);
    }
  }
  const std::size_t blocks = x.numel() / (t * hd);
  const T* xv = x.values().data();
  std::vector<T> out(x.numel());
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t p = 0; p < t; ++p) {
      const T* in = xv + (b * t + p) * hd;
      T* o = out.data() + (b * t + p) * hd;
      for (std::size_t i = 0; i < pairs; ++i) {
        const T c = cs[p * pairs + i], sv = sn[p * pairs + i];
        o[2 * i] = in[2 * i] * c - in[2 * i + 1] * sv;
        o[2 * i + 1] = in[2 * i + 1] * c + in[2 * i] * sv;
      }
    }
  }
  return Tensor<T>::make_result(s, std::move(out), "xpos_rotate", {x},
                                [blocks, t, hd, pairs, cs = std::move(cs), sn = std::move(sn)](Node<T>& self) {
                                  T* gx = input_grad(self, 0);
                                  if (!gx) return;
                                  const T* g = self.grad.data();
                                  for (std::size_t b = 0; b < blocks; ++b) {
                                    for (std::size_t p = 0; p < t; ++p) {
                                      const T* gi = g + (b * t + p) * hd;
                                      T* go = gx + (b * t + p) * hd;
                                      for (std::size_t i = 0; i < pairs; ++i) {
                                        const T c = cs[p * pairs + i], sv = sn[p * pairs + i];
                                        go[2 * i] += gi[2 * i] * c + gi[2 * i + 1] * sv;
                                        go[2 * i + 1] += gi[2 * i + 1] * c - gi[2 * i] * sv;
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T factor = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? factor : T{0};
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return Tensor<T>::make_result(x.shape(), std::move(out), "dropout", {x}, [mask = std::move(mask)](Node<T>& self) {
    if (T* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += self.grad[i] * mask[i];
    }
  });
}

template <typename T>
Tensor<T> normal(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> v(shape_numel(shape));
  for (auto& e : v) e = static_cast<T>(dist(rng));
  return Tensor<T>::from_values(std::move(shape), std::move(v), requires_grad);
}

#define FTP_INSTANTIATE(T)                                                                          \
  template Tensor<T> silu(const Tensor<T>&);                                                        \
  template Tensor<T> gelu(const Tensor<T>&);                                                        \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                                \
  template Tensor<T> causal_softmax_rows(const Tensor<T>&);                                         \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const TokenId>, const Shape&);           \
  template Tensor<T> cross_entropy_rows(const Tensor<T>&, std::span<const TokenId>);                \
  template Tensor<T> cross_entropy_logits(const Tensor<T>&, std::span<const TokenId>);              \
  template Tensor<T> xpos_rotate(const Tensor<T>&, std::span<const std::size_t>, int, const XposParams&); \
  template Tensor<T> dropout(const Tensor<T>&, double, std::mt19937_64&);                           \
  template Tensor<T> normal<T>(Shape, double, std::mt19937_64&, bool);

FTP_INSTANTIATE(float)
FTP_INSTANTIATE(double)
#undef FTP_INSTANTIATE

}  // namespace ftp::numerics

#pragma once

// Straight-line scalar re-implementation of the encoder, decoder and LM head
// in double precision. It shares nothing with the library beyond parameter
// values looked up by name, and serves as a second-implementation oracle.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ftp/model/models.hpp"

namespace ftp::testing::reference {

using Matrix = std::vector<std::vector<double>>;  // rows of features

struct Params {
  std::map<std::string, std::vector<double>> values;
  model::ModelConfig config;

  const std::vector<double>& at(const std::string& name) const { return values.at(name); }
};

template <typename T>
Params collect(const std::vector<model::NamedParameter<T>>& params, const model::ModelConfig& config) {
  Params p;
  p.config = config;
  for (const auto& np : params) p.values[np.name] = std::vector<double>(np.tensor.values().begin(), np.tensor.values().end());
  return p;
}

// x [rows, in] times W stored [in, out].
inline Matrix linear(const Matrix& x, const std::vector<double>& w, std::size_t out) {
  Matrix y(x.size(), std::vector<double>(out, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t i = 0; i < x[r].size(); ++i) {
      for (std::size_t o = 0; o < out; ++o) y[r][o] += x[r][i] * w[i * out + o];
    }
  }
  return y;
}

inline Matrix norm(const Matrix& x, const std::vector<double>& w) {
  Matrix y = x;
  for (auto& row : y) {
    double mu = 0, var = 0;
    for (double v : row) mu += v;
    mu /= double(row.size());
    for (double v : row) var += (v - mu) * (v - mu);
    var /= double(row.size());
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mu) * inv * w[j];
  }
  return y;
}

inline void add_into(Matrix& x, const Matrix& y) {
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t j = 0; j < x[r].size(); ++j) x[r][j] += y[r][j];
}

// Rotates one head vector in place at position m.
inline void rotate(double* v, std::size_t hd, double m, int direction) {
  for (std::size_t i = 0; i < hd / 2; ++i) {
    const double angle = m * std::pow(10000.0, -2.0 * double(i) / double(hd));
    const double zeta = (2.0 * double(i) + 0.4 * double(hd)) / (1.4 * double(hd));
    const double s = std::pow(zeta, direction * m / 512.0);
    const double a = v[2 * i], b = v[2 * i + 1];
    v[2 * i] = (a * std::cos(angle) - b * std::sin(angle)) * s;
    v[2 * i + 1] = (a * std::sin(angle) + b * std::cos(angle)) * s;
  }
}

// Multi-head attention of queries from x over keys/values from mem.
inline Matrix attention(const Matrix& x, const Matrix& mem, const Params& p, const std::string& prefix,
                        bool causal_rotary) {
  const std::size_t d = p.config.dim, heads = p.config.heads, hd = d / heads;
  Matrix q = linear(x, p.at(prefix + ".wq"), d);
  Matrix k = linear(mem, p.at(prefix + ".wk"), d);
  Matrix v = linear(mem, p.at(prefix + ".wv"), d);
  if (causal_rotary) {
    for (std::size_t t = 0; t < q.size(); ++t)
      for (std::size_t h = 0; h < heads; ++h) rotate(&q[t][h * hd], hd, double(t), +1);
    for (std::size_t t = 0; t < k.size(); ++t)
      for (std::size_t h = 0; h < heads; ++h) rotate(&k[t][h * hd], hd, double(t), -1);
  }
  Matrix out(x.size(), std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      const std::size_t limit = causal_rotary ? i + 1 : k.size();
      std::vector<double> s(limit);
      double mx = -1e300;
      for (std::size_t j = 0; j < limit; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < hd; ++c) dot += q[i][h * hd + c] * k[j][h * hd + c];
        s[j] = dot / std::sqrt(double(hd));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < limit; ++j)
        for (std::size_t c = 0; c < hd; ++c) out[i][h * hd + c] += s[j] / z * v[j][h * hd + c];
    }
  }
  return linear(out, p.at(prefix + ".wo"), d);
}

inline Matrix swiglu(const Matrix& x, const Params& p, const std::string& prefix) {
  const std::size_t m = p.config.mlp_dim;
  Matrix g = linear(x, p.at(prefix + ".w_gate"), m);
  Matrix u = linear(x, p.at(prefix + ".w_up"), m);
  for (std::size_t r = 0; r < g.size(); ++r)
    for (std::size_t j = 0; j < m; ++j) g[r][j] = g[r][j] / (1.0 + std::exp(-g[r][j])) * u[r][j];
  return linear(g, p.at(prefix + ".w_down"), p.config.dim);
}

inline Matrix embed(const std::vector<int>& ids, const Params& p) {
  const std::size_t d = p.config.dim;
  const auto& table = p.at("embed.table");
  Matrix x;
  for (int id : ids) x.emplace_back(table.begin() + std::ptrdiff_t(id * d), table.begin() + std::ptrdiff_t((id + 1) * d));
  return x;
}

// One sequence -> post-norm top-layer embeddings [T, dim].
inline Matrix encoder(const std::vector<int>& ids, const Params& p) {
  Matrix x = embed(ids, p);
  for (std::size_t l = 0; l < p.config.enc_layers; ++l) {
    const std::string b = "enc." + std::to_string(l);
    auto h = norm(x, p.at(b + ".ln1"));
    add_into(x, attention(h, h, p, b + ".attn", true));
    add_into(x, swiglu(norm(x, p.at(b + ".ln2")), p, b + ".mlp"));
  }
  return norm(x, p.at("enc.norm"));
}

inline Matrix lm_head(const Matrix& h, const Params& p) {
  const std::size_t d = p.config.dim, vocab = p.config.vocab_size;
  const auto& table = p.at("embed.table");
  Matrix out(h.size(), std::vector<double>(vocab, 0.0));
  for (std::size_t r = 0; r < h.size(); ++r)
    for (std::size_t v = 0; v < vocab; ++v)
      for (std::size_t j = 0; j < d; ++j) out[r][v] += h[r][j] * table[v * d + j];
  return out;
}

// Decoder logits [nd, vocab] for one encoder embedding e and decoder ids.
inline Matrix decoder(const std::vector<double>& e, const std::vector<int>& ids, const Params& p) {
  const std::size_t d = p.config.dim, seq = p.config.pseudo_seq;
  Matrix flat = linear(Matrix{e}, p.at("dec.proj"), seq * d);
  Matrix pseudo(seq);
  for (std::size_t s = 0; s < seq; ++s) pseudo[s].assign(flat[0].begin() + std::ptrdiff_t(s * d), flat[0].begin() + std::ptrdiff_t((s + 1) * d));
  Matrix x = embed(ids, p);
  const auto& pos = p.at("dec.pos");
  for (std::size_t t = 0; t < x.size(); ++t)
    for (std::size_t j = 0; j < d; ++j) x[t][j] += pos[t * d + j];
  for (std::size_t l = 0; l < p.config.dec_layers; ++l) {
    const std::string b = "dec." + std::to_string(l);
    auto h = norm(x, p.at(b + ".ln1"));
    add_into(x, attention(h, h, p, b + ".self", true));
    add_into(x, attention(norm(x, p.at(b + ".ln2")), pseudo, p, b + ".cross", false));
    add_into(x, swiglu(norm(x, p.at(b + ".ln3")), p, b + ".mlp"));
  }
  return lm_head(norm(x, p.at("dec.norm")), p);
}

}  // namespace ftp::testing::reference

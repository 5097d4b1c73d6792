#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ftp/core/errors.hpp"
#include "ftp/model/models.hpp"
#include "support/reference_model.hpp"

using namespace ftp::model;
using ftp::numerics::NoGradGuard;
using ftp::numerics::Shape;
namespace ref = ftp::testing::reference;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 11;
  c.dim = 16;
  c.heads = 2;
  c.mlp_dim = 48;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.enc_ctx = 12;
  c.n_future = 4;
  c.pseudo_seq = 3;
  return c;
}

std::vector<TokenId> random_ids(std::size_t n, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, int(vocab) - 1);
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = u(rng);
  return ids;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<T> v(ftp::numerics::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(n(rng));
  return Tensor<T>::from_values(std::move(shape), std::move(v));
}

ref::Matrix rows_of(const Tensor<double>& t, std::size_t first, std::size_t count, std::size_t width) {
  ref::Matrix m;
  for (std::size_t r = first; r < first + count; ++r) {
    m.emplace_back(t.values().begin() + std::ptrdiff_t(r * width), t.values().begin() + std::ptrdiff_t((r + 1) * width));
  }
  return m;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

}  // namespace

TEST_CASE("parameter counts reproduce the reference table") {
  const auto p = count_parameters(reference_config());
  CHECK(p.encoder_layers == 92030976u);
  CHECK(p.encoder_final_norm == 768u);
  CHECK(p.projection == 7077888u);
  CHECK(p.decoder_layers == 30087936u);
  CHECK(p.decoder_positions == 8u * 768u);
  CHECK(std::abs(double(p.encoder()) - 92.03e6) / 92.03e6 <= 5e-4);
  CHECK(std::abs(double(p.projection) - 7.08e6) / 7.08e6 <= 5e-4);
  CHECK(std::abs(double(p.decoder()) - 30.09e6) / 30.09e6 <= 5e-4);
  // SwiGLU block weights alone
  CHECK(3u * 768u * 2304u == 5308416u);
}

TEST_CASE("parameter counts match the instantiated models") {
  const auto c = tiny_config();
  FtpModel<float> ftp(c, 1);
  GptModel<float> gpt(c, 1);
  const auto p = count_parameters(c);
  CHECK(parameter_elements(ftp.named_parameters()) == p.total());
  CHECK(parameter_elements(gpt.named_parameters()) == p.encoder() + p.embeddings);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ftp::ConfigError);
  c = tiny_config();
  c.dim = 18;
  c.heads = 2;  // head_dim 9 is odd
  CHECK_THROWS_AS(c.validate(), ftp::ConfigError);
  c = tiny_config();
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), ftp::ConfigError);
  c = tiny_config();
  c.n_future = 0;
  CHECK_THROWS_AS(c.validate(), ftp::ConfigError);
  CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("xpos_apply at position zero is the identity") {
  std::mt19937_64 rng(1);
  auto q = random_tensor<double>({1, 2, 1, 8}, rng);
  auto k = random_tensor<double>({1, 2, 1, 8}, rng);
  std::vector<std::size_t> pos{0};
  auto [qr, kr] = xpos_apply(q, k, pos);
  CHECK(std::equal(qr.values().begin(), qr.values().end(), q.values().begin()));
  CHECK(std::equal(kr.values().begin(), kr.values().end(), k.values().begin()));
}

TEST_CASE("self-attention hand-worked two-position example") {
  AttentionWeights<double> w;
  auto eye = [] { return Tensor<double>::from_values({2, 2}, {1, 0, 0, 1}); };
  w.wq = eye();
  w.wk = eye();
  w.wv = eye();
  w.wo = eye();
  auto x = Tensor<double>::from_values({1, 2, 2}, {1, 0, 0, 1});
  auto y = causal_self_attention(w, x, 1, 8);
  // position 0 only sees itself; position 1 mixes x0 and x1 with scores
  // q1.k0 = -sin(1) zeta^(1/512) and q1.k1 = 1, both over sqrt(2)
  const double zeta = 0.8 / 2.8;
  const double s0 = -std::sin(1.0) * std::pow(zeta, 1.0 / 512.0) / std::sqrt(2.0);
  const double s1 = 1.0 / std::sqrt(2.0);
  const double p0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
  CHECK(std::abs(y.values()[0] - 1.0) <= 1e-12);
  CHECK(std::abs(y.values()[1]) <= 1e-12);
  CHECK(std::abs(y.values()[2] - p0) <= 1e-6);
  CHECK(std::abs(y.values()[3] - (1 - p0)) <= 1e-6);
}

TEST_CASE("self-attention with one position is the value path") {
  std::mt19937_64 rng(2);
  auto w = init_attention<double>(8, 0.3, rng);
  auto x = random_tensor<double>({3, 1, 8}, rng);
  auto y = causal_self_attention(w, x, 2, 4);
  auto expected = matmul(matmul(x, w.wv), w.wo);
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y.values()[i] - expected.values()[i]) <= 1e-12);
  CHECK_THROWS_AS(causal_self_attention(w, random_tensor<double>({1, 5, 8}, rng), 2, 4), ftp::ContractError);
}

TEST_CASE("self-attention is causal bit-exactly") {
  std::mt19937_64 rng(3);
  auto w = init_attention<float>(16, 0.2, rng);
  auto x = random_tensor<float>({2, 7, 16}, rng);
  auto y = causal_self_attention(w, x, 4, 7);
  for (std::size_t t = 0; t + 1 < 7; ++t) {
    auto xv = std::vector<float>(x.values().begin(), x.values().end());
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t j = 0; j < 16; ++j) xv[(b * 7 + t + 1) * 16 + j] += 0.5f;
    auto y2 = causal_self_attention(w, Tensor<float>::from_values({2, 7, 16}, xv), 4, 7);
    for (std::size_t b = 0; b < 2; ++b) {
      const std::size_t n = (t + 1) * 16;
      CHECK(same_bits(y.values().subspan(b * 7 * 16, n), y2.values().subspan(b * 7 * 16, n)));
    }
  }
}

TEST_CASE("cross attention") {
  std::mt19937_64 rng(4);
  auto w = init_attention<double>(8, 0.3, rng);

  SUBCASE("single slot passes the value path") {
    auto x = random_tensor<double>({2, 3, 8}, rng);
    auto kv = random_tensor<double>({2, 1, 8}, rng);
    auto y = cross_attention(w, x, kv, 2);
    auto v = matmul(matmul(kv, w.wv), w.wo);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t j = 0; j < 8; ++j)
          CHECK(std::abs(y.values()[(b * 3 + t) * 8 + j] - v.values()[b * 8 + j]) <= 1e-12);
  }
  SUBCASE("slot permutation invariance") {
    auto x = random_tensor<double>({1, 2, 8}, rng);
    auto kv = random_tensor<double>({1, 4, 8}, rng);
    std::vector<double> perm(kv.numel());
    const std::size_t order[] = {2, 0, 3, 1};
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t j = 0; j < 8; ++j) perm[s * 8 + j] = kv.values()[order[s] * 8 + j];
    auto y1 = cross_attention(w, x, kv, 2);
    auto y2 = cross_attention(w, x, Tensor<double>::from_values({1, 4, 8}, perm), 2);
    for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(std::abs(y1.values()[i] - y2.values()[i]) <= 1e-12);
  }
  SUBCASE("matches the explicit softmax formula") {
    ModelConfig c;
    c.dim = 8;
    c.heads = 2;
    ref::Params p;
    p.config = c;
    auto put = [&](const char* n, const Tensor<double>& t) {
      p.values[std::string("x.") + n] = std::vector<double>(t.values().begin(), t.values().end());
    };
    put("wq", w.wq);
    put("wk", w.wk);
    put("wv", w.wv);
    put("wo", w.wo);
    auto x = random_tensor<double>({1, 3, 8}, rng);
    auto kv = random_tensor<double>({1, 5, 8}, rng);
    auto y = cross_attention(w, x, kv, 2);
    auto expected = ref::attention(rows_of(x, 0, 3, 8), rows_of(kv, 0, 5, 8), p, "x", false);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t j = 0; j < 8; ++j) CHECK(rel_diff(y.values()[t * 8 + j], expected[t][j]) <= 1e-6);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(cross_attention(w, random_tensor<double>({2, 3, 8}, rng), random_tensor<double>({1, 3, 8}, rng), 2),
                    ftp::DimensionError);
    CHECK_THROWS_AS(cross_attention(w, random_tensor<double>({2, 3, 8}, rng), random_tensor<double>({2, 3, 6}, rng), 2),
                    ftp::DimensionError);
  }
}

TEST_CASE("swiglu mlp") {
  std::mt19937_64 rng(5);
  auto w = init_swiglu<double>(8, 24, 0.3, rng);
  auto zero = swiglu_mlp(w, Tensor<double>::zeros({2, 8}));
  for (double v : zero.values()) CHECK(v == 0.0);

  ModelConfig c;
  c.dim = 8;
  c.mlp_dim = 24;
  ref::Params p;
  p.config = c;
  p.values["m.w_gate"] = {w.w_gate.values().begin(), w.w_gate.values().end()};
  p.values["m.w_up"] = {w.w_up.values().begin(), w.w_up.values().end()};
  p.values["m.w_down"] = {w.w_down.values().begin(), w.w_down.values().end()};
  auto x = random_tensor<double>({3, 8}, rng);
  auto y = swiglu_mlp(w, x);
  auto expected = ref::swiglu(rows_of(x, 0, 3, 8), p, "m");
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 8; ++j) CHECK(rel_diff(y.values()[r * 8 + j], expected[r][j]) <= 1e-6);
  CHECK(w.w_gate.numel() + w.w_up.numel() + w.w_down.numel() == 3u * 8u * 24u);
}

TEST_CASE("encoder and GPT logits match the straight-line oracle") {
  const auto c = tiny_config();
  GptModel<double> gpt(c, 7);
  std::mt19937_64 rng(8);
  const std::size_t batch = 2, len = 9;
  auto tokens = random_ids(batch * len, c.vocab_size, rng);
  auto emb = gpt.encoder_forward(tokens, batch, len);
  CHECK(emb.shape() == Shape{batch, len, c.dim});
  auto logits = gpt.forward(tokens, batch, len);
  CHECK(logits.shape() == Shape{batch, len, c.vocab_size});
  auto p = ref::collect(gpt.named_parameters(), c);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<int> ids(tokens.begin() + std::ptrdiff_t(b * len), tokens.begin() + std::ptrdiff_t((b + 1) * len));
    auto e = ref::encoder(ids, p);
    auto l = ref::lm_head(e, p);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t j = 0; j < c.dim; ++j) CHECK(rel_diff(emb.values()[(b * len + t) * c.dim + j], e[t][j]) <= 1e-5);
      for (std::size_t v = 0; v < c.vocab_size; ++v)
        CHECK(rel_diff(logits.values()[(b * len + t) * c.vocab_size + v], l[t][v]) <= 1e-5);
    }
  }
}

TEST_CASE("FTP teacher-forced logits match the straight-line oracle") {
  const auto c = tiny_config();
  FtpModel<double> ftp(c, 9);
  std::mt19937_64 rng(10);
  const std::size_t batch = 2, len = 5, n = c.n_future;
  auto tokens = random_ids(batch * len, c.vocab_size, rng);
  auto dec = random_ids(batch * len * n, c.vocab_size, rng);
  for (std::size_t r = 0; r < batch * len; ++r) dec[r * n] = tokens[r];
  auto logits = ftp.forward(tokens, batch, len, dec);
  CHECK(logits.shape() == Shape{batch, len, n, c.vocab_size});
  auto p = ref::collect(ftp.named_parameters(), c);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<int> ids(tokens.begin() + std::ptrdiff_t(b * len), tokens.begin() + std::ptrdiff_t((b + 1) * len));
    auto e = ref::encoder(ids, p);
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t row = b * len + t;
      std::vector<int> d(dec.begin() + std::ptrdiff_t(row * n), dec.begin() + std::ptrdiff_t((row + 1) * n));
      auto expected = ref::decoder(e[t], d, p);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t v = 0; v < c.vocab_size; ++v)
          CHECK(rel_diff(logits.values()[(row * n + k) * c.vocab_size + v], expected[k][v]) <= 1e-5);
    }
  }
}

TEST_CASE("encoder causality and input validation") {
  const auto c = tiny_config();
  GptModel<float> gpt(c, 11);
  std::mt19937_64 rng(12);
  const std::size_t len = 10;
  auto tokens = random_ids(len, c.vocab_size, rng);
  auto base = gpt.encoder_forward(tokens, 1, len);
  for (std::size_t t = 0; t + 1 < len; ++t) {
    auto changed = tokens;
    changed[t + 1] = (changed[t + 1] + 1) % TokenId(c.vocab_size);
    auto out = gpt.encoder_forward(changed, 1, len);
    CHECK(same_bits(base.values().subspan(0, (t + 1) * c.dim), out.values().subspan(0, (t + 1) * c.dim)));
    CHECK_FALSE(same_bits(base.values().subspan((t + 1) * c.dim, c.dim), out.values().subspan((t + 1) * c.dim, c.dim)));
  }
  auto bad = tokens;
  bad[3] = TokenId(c.vocab_size);
  CHECK_THROWS_AS(gpt.encoder_forward(bad, 1, len), ftp::IndexError);
  std::vector<TokenId> too_long(c.enc_ctx + 1, 0);
  CHECK_THROWS_AS(gpt.encoder_forward(too_long, 1, too_long.size()), ftp::ContractError);
}

TEST_CASE("pseudo-sequence projection") {
  const auto c = tiny_config();
  FtpModel<double> ftp(c, 13);
  CHECK(ftp.decoder().projection.numel() == c.dim * c.pseudo_seq * c.dim);
  auto zero = ftp.project_pseudo_sequence(Tensor<double>::zeros({2, c.dim}));
  CHECK(zero.shape() == Shape{2, c.pseudo_seq, c.dim});
  for (double v : zero.values()) CHECK(v == 0.0);
  std::mt19937_64 rng(14);
  auto a = random_tensor<double>({1, c.dim}, rng);
  auto b = random_tensor<double>({1, c.dim}, rng);
  auto sum = ftp.project_pseudo_sequence(add(a, b));
  auto pa = ftp.project_pseudo_sequence(a);
  auto pb = ftp.project_pseudo_sequence(b);
  for (std::size_t i = 0; i < sum.numel(); ++i)
    CHECK(std::abs(sum.values()[i] - pa.values()[i] - pb.values()[i]) <= 1e-6);
}

TEST_CASE("decoder causality, prefix consistency and pseudo dependence") {
  const auto c = tiny_config();
  FtpModel<float> ftp(c, 15);
  std::mt19937_64 rng(16);
  const std::size_t rows = 3, n = c.n_future;
  auto pseudo = random_tensor<float>({rows, c.pseudo_seq, c.dim}, rng);
  auto ids = random_ids(rows * n, c.vocab_size, rng);
  auto full = ftp.decoder_forward(ids, n, pseudo);
  const std::size_t v = c.vocab_size;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    auto changed = ids;
    for (std::size_t r = 0; r < rows; ++r) changed[r * n + j + 1] = (changed[r * n + j + 1] + 3) % TokenId(v);
    auto out = ftp.decoder_forward(changed, n, pseudo);
    for (std::size_t r = 0; r < rows; ++r)
      CHECK(same_bits(full.values().subspan(r * n * v, (j + 1) * v), out.values().subspan(r * n * v, (j + 1) * v)));
  }
  std::vector<TokenId> first(rows);
  for (std::size_t r = 0; r < rows; ++r) first[r] = ids[r * n];
  auto one = ftp.decoder_forward(first, 1, pseudo);
  for (std::size_t r = 0; r < rows; ++r) CHECK(same_bits(one.values().subspan(r * v, v), full.values().subspan(r * n * v, v)));

  auto other = ftp.decoder_forward(ids, n, random_tensor<float>({rows, c.pseudo_seq, c.dim}, rng));
  CHECK_FALSE(same_bits(other.values(), full.values()));

  std::vector<TokenId> too_many(rows * (n + 1), 0);
  CHECK_THROWS_AS(ftp.decoder_forward(too_many, n + 1, pseudo), ftp::ContractError);
}

TEST_CASE("decoder sees the context only through the pseudo-sequence") {
  const auto c = tiny_config();
  FtpModel<float> ftp(c, 17);
  std::mt19937_64 rng(18);
  auto context = random_ids(6, c.vocab_size, rng);
  auto enc = ftp.encoder_forward(context, 1, 6);
  auto pseudo = ftp.project_pseudo_sequence(narrow(reshape(enc, {6, c.dim}), 0, 5, 1)).detach();
  std::vector<TokenId> dec{context.back(), 2, 5};
  auto before = ftp.decoder_forward(dec, 3, pseudo);
  for (auto& t : context) t = (t + 1) % TokenId(c.vocab_size);
  ftp.encoder_forward(context, 1, 6);
  auto after = ftp.decoder_forward(dec, 3, pseudo);
  CHECK(same_bits(before.values(), after.values()));
}

TEST_CASE("ftp_forward agrees with the single-step inference path") {
  const auto c = tiny_config();
  FtpModel<float> ftp(c, 19);
  std::mt19937_64 rng(20);
  const std::size_t batch = 2, len = 8, n = c.n_future, v = c.vocab_size;
  auto tokens = random_ids(batch * len, v, rng);
  auto dec = random_ids(batch * len * n, v, rng);
  for (std::size_t r = 0; r < batch * len; ++r) dec[r * n] = tokens[r];
  auto logits = ftp.forward(tokens, batch, len, dec);
  for (std::size_t b = 0; b < batch; ++b) {
    std::span<const TokenId> ctx(tokens.data() + b * len, len);
    auto enc = ftp.encoder_forward(ctx, 1, len);
    auto last = narrow(reshape(enc, {len, c.dim}), 0, len - 1, 1);
    std::vector<TokenId> seed{ctx.back()};
    auto next = ftp.decoder_forward(seed, 1, ftp.project_pseudo_sequence(last));
    CHECK(same_bits(next.values(), logits.values().subspan(((b * len + len - 1) * n) * v, v)));
  }

  // rows path matches the full path
  std::vector<std::size_t> rows{3, 15, 0};
  std::vector<TokenId> sub;
  for (auto r : rows) sub.insert(sub.end(), dec.begin() + std::ptrdiff_t(r * n), dec.begin() + std::ptrdiff_t(r * n + n));
  auto picked = ftp.forward_rows(tokens, batch, len, rows, sub, n);
  for (std::size_t i = 0; i < rows.size(); ++i)
    CHECK(same_bits(picked.values().subspan(i * n * v, n * v), logits.values().subspan(rows[i] * n * v, n * v)));

  auto changed = tokens;
  changed[4] = (changed[4] + 1) % TokenId(v);
  auto dec2 = dec;
  dec2[4 * n] = changed[4];
  auto moved = ftp.forward(changed, batch, len, dec2);
  CHECK(same_bits(moved.values().subspan(0, 4 * n * v), logits.values().subspan(0, 4 * n * v)));
  CHECK_FALSE(same_bits(moved.values().subspan(4 * n * v, n * v), logits.values().subspan(4 * n * v, n * v)));
  CHECK(same_bits(moved.values().subspan(len * n * v), logits.values().subspan(len * n * v)));

  dec2[4 * n] = tokens[4];
  CHECK_THROWS_AS(ftp.forward(changed, batch, len, dec2), ftp::ContractError);
}

TEST_CASE("token table is shared by encoder, decoder and LM head") {
  const auto c = tiny_config();
  FtpModel<float> ftp(c, 21);
  auto params = ftp.named_parameters();
  CHECK(params[0].name == "embed.table");
  CHECK(params[0].tensor.storage_id() == ftp.table().storage_id());
  std::size_t table_like = 0;
  for (const auto& p : params) table_like += p.tensor.shape() == Shape{c.vocab_size, c.dim};
  CHECK(table_like == 1);

  std::vector<TokenId> ctx{1, 2, 3};
  std::vector<TokenId> dec{3, 4};
  auto enc = ftp.encoder_forward(ctx, 1, 3);
  auto pseudo = ftp.project_pseudo_sequence(narrow(reshape(enc, {3, c.dim}), 0, 2, 1)).detach();
  auto before = ftp.decoder_forward(dec, 2, pseudo);

  Tensor<float> table = ftp.table();
  auto vals = table.mutable_values();
  // token 9 appears nowhere in the inputs: only the LM head column changes
  for (std::size_t j = 0; j < c.dim; ++j) vals[9 * c.dim + j] += 0.25f;
  auto after = ftp.decoder_forward(dec, 2, pseudo);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t v = 0; v < c.vocab_size; ++v) {
      const bool same = after.values()[k * c.vocab_size + v] == before.values()[k * c.vocab_size + v];
      CHECK(same == (v != 9));
    }
  }
  // token 4 is a decoder input: decoder position 1 changes, position 0 does not
  for (std::size_t j = 0; j < c.dim; ++j) vals[4 * c.dim + j] += 0.25f;
  auto after2 = ftp.decoder_forward(dec, 2, pseudo);
  CHECK(after2.values()[0] == after.values()[0]);
  CHECK(after2.values()[c.vocab_size] != after.values()[c.vocab_size]);
  // token 1 is an encoder input
  for (std::size_t j = 0; j < c.dim; ++j) vals[1 * c.dim + j] += 0.25f;
  auto enc2 = ftp.encoder_forward(ctx, 1, 3);
  CHECK(enc2.values()[0] != enc.values()[0]);
}

TEST_CASE("parameters convert between precisions") {
  const auto c = tiny_config();
  FtpModel<float> f(c, 23);
  FtpModel<double> d(c, 99);
  copy_parameter_values(d.named_parameters(), f.named_parameters());
  auto fp = f.named_parameters();
  auto dp = d.named_parameters();
  for (std::size_t i = 0; i < fp.size(); ++i)
    for (std::size_t j = 0; j < fp[i].tensor.numel(); ++j) CHECK(double(fp[i].tensor.values()[j]) == dp[i].tensor.values()[j]);
  GptModel<double> g(c, 1);
  CHECK_THROWS_AS(copy_parameter_values(g.named_parameters(), f.named_parameters()), ftp::ContractError);
}

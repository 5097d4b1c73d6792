#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "ftp/core/errors.hpp"
#include "ftp/numerics/attention.hpp"
#include "ftp/numerics/ops.hpp"
#include "support/gradcheck.hpp"

using namespace ftp::numerics;
using ftp::testing::all_probes;
using ftp::testing::finite_difference_check;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true, double lo = -1.0,
                        double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>::from_values(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
std::vector<T> random_weights(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> w(n);
  for (auto& x : w) x = static_cast<T>(u(rng));
  return w;
}

// Naive triple loop in long double.
std::vector<long double> naive_matmul(std::span<const float> a, std::span<const float> b, std::size_t m,
                                      std::size_t k, std::size_t n) {
  std::vector<long double> c(m * n, 0.0L);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += (long double)a[i * k + p] * b[p * n + j];
  return c;
}

// Projects op output onto fixed random weights and compares the analytic
// gradient of every input element with central differences. Float gradients
// are checked against differences of the same op evaluated in double.
template <typename T, typename Op>
ftp::testing::GradCheckResult check_op(std::vector<Tensor<T>> inputs, Op&& op, std::mt19937_64& rng,
                                       double step) {
  for (auto& t : inputs) t.zero_grad();
  auto out = op(inputs);
  const auto w = random_weights<T>(out.numel(), rng);
  weighted_sum(out, std::span<const T>(w)).backward();
  auto reference = ftp::testing::promote(inputs);
  auto forward = [&]() {
    NoGradGuard ng;
    auto o = op(reference);
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) total += double(w[i]) * o.values()[i];
    return total;
  };
  auto analytic = [&](std::size_t t, std::size_t e) {
    return inputs[t].has_grad() ? double(inputs[t].grad()[e]) : 0.0;
  };
  const bool f32 = std::is_same_v<T, float>;
  return ftp::testing::compare_with_differences<double>(reference, forward, analytic,
                                                        ftp::testing::all_probes(reference), step,
                                                        f32 ? 1e-3 : 1e-6, f32 ? 1e-2 : 1e-8);
}

}  // namespace

TEST_CASE("matmul hand examples") {
  auto id = Tensor<float>::from_values({2, 2}, {1, 0, 0, 1});
  auto b = Tensor<float>::from_values({2, 2}, {3, 4, 5, 6});
  auto c = matmul(id, b);
  CHECK(std::vector<float>(c.values().begin(), c.values().end()) == std::vector<float>{3, 4, 5, 6});

  auto r = Tensor<float>::from_values({1, 2}, {1, 2});
  auto col = Tensor<float>::from_values({2, 1}, {3, 4});
  CHECK(matmul(r, col).item() == doctest::Approx(11.0f));
}

TEST_CASE("matmul matches triple loop oracle") {
  std::mt19937_64 rng(7);
  for (std::size_t m = 1; m <= 8; m += 3) {
    for (std::size_t k = 1; k <= 8; k += 2) {
      for (std::size_t n = 1; n <= 8; n += 3) {
        auto a = random_tensor<float>({m, k}, rng, false);
        auto b = random_tensor<float>({k, n}, rng, false);
        auto c = matmul(a, b);
        auto ref = naive_matmul(a.values(), b.values(), m, k, n);
        for (std::size_t i = 0; i < ref.size(); ++i) {
          const double scale = std::max(1.0L, std::abs(ref[i]));
          CHECK(std::abs(c.values()[i] - ref[i]) / scale < 1e-6);
        }
      }
    }
  }
  auto a = random_tensor<float>({4, 5}, rng, false);
  auto b = random_tensor<float>({5, 3}, rng, false);
  auto c = matmul(a, b);
  auto ref = naive_matmul(a.values(), b.values(), 4, 5, 3);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(std::abs(c.values()[i] - ref[i]) <= 1e-6 * std::max(1.0L, std::abs(ref[i])));
  }
}

TEST_CASE("matmul batch broadcast and transpose_b") {
  std::mt19937_64 rng(3);
  auto a = random_tensor<float>({2, 3, 4, 5}, rng, false);
  auto b = random_tensor<float>({3, 6, 5}, rng, false);  // used transposed: [3, 5, 6]
  auto c = matmul(a, b, true);
  REQUIRE(c.shape() == Shape{2, 3, 4, 6});
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t h = 0; h < 3; ++h) {
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
          long double ref = 0;
          for (std::size_t p = 0; p < 5; ++p) {
            ref += (long double)a.values()[((o * 3 + h) * 4 + i) * 5 + p] * b.values()[(h * 6 + j) * 5 + p];
          }
          CHECK(std::abs(c.values()[((o * 3 + h) * 4 + i) * 6 + j] - ref) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  auto a = Tensor<float>::zeros({2, 3});
  auto b = Tensor<float>::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const ftp::DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 2]") != std::string::npos);
  }
}

TEST_CASE("matmul rows are independent of the number of rows") {
  std::mt19937_64 rng(11);
  auto a = random_tensor<float>({37, 29}, rng, false);
  auto w = random_tensor<float>({29, 45}, rng, false);
  auto full = matmul(a, w);
  for (std::size_t r : {0u, 5u, 36u}) {
    auto one = matmul(narrow(a, 0, r, 1), w);
    for (std::size_t j = 0; j < 45; ++j) CHECK(one.values()[j] == full.values()[r * 45 + j]);
  }
}

TEST_CASE("softmax rows") {
  auto u = softmax_rows(Tensor<double>::from_values({3}, {0, 0, 0}));
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0));

  auto big = softmax_rows(Tensor<float>::from_values({2}, {1000.0f, 0.0f}));
  CHECK(big.values()[0] == doctest::Approx(1.0f));
  CHECK(big.values()[1] == doctest::Approx(0.0f));
  CHECK(std::isfinite(big.values()[1]));

  auto s = softmax_rows(Tensor<float>::from_values({3}, {1, 2, 3}));
  long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s.values()[i] - std::exp((long double)(i + 1)) / z) < 1e-7);

  std::mt19937_64 rng(5);
  auto x = random_tensor<float>({6, 9}, rng, false, -20, 20);
  auto y = softmax_rows(x);
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0;
    for (std::size_t j = 0; j < 9; ++j) {
      const float v = y.values()[r * 9 + j];
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
}

TEST_CASE("causal softmax masks the future exactly") {
  auto x = Tensor<double>::from_values({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = causal_softmax_rows(x);
  CHECK(y.values()[0] == 1.0);
  CHECK(y.values()[1] == 0.0);
  CHECK(y.values()[2] == 0.0);
  CHECK(y.values()[5] == 0.0);
  CHECK(y.values()[3] + y.values()[4] == doctest::Approx(1.0));
}

TEST_CASE("layer_norm") {
  auto w1 = Tensor<double>::full({4}, 1.0);
  auto c = layer_norm(Tensor<double>::from_values({4}, {5, 5, 5, 5}), w1);
  for (double v : c.values()) CHECK(v == 0.0);

  auto two = layer_norm(Tensor<double>::from_values({2}, {1, -1}), Tensor<double>::full({2}, 1.0));
  CHECK(two.values()[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(two.values()[1] == doctest::Approx(-1.0).epsilon(1e-4));

  std::mt19937_64 rng(9);
  auto x = random_tensor<double>({1, 64}, rng, false, -3, 5);
  auto y = layer_norm(x, Tensor<double>::full({64}, 1.0));
  double mu = 0, var = 0;
  for (double v : y.values()) mu += v;
  mu /= 64;
  for (double v : y.values()) var += (v - mu) * (v - mu);
  var /= 64;
  CHECK(std::abs(mu) <= 1e-6);
  CHECK(std::abs(var - 1.0) <= 1e-3);
}

TEST_CASE("cross entropy") {
  auto uniform = Tensor<double>::zeros({4}, true);
  std::vector<TokenId> t{2};
  auto l = cross_entropy_logits(uniform, t);
  CHECK(l.item() == doctest::Approx(std::log(4.0)));

  auto sure = Tensor<float>::from_values({3}, {0.0f, 1000.0f, 0.0f});
  std::vector<TokenId> t1{1};
  CHECK(cross_entropy_logits(sure, t1).item() == doctest::Approx(0.0f));

  auto logits = Tensor<double>::from_values({2, 3}, {1, 2, 3, 3, 2, 1}, true);
  std::vector<TokenId> ignore{kIgnoreIndex, kIgnoreIndex};
  auto z = cross_entropy_logits(logits, ignore);
  CHECK(z.item() == 0.0);
  z.backward();
  for (double g : logits.grad()) CHECK(g == 0.0);

  std::vector<TokenId> bad{3, 0};
  CHECK_THROWS_AS(cross_entropy_rows(logits, bad), ftp::IndexError);
}

TEST_CASE("backward basics") {
  auto x = Tensor<double>::from_values({3}, {0.5, -1, 2}, true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  auto y = Tensor<double>::from_values({2}, {1, 2}, true);
  sum(mul(y, y)).backward();
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);

  // repeated calls accumulate
  auto loss = sum(mul(y, y));
  loss.backward();
  CHECK(y.grad()[0] == 4.0);
  CHECK(y.grad()[1] == 8.0);

  CHECK_THROWS_AS(mul(y, y).backward(), ftp::ContractError);
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(21);
  auto x = random_tensor<double>({4, 6}, rng);
  auto w = random_tensor<double>({6, 5}, rng);
  auto h = silu(matmul(x, w));
  std::vector<TokenId> tg{0, 4, 2, 1};
  auto l1 = cross_entropy_logits(h, tg);
  auto l2 = sum(mul(h, h));
  l1.backward();
  l2.backward();
  std::vector<double> separate(w.grad().begin(), w.grad().end());
  w.zero_grad();
  x.zero_grad();
  add(l1, l2).backward();
  for (std::size_t i = 0; i < separate.size(); ++i) {
    CHECK(std::abs(separate[i] - w.grad()[i]) <= 1e-6 * std::max(1.0, std::abs(separate[i])));
  }
}

TEST_CASE("computation record visits each op once in reverse creation order") {
  auto x = Tensor<double>::from_values({2}, {1, 2}, true);
  auto a = mul(x, x);
  auto b = add(a, x);
  auto loss = sum(add(a, b));
  auto record = loss.computation_record();
  REQUIRE(record.size() == 4);
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < record.size(); ++i) {
    CHECK(seen.insert(record[i].sequence).second);
    if (i) CHECK(record[i - 1].sequence > record[i].sequence);
  }
  CHECK(std::string(record.front().op) == "sum");
}

TEST_CASE("no-grad mode records nothing") {
  auto x = Tensor<float>::from_values({2}, {1, 2}, true);
  NoGradGuard guard;
  auto y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE_TEMPLATE("primitive gradients match finite differences", T, float, double) {
  std::mt19937_64 rng(1234);
  const double step = std::is_same_v<T, float> ? 1e-3 : 1e-6;
  
  auto expect_ok = [](const ftp::testing::GradCheckResult& r) {
    CHECK(r.pass_fraction() >= 0.95);
    CHECK(r.worst_error <= 1e-2);
  };

  SUBCASE("add/sub/mul with broadcasting") {
    std::vector<Tensor<T>> in{random_tensor<T>({3, 4, 5}, rng), random_tensor<T>({4, 5}, rng)};
    expect_ok(check_op<T>(in, [](const auto& v) { return add(v[0], v[1]); }, rng, step));
    expect_ok(check_op<T>(in, [](const auto& v) { return sub(v[0], v[1]); }, rng, step));
    expect_ok(check_op<T>(in, [](const auto& v) { return mul(v[0], v[1]); }, rng, step));
    std::vector<Tensor<T>> same{random_tensor<T>({2, 7}, rng), random_tensor<T>({2, 7}, rng)};
    expect_ok(check_op<T>(same, [](const auto& v) { return mul(v[0], v[1]); }, rng, step));
  }
  SUBCASE("matmul") {
    std::vector<Tensor<T>> in{random_tensor<T>({2, 3, 4}, rng), random_tensor<T>({4, 5}, rng)};
    expect_ok(check_op<T>(in, [](const auto& v) { return matmul(v[0], v[1]); }, rng, step));
    std::vector<Tensor<T>> bt{random_tensor<T>({2, 3, 4}, rng), random_tensor<T>({2, 5, 4}, rng)};
    expect_ok(check_op<T>(bt, [](const auto& v) { return matmul(v[0], v[1], true); }, rng, step));
    std::vector<Tensor<T>> tb{random_tensor<T>({3, 4}, rng), random_tensor<T>({6, 4}, rng)};
    expect_ok(check_op<T>(tb, [](const auto& v) { return matmul(v[0], v[1], true); }, rng, step));
  }
  SUBCASE("activations") {
    std::vector<Tensor<T>> in{random_tensor<T>({4, 6}, rng, true, -3, 3)};
    expect_ok(check_op<T>(in, [](const auto& v) { return silu(v[0]); }, rng, step));
    expect_ok(check_op<T>(in, [](const auto& v) { return gelu(v[0]); }, rng, step));
    expect_ok(check_op<T>(in, [](const auto& v) {
      using U = std::remove_cvref_t<decltype(v[0].values()[0])>;
      return scale(v[0], U(0.7));
    }, rng, step));
  }
  SUBCASE("softmax and layer norm") {
    std::vector<Tensor<T>> in{random_tensor<T>({3, 5}, rng, true, -2, 2)};
    expect_ok(check_op<T>(in, [](const auto& v) { return softmax_rows(v[0]); }, rng, step));
    std::vector<Tensor<T>> sq{random_tensor<T>({2, 4, 4}, rng, true, -2, 2)};
    expect_ok(check_op<T>(sq, [](const auto& v) { return causal_softmax_rows(v[0]); }, rng, step));
    std::vector<Tensor<T>> ln{random_tensor<T>({3, 6}, rng, true, -2, 2), random_tensor<T>({6}, rng, true, 0.5, 1.5)};
    expect_ok(check_op<T>(ln, [](const auto& v) { return layer_norm(v[0], v[1]); }, rng, step));
  }
  SUBCASE("reshape, transpose, narrow") {
    std::vector<Tensor<T>> in{random_tensor<T>({2, 3, 4}, rng)};
    expect_ok(check_op<T>(in, [](const auto& v) { return transpose(v[0], 0, 2); }, rng, step));
    expect_ok(check_op<T>(in, [](const auto& v) { return transpose(v[0], 1, 2); }, rng, step));
    expect_ok(check_op<T>(in, [](const auto& v) { return reshape(v[0], {6, 4}); }, rng, step));
    expect_ok(check_op<T>(in, [](const auto& v) { return narrow(v[0], 1, 1, 2); }, rng, step));
  }
  SUBCASE("embedding, cross entropy, xpos, reductions") {
    std::vector<Tensor<T>> table{random_tensor<T>({5, 3}, rng)};
    std::vector<TokenId> ids{4, 0, 4, 2};
    expect_ok(check_op<T>(table, [&](const auto& v) { return embedding(v[0], ids, {2, 2}); }, rng, step));
    std::vector<Tensor<T>> logits{random_tensor<T>({4, 6}, rng, true, -2, 2)};
    std::vector<TokenId> tg{1, kIgnoreIndex, 5, 0};
    expect_ok(check_op<T>(logits, [&](const auto& v) { return cross_entropy_rows(v[0], tg); }, rng, step));
    std::vector<Tensor<T>> q{random_tensor<T>({2, 3, 8}, rng)};
    std::vector<std::size_t> pos{0, 5, 17};
    expect_ok(check_op<T>(q, [&](const auto& v) { return xpos_rotate(v[0], pos, 1); }, rng, step));
    expect_ok(check_op<T>(q, [&](const auto& v) { return xpos_rotate(v[0], pos, -1); }, rng, step));
    expect_ok(check_op<T>(q, [](const auto& v) { return mean(v[0]); }, rng, step));
  }
  SUBCASE("fused causal attention across a query block boundary") {
    std::vector<Tensor<T>> in{random_tensor<T>({2, 67, 4}, rng), random_tensor<T>({2, 67, 4}, rng),
                              random_tensor<T>({2, 67, 4}, rng)};
    expect_ok(check_op<T>(in, [](const auto& v) {
      using U = std::remove_cvref_t<decltype(v[0].values()[0])>;
      return causal_attention(v[0], v[1], v[2], U(0.5));
    }, rng, step));
  }
}

TEST_CASE("fused causal attention equals the unfused composition") {
  std::mt19937_64 rng(77);
  const std::size_t len = 130, hd = 8;
  auto q = random_tensor<double>({3, len, hd}, rng);
  auto k = random_tensor<double>({3, len, hd}, rng);
  auto v = random_tensor<double>({3, len, hd}, rng);
  auto fused = causal_attention(q, k, v, 0.35);
  auto unfused = matmul(causal_softmax_rows(scale(matmul(q, k, true), 0.35)), v);
  for (std::size_t i = 0; i < fused.numel(); ++i) {
    CHECK(std::abs(fused.values()[i] - unfused.values()[i]) <= 1e-12);
  }

  SUBCASE("row-at-a-time evaluation reproduces the full result bit-exactly") {
    std::vector<double> row(hd);
    const double* qd = q.values().data();
    for (std::size_t t = 0; t < len; ++t) {
      kernels::causal_attention_rows<double>(qd + t * hd, k.values().data(), v.values().data(), t, 1, hd, 0.35,
                                             row.data(), nullptr);
      for (std::size_t j = 0; j < hd; ++j) REQUIRE(row[j] == fused.values()[t * hd + j]);
    }
  }
}

TEST_CASE("xpos position zero is the identity") {
  std::mt19937_64 rng(2);
  auto q = random_tensor<double>({1, 16}, rng, false);
  std::vector<std::size_t> zero{0};
  auto r = xpos_rotate(q, zero, 1);
  for (std::size_t i = 0; i < 16; ++i) CHECK(r.values()[i] == q.values()[i]);
}

TEST_CASE("xpos scores depend only on relative offset") {
  std::mt19937_64 rng(4);
  const std::size_t hd = 16;
  auto q = random_tensor<double>({1, hd}, rng, false);
  auto k = random_tensor<double>({1, hd}, rng, false);
  auto score = [&](std::size_t m, std::size_t n) {
    std::vector<std::size_t> pm{m}, pn{n};
    auto qr = xpos_rotate(q, pm, 1);
    auto kr = xpos_rotate(k, pn, -1);
    double s = 0;
    for (std::size_t i = 0; i < hd; ++i) s += qr.values()[i] * kr.values()[i];
    return s;
  };
  for (std::size_t delta : {1u, 7u}) {
    for (auto [m, n] : std::vector<std::pair<std::size_t, std::size_t>>{{3, 1}, {10, 10}, {40, 2}}) {
      const double base = score(m, n);
      const double shifted = score(m + delta, n + delta);
      CHECK(std::abs(base - shifted) <= 1e-5 * std::max(1.0, std::abs(base)));
    }
  }
}

TEST_CASE("xpos norm ratio equals the zeta scale") {
  const std::size_t hd = 8;
  for (std::size_t pair = 0; pair < hd / 2; ++pair) {
    std::vector<double> v(hd, 0.0);
    v[2 * pair] = 0.6;
    v[2 * pair + 1] = -0.8;
    auto q = Tensor<double>::from_values({1, hd}, v);
    const std::size_t m = 300;
    std::vector<std::size_t> pos{m};
    auto r = xpos_rotate(q, pos, 1);
    double norm = 0;
    for (double x : r.values()) norm += x * x;
    const double expected = std::pow(xpos_zeta(pair, hd), double(m) / 512.0);
    CHECK(std::sqrt(norm) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(xpos_rotate(Tensor<double>::zeros({2, 3}), std::vector<std::size_t>{0, 1}, 1), ftp::ConfigError);
}

TEST_CASE("embedding rejects out of range ids") {
  auto table = Tensor<float>::zeros({4, 2});
  std::vector<TokenId> ids{1, 4};
  CHECK_THROWS_AS(embedding(table, ids, {2}), ftp::IndexError);
}

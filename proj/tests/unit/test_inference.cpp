#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "ftp/core/errors.hpp"
#include "ftp/inference/generation.hpp"
#include "support/reference_model.hpp"

using namespace ftp::inference;
using ftp::model::FtpModel;
using ftp::model::GptModel;
using ftp::model::ModelConfig;
using ftp::numerics::Tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 20;
  c.dim = 16;
  c.heads = 2;
  c.mlp_dim = 32;
  c.enc_layers = 2;
  c.dec_layers = 1;
  c.enc_ctx = 12;
  c.n_future = 4;
  c.pseudo_seq = 3;
  return c;
}

std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, std::mt19937_64& rng) {
  std::vector<TokenId> t(n);
  for (auto& x : t) x = TokenId(rng() % vocab);
  return t;
}

// Decoder with logits looked up by prefix.
class TableDecoder : public DecoderOracle {
 public:
  TableDecoder(std::size_t vocab, std::size_t window, std::map<std::vector<TokenId>, std::vector<double>> table)
      : vocab_(vocab), window_(window), table_(std::move(table)) {}
  std::size_t vocab_size() const override { return vocab_; }
  std::size_t window() const override { return window_; }
  std::vector<std::vector<double>> next(const std::vector<std::vector<TokenId>>& prefixes) const override {
    std::vector<std::vector<double>> out;
    for (const auto& p : prefixes) {
      auto it = table_.find(p);
      out.push_back(it == table_.end() ? std::vector<double>(vocab_, 0.0) : it->second);
    }
    return out;
  }

 private:
  std::size_t vocab_, window_;
  std::map<std::vector<TokenId>, std::vector<double>> table_;
};

}  // namespace

TEST_CASE("sampler config validation and strategy names") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  c.top_k = 0;
  CHECK_THROWS_AS(c.validate(), ftp::ConfigError);
  c = {};
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ftp::ConfigError);
  c = {};
  c.lookahead_k = 0;
  CHECK_THROWS_AS(c.validate(), ftp::ConfigError);
  for (auto s : {Strategy::gpt, Strategy::ftp_single, Strategy::ftp_lookahead}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("beam"), ftp::ConfigError);
}

TEST_CASE("next_logits_gpt") {
  const auto cfg = tiny_config();
  GptModel<double> m(cfg, 3);
  std::mt19937_64 rng(1);
  auto ctx = random_tokens(7, cfg.vocab_size, rng);
  auto logits = next_logits_gpt(m, ctx);
  REQUIRE(logits.size() == cfg.vocab_size);
  auto full = m.forward(ctx, 1, ctx.size());
  for (std::size_t v = 0; v < cfg.vocab_size; ++v) CHECK(logits[v] == full.values()[6 * cfg.vocab_size + v]);
  CHECK(next_logits_gpt(m, ctx) == logits);

  auto p = ftp::testing::reference::collect(m.named_parameters(), cfg);
  auto ref = ftp::testing::reference::lm_head(
      ftp::testing::reference::encoder(std::vector<int>(ctx.begin(), ctx.end()), p), p);
  for (std::size_t v = 0; v < cfg.vocab_size; ++v) CHECK(std::abs(logits[v] - ref[6][v]) <= 1e-6);

  CHECK_THROWS_AS(next_logits_gpt(m, std::vector<TokenId>{}), ftp::ContractError);
  CHECK_THROWS_AS(next_logits_gpt(m, random_tokens(13, cfg.vocab_size, rng)), ftp::ContractError);
}

TEST_CASE("next_logits_ftp equals the teacher-forced first offset") {
  const auto cfg = tiny_config();
  FtpModel<float> m(cfg, 4);
  std::mt19937_64 rng(2);
  auto ctx = random_tokens(9, cfg.vocab_size, rng);
  auto logits = next_logits_ftp(m, ctx);
  REQUIRE(logits.size() == cfg.vocab_size);
  auto dec = random_tokens(ctx.size() * cfg.n_future, cfg.vocab_size, rng);
  for (std::size_t t = 0; t < ctx.size(); ++t) dec[t * cfg.n_future] = ctx[t];
  auto full = m.forward(ctx, 1, ctx.size(), dec);
  const std::size_t base = (ctx.size() - 1) * cfg.n_future * cfg.vocab_size;
  for (std::size_t v = 0; v < cfg.vocab_size; ++v) CHECK(logits[v] == double(full.values()[base + v]));

  auto longer = ctx;
  longer.push_back(TokenId((ctx.back() + 1) % TokenId(cfg.vocab_size)));
  CHECK(next_logits_ftp(m, longer) != logits);
  CHECK_THROWS_AS(next_logits_ftp(m, std::vector<TokenId>{}), ftp::ContractError);
}

TEST_CASE("context encoder matches the full encoder, including the sliding window") {
  const auto cfg = tiny_config();
  GptModel<float> m(cfg, 5);
  std::mt19937_64 rng(3);
  auto stream = random_tokens(20, cfg.vocab_size, rng);
  ContextEncoder<float> enc(m.encoder(), cfg.enc_ctx);
  for (std::size_t n = 1; n <= stream.size(); ++n) {
    std::span<const TokenId> ctx(stream.data(), n);
    auto e = enc.last_embedding(ctx);
    auto window = n > cfg.enc_ctx ? ctx.subspan(n - cfg.enc_ctx) : ctx;
    auto full = m.encoder_forward(window, 1, window.size());
    const std::size_t base = (window.size() - 1) * cfg.dim;
    for (std::size_t d = 0; d < cfg.dim; ++d) REQUIRE(e.values()[d] == full.values()[base + d]);
  }
}

TEST_CASE("top-k sampling") {
  std::mt19937_64 rng(4);
  const std::vector<double> logits{0.5, 2.0, -1.0, 2.0, 1.0};
  SUBCASE("ties prefer the lower id and k=1 is argmax") {
    CHECK(top_k_ids(logits, 3) == std::vector<TokenId>{1, 3, 4});
    for (int i = 0; i < 50; ++i) CHECK(sample_topk(logits, 1, 1.0, rng) == 1);
    CHECK(top_k_ids(logits, 2, TokenId(1)) == std::vector<TokenId>{3, 4});
    CHECK_THROWS_AS(top_k_ids(logits, 6), ftp::ContractError);
  }
  SUBCASE("vanishing temperature is argmax") {
    const std::vector<double> distinct{0.5, 2.0, -1.0, 1.9, 1.0};
    for (int i = 0; i < 50; ++i) CHECK(sample_topk(distinct, 5, 1e-4, rng) == 1);
  }
  SUBCASE("empirical frequencies match the renormalized softmax") {
    const std::vector<double> l{1.0, 0.2, -0.5, 1.5, 0.0};
    const double temp = 0.8;
    const std::size_t k = 3, draws = 100000;
    // retained: ids 3, 0, 1
    std::vector<double> expected(5, 0.0);
    const double z = std::exp(1.5 / temp) + std::exp(1.0 / temp) + std::exp(0.2 / temp);
    expected[3] = std::exp(1.5 / temp) / z;
    expected[0] = std::exp(1.0 / temp) / z;
    expected[1] = std::exp(0.2 / temp) / z;
    std::vector<std::size_t> counts(5, 0);
    for (std::size_t i = 0; i < draws; ++i) ++counts[std::size_t(sample_topk(l, k, temp, rng))];
    for (std::size_t v = 0; v < 5; ++v) {
      const double p = expected[v];
      const double sigma = std::sqrt(double(draws) * p * (1 - p));
      CHECK(std::abs(double(counts[v]) - double(draws) * p) <= 3 * sigma + 1e-9);
    }
    auto dist = topk_distribution(l, k, temp);
    CHECK(dist[0] == doctest::Approx(expected[3]).epsilon(1e-12));
  }
}

TEST_CASE("lookahead scores on a hand-built toy decoder") {
  // vocabulary of 3, seed token 2
  TableDecoder toy(3, 2,
                   {{{2}, {2.0, 1.0, 0.0}}, {{2, 0}, {0.0, 3.0, 0.0}}, {{2, 1}, {1.0, 1.0, 1.0}}});
  SUBCASE("K=2, L=1 against the hand-computed table") {
    auto s = lookahead_scores(toy, 2, 2, 1, 0.5);
    REQUIRE(s.tokens == std::vector<TokenId>{0, 1});
    // initial: -log(1 + e^-1), -log(1 + e); lookahead: 3 - log(e^3 + 2), -log 3
    CHECK(std::abs(s.scores[0] - -0.3607231657287034) <= 1e-6);
    CHECK(std::abs(s.scores[1] - -1.8625678318522776) <= 1e-6);
    auto p = candidate_probabilities(s.scores);
    CHECK(std::abs(p[0] - 0.81784944044401) <= 1e-6);
    CHECK(std::abs(p[1] - 0.18215055955599002) <= 1e-6);
  }
  SUBCASE("L=0 keeps the renormalized top-K log probabilities") {
    auto s = lookahead_scores(toy, 2, 2, 0, 0.5);
    auto t = top_k_scores(std::vector<double>{2.0, 1.0, 0.0}, 2, 1.0);
    CHECK(s.scores == t.scores);
    CHECK(s.tokens == t.tokens);
  }
  SUBCASE("K=1 normalizes to one") {
    for (std::size_t l : {0, 1}) {
      auto s = lookahead_scores(toy, 2, 1, l, 0.9);
      CHECK(candidate_probabilities(s.scores) == std::vector<double>{1.0});
    }
  }
  SUBCASE("lookahead beyond the decoder window") {
    CHECK_THROWS_AS(lookahead_scores(toy, 2, 2, 2, 0.5), ftp::ContractError);
    CHECK_THROWS_AS(lookahead_scores(toy, 2, 4, 0, 0.5), ftp::ContractError);
  }
}

TEST_CASE("lookahead on a real model") {
  auto cfg = tiny_config();
  cfg.n_future = 5;
  FtpModel<double> m(cfg, 6);
  std::mt19937_64 rng(7);
  auto ctx = random_tokens(6, cfg.vocab_size, rng);
  ContextEncoder<double> enc(m.encoder(), cfg.enc_ctx);
  FtpDecoderOracle<double> oracle(m, m.project_pseudo_sequence(enc.last_embedding(ctx)));

  SUBCASE("first step agrees with next_logits_ftp") {
    CHECK(oracle.next({{ctx.back()}}).front() == next_logits_ftp(m, ctx));
  }
  SUBCASE("L=0 distribution equals the top-K distribution exactly") {
    for (double temp : {1.0, 0.7}) {
      auto s = lookahead_scores(oracle, ctx.back(), 6, 0, 0.8, temp);
      CHECK(candidate_probabilities(s.scores) == topk_distribution(next_logits_ftp(m, ctx), 6, temp));
    }
  }
  SUBCASE("gamma=0 equals L=0") {
    auto base = lookahead_scores(oracle, ctx.back(), 5, 0, 0.0);
    for (std::size_t l = 1; l <= 4; ++l) {
      auto s = lookahead_scores(oracle, ctx.back(), 5, l, 0.0);
      CHECK(s.scores == base.scores);
      CHECK(candidate_probabilities(s.scores) == candidate_probabilities(base.scores));
    }
  }
  SUBCASE("probabilities sum to one") {
    for (int trial = 0; trial < 5; ++trial) {
      FtpModel<double> r(cfg, 100 + trial);
      auto c = random_tokens(4, cfg.vocab_size, rng);
      ContextEncoder<double> e(r.encoder(), cfg.enc_ctx);
      FtpDecoderOracle<double> o(r, r.project_pseudo_sequence(e.last_embedding(c)));
      auto p = candidate_probabilities(lookahead_scores(o, c.back(), 7, 3, 0.8).scores);
      double total = 0.0;
      for (double x : p) total += x;
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
  SUBCASE("score moves away from L=0 monotonically in gamma") {
    auto base = lookahead_scores(oracle, ctx.back(), 4, 0, 0.0);
    auto a = lookahead_scores(oracle, ctx.back(), 4, 3, 0.4);
    auto b = lookahead_scores(oracle, ctx.back(), 4, 3, 0.8);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(std::abs(a.scores[i] - base.scores[i]) <= std::abs(b.scores[i] - base.scores[i]));
    }
  }
  SUBCASE("continuations depend on the context only through the pseudo-sequence") {
    auto pseudo = m.project_pseudo_sequence(enc.last_embedding(ctx));
    auto mutated = ctx;
    mutated[0] = TokenId((mutated[0] + 3) % TokenId(cfg.vocab_size));
    ContextEncoder<double> other(m.encoder(), cfg.enc_ctx);
    other.last_embedding(mutated);  // a different encoder state, not used below
    FtpDecoderOracle<double> again(m, pseudo);
    auto s1 = lookahead_scores(oracle, ctx.back(), 4, 3, 0.8);
    auto s2 = lookahead_scores(again, ctx.back(), 4, 3, 0.8);
    CHECK(s1.scores == s2.scores);
    CHECK(s1.tokens == s2.tokens);
  }
}

TEST_CASE("generation") {
  const auto cfg = tiny_config();
  GptModel<float> gpt(cfg, 8);
  FtpModel<float> ftp_model(cfg, 9);
  SamplerConfig sc;
  sc.top_k = 5;
  const std::vector<TokenId> prompt{1, 2, 3};

  SUBCASE("n=0 returns the prompt") {
    std::mt19937_64 rng(1);
    CHECK(generate(gpt, prompt, 0, sc, rng) == prompt);
    CHECK(generate(ftp_model, prompt, 0, Strategy::ftp_single, sc, rng) == prompt);
    CHECK_THROWS_AS(generate(gpt, std::vector<TokenId>{}, 3, sc, rng), ftp::ContractError);
  }
  SUBCASE("fixed seed reproduces the sequence, past the context window") {
    for (auto strategy : {Strategy::ftp_single, Strategy::ftp_lookahead}) {
      sc.lookahead_l = 2;
      std::mt19937_64 a(5), b(5);
      auto x = generate(ftp_model, prompt, 15, strategy, sc, a);
      auto y = generate(ftp_model, prompt, 15, strategy, sc, b);
      CHECK(x == y);
      CHECK(x.size() == 18);
    }
    std::mt19937_64 a(5), b(5);
    CHECK(generate(gpt, prompt, 15, sc, a) == generate(gpt, prompt, 15, sc, b));
  }
  SUBCASE("suppressed token is never produced") {
    sc.suppress = TokenId(7);
    sc.top_k = cfg.vocab_size;
    std::mt19937_64 rng(3);
    auto out = generate(gpt, prompt, 200, sc, rng);
    CHECK(std::count(out.begin() + 3, out.end(), TokenId(7)) == 0);
  }
  SUBCASE("deterministic chain follows its orbit") {
    // next token is (last * 3 + 1) mod 11, as a one-hot logit
    auto next = [](std::span<const TokenId> context) {
      std::vector<double> logits(11, 0.0);
      logits[std::size_t((context.back() * 3 + 1) % 11)] = 50.0;
      std::mt19937_64 rng(0);
      return sample_topk(logits, 1, 1.0, rng);
    };
    auto out = generate_tokens(next, std::vector<TokenId>{2}, 6);
    CHECK(out == std::vector<TokenId>{2, 7, 0, 1, 4, 2, 7});
  }
}

TEST_CASE("batched greedy decoding equals step-by-step argmax") {
  const auto cfg = tiny_config();
  GptModel<double> gpt(cfg, 10);
  FtpModel<double> ftp_model(cfg, 11);
  std::mt19937_64 rng(12);
  std::vector<std::vector<TokenId>> prompts;
  for (int i = 0; i < 4; ++i) prompts.push_back(random_tokens(5, cfg.vocab_size, rng));
  auto argmax = [](const std::vector<double>& v) {
    return TokenId(std::max_element(v.begin(), v.end()) - v.begin());
  };
  auto g = greedy_batch(gpt, prompts, 6, std::nullopt);
  auto f = greedy_batch(ftp_model, prompts, 6, std::nullopt);
  for (std::size_t r = 0; r < prompts.size(); ++r) {
    auto ctx = prompts[r];
    auto ctx2 = prompts[r];
    for (std::size_t t = 0; t < 6; ++t) {
      const TokenId a = argmax(next_logits_gpt(gpt, ctx));
      CHECK(g[r][t] == a);
      ctx.push_back(a);
      const TokenId b = argmax(next_logits_ftp(ftp_model, ctx2));
      CHECK(f[r][t] == b);
      ctx2.push_back(b);
    }
  }
  SUBCASE("stop token ends a row") {
    const TokenId stop = g[0][1];
    auto s = greedy_batch(gpt, prompts, 6, stop);
    CHECK(s[0].size() <= 2);
    CHECK(s[0].back() == stop);
  }
}

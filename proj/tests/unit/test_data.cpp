#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "ftp/core/errors.hpp"
#include "ftp/data/corpus.hpp"
#include "ftp/data/tokenizer.hpp"

using namespace ftp::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  auto dir = fs::temp_directory_path() / ("ftp_test_data_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::uint64_t fnv1a(std::span<const TokenId> ids) {
  std::uint64_t h = 1469598103934665603ull;
  for (TokenId id : ids) {
    for (int b = 0; b < 4; ++b) {
      h ^= (std::uint32_t(id) >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

TokenCorpus make_corpus(std::size_t n, std::size_t vocab = 258) {
  TokenCorpus c;
  c.meta.vocab_size = vocab;
  c.meta.tokenizer = "byte";
  c.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.ids[i] = TokenId(i % vocab);
  return c;
}

}  // namespace

TEST_CASE("byte tokenizer") {
  auto tok = Tokenizer::byte_level();
  CHECK(tok.encode("").empty());
  CHECK(tok.decode(std::vector<TokenId>{}).empty());
  CHECK(tok.encode("ab") == std::vector<TokenId>{97, 98});
  CHECK(tok.vocab_size() == 258);
  CHECK(tok.identifier() == "byte");

  std::mt19937_64 rng(1);
  std::string bytes(1024, '\0');
  for (auto& c : bytes) c = char(rng() & 0xff);
  CHECK(tok.decode(tok.encode(bytes)) == bytes);

  std::vector<TokenId> bad{97, 258};
  CHECK_THROWS_AS(tok.decode(bad), ftp::IndexError);
  std::vector<TokenId> special{97, Tokenizer::kEos, 98, Tokenizer::kPad};
  CHECK(tok.decode(special) == "ab");
}

TEST_CASE("bpe tokenizer") {
  const std::string text = "the cat sat on the mat. the cat sat on the hat. the bat sat on the cat.";
  auto tok = Tokenizer::train_bpe(text, 270);
  CHECK(tok.is_bpe());
  CHECK(tok.vocab_size() <= 270);
  CHECK(tok.vocab_size() > 258);
  auto ids = tok.encode(text);
  CHECK(ids.size() < text.size());
  CHECK(tok.decode(ids) == text);
  CHECK(tok.decode(tok.encode("unseen words xyz")) == "unseen words xyz");

  const auto path = scratch_dir() / "tok.txt";
  tok.save(path);
  auto loaded = Tokenizer::load(path);
  CHECK(loaded.merges() == tok.merges());
  CHECK(loaded.encode(text) == ids);
  CHECK_THROWS_AS(Tokenizer::train_bpe(text, 100), ftp::ConfigError);
}

TEST_CASE("corpus round trip") {
  const auto dir = scratch_dir();
  const auto path = dir / "small.bin";
  std::vector<TokenId> ids{0, 1, 2};
  write_corpus(path, ids, {258, "byte"});
  auto c = read_corpus(path);
  CHECK(c.ids == ids);
  CHECK(c.meta.vocab_size == 258);
  CHECK(c.meta.tokenizer == "byte");
  CHECK(fs::file_size(path) == 12);

  std::mt19937_64 rng(2);
  std::vector<TokenId> big(1'000'000);
  for (auto& id : big) id = TokenId(rng() % 50000);
  write_corpus(dir / "big.bin", big, {50000, "bpe-50000"});
  auto back = read_corpus(dir / "big.bin");
  CHECK(fnv1a(back.ids) == fnv1a(big));
  CHECK(back.ids.size() == big.size());

  std::vector<TokenId> out_of_range{5, 300};
  CHECK_THROWS_AS(write_corpus(dir / "bad.bin", out_of_range, {258, "byte"}), ftp::IndexError);
}

TEST_CASE("corrupt corpora are rejected with offsets") {
  const auto dir = scratch_dir();
  const auto path = dir / "c.bin";
  std::vector<TokenId> ids{1, 2, 3, 4};
  write_corpus(path, ids, {258, "byte"});

  SUBCASE("truncated data") {
    fs::resize_file(path, 10);
    try {
      read_corpus(path);
      FAIL("expected FormatError");
    } catch (const ftp::FormatError& e) {
      CHECK(e.offset() == 10);
    }
  }
  SUBCASE("id outside vocabulary") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char bytes[4] = {char(0xff), char(0xff), 0, 0};
    f.write(bytes, 4);
    f.close();
    try {
      read_corpus(path);
      FAIL("expected FormatError");
    } catch (const ftp::FormatError& e) {
      CHECK(e.offset() == 8);
    }
  }
  SUBCASE("garbled metadata") {
    std::ofstream(meta_path(path)) << "format=ftp-corpus\nversion=1\nthis line is broken\n";
    try {
      read_corpus(path);
      FAIL("expected FormatError");
    } catch (const ftp::FormatError& e) {
      CHECK(e.offset() == 28);
    }
  }
  SUBCASE("future version") {
    std::ofstream(meta_path(path)) << "format=ftp-corpus\nversion=9\nvocab_size=258\ntokenizer=byte\ncount=4\n";
    CHECK_THROWS_AS(read_corpus(path), ftp::UnsupportedVersionError);
  }
  SUBCASE("missing metadata") {
    fs::remove(meta_path(path));
    CHECK_THROWS_AS(read_corpus(path), ftp::FormatError);
  }
}

TEST_CASE("sample_window") {
  auto exact = make_corpus(11);
  std::mt19937_64 rng(3);
  auto w = sample_window(exact, rng, 8, 3);
  CHECK(w == exact.ids);
  CHECK_THROWS_AS(sample_window(exact, rng, 9, 3), ftp::ContractError);

  auto c = make_corpus(500);
  std::mt19937_64 a(4), b(4);
  for (int i = 0; i < 5; ++i) CHECK(sample_window(c, a, 16, 4) == sample_window(c, b, 16, 4));
}

TEST_CASE("sample_window start offsets are uniform") {
  // ids equal positions, so the first token is the start offset
  TokenCorpus c;
  c.meta.vocab_size = 60;
  for (int i = 0; i < 60; ++i) c.ids.push_back(i);
  const std::size_t len = 8, n = 3, starts = 60 - (len + n) + 1;
  std::vector<double> counts(starts, 0.0);
  std::mt19937_64 rng(5);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[std::size_t(sample_window(c, rng, len, n)[0])] += 1.0;
  const double expected = double(draws) / double(starts);
  double stat = 0.0;
  for (double o : counts) stat += (o - expected) * (o - expected) / expected;
  boost::math::chi_squared dist(double(starts - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, stat));
  CHECK(p > 0.01);
}

TEST_CASE("make_batch alignment") {
  std::vector<TokenId> win{10, 11, 12, 13, 14, 15, 16};  // T = 4, N = 3
  auto b = make_batch({win}, 3);
  CHECK(b.len == 4);
  CHECK(std::vector<TokenId>(b.dec_in.begin(), b.dec_in.begin() + 3) == std::vector<TokenId>{10, 11, 12});
  CHECK(std::vector<TokenId>(b.dec_target.begin(), b.dec_target.begin() + 3) == std::vector<TokenId>{11, 12, 13});
  // the last encoder position uses exactly the final N + 1 tokens
  CHECK(std::vector<TokenId>(b.dec_in.begin() + 9, b.dec_in.begin() + 12) == std::vector<TokenId>{13, 14, 15});
  CHECK(std::vector<TokenId>(b.dec_target.begin() + 9, b.dec_target.begin() + 12) == std::vector<TokenId>{14, 15, 16});
  for (auto m : b.loss_mask) CHECK(m == 1);

  CHECK_THROWS_AS(make_batch({win, {1, 2, 3}}, 3), ftp::ContractError);
  CHECK_THROWS_AS(make_batch({{1, 2, 3}}, 3), ftp::ContractError);

  auto padded = make_batch({{1, 2, 257, 257}}, 2, TokenId(257));
  CHECK(padded.loss_mask == std::vector<std::uint8_t>{1, 0, 0, 0});
}

TEST_CASE("make_batch exhaustive small case") {
  const std::size_t len = 8, n = 3;
  std::mt19937_64 rng(6);
  std::vector<std::vector<TokenId>> windows(2, std::vector<TokenId>(len + n));
  for (auto& w : windows)
    for (auto& id : w) id = TokenId(rng() % 258);
  auto b = make_batch(windows, n);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t t = 0; t < len; ++t) {
      CHECK(b.enc_tokens[i * len + t] == windows[i][t]);
      for (std::size_t k = 0; k < n; ++k) {
        CHECK(b.dec_in[b.index(i, t, k)] == windows[i][t + k]);
        CHECK(b.dec_target[b.index(i, t, k)] == windows[i][t + k + 1]);
      }
    }
  }
}

TEST_CASE("batch invariants hold for random shapes") {
  auto c = make_corpus(400);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t len = 4 + rng() % 61, n = 1 + rng() % 8;
    BatchStream stream(c, 3, len, n, rng());
    auto b = stream.next();
    for (std::size_t i = 0; i < b.batch; ++i) {
      for (std::size_t t = 0; t < len; ++t) {
        CHECK(b.dec_in[b.index(i, t, 0)] == b.enc_tokens[i * len + t]);
        for (std::size_t k = 0; k + 1 < n; ++k) CHECK(b.dec_target[b.index(i, t, k)] == b.dec_in[b.index(i, t, k + 1)]);
        if (t + 1 < len) CHECK(b.dec_target[b.index(i, t, 0)] == b.enc_tokens[i * len + t + 1]);
      }
    }
  }
}

TEST_CASE("batch stream determinism and state restore") {
  auto c = make_corpus(1000);
  BatchStream a(c, 2, 16, 4, 99), b(c, 2, 16, 4, 99);
  for (int i = 0; i < 3; ++i) CHECK(a.next().enc_tokens == b.next().enc_tokens);
  const auto state = a.rng_state();
  auto expected = a.next();
  BatchStream restored(c, 2, 16, 4, 1);
  restored.set_rng_state(state);
  CHECK(restored.next().dec_target == expected.dec_target);
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
}

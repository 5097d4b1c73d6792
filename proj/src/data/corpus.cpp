#include "ftp/data/corpus.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "ftp/core/errors.hpp"

namespace ftp::data {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormatName = "ftp-corpus";

std::map<std::string, std::pair<std::string, std::uint64_t>> parse_meta(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing corpus metadata " + path.string(), 0);
  std::map<std::string, std::pair<std::string, std::uint64_t>> out;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const std::uint64_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FormatError("expected key=value in " + path.string(), line_start);
    }
    out[line.substr(0, eq)] = {line.substr(eq + 1), line_start};
  }
  return out;
}

std::uint64_t parse_count(const std::string& text, const std::string& key, std::uint64_t offset) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw FormatError("non-numeric " + key + " value '" + text + "'", offset);
  return v;
}

}  // namespace

fs::path meta_path(const fs::path& corpus_path) { return fs::path(corpus_path.string() + ".meta"); }

void write_corpus(const fs::path& path, std::span<const TokenId> ids, const CorpusMeta& meta) {
  std::vector<unsigned char> bytes(ids.size() * 4);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || std::size_t(ids[i]) >= meta.vocab_size) {
      throw IndexError("token id " + std::to_string(ids[i]) + " at index " + std::to_string(i) +
                       " outside vocabulary of " + std::to_string(meta.vocab_size));
    }
    const auto v = std::uint32_t(ids[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + std::size_t(b)] = static_cast<unsigned char>(v >> (8 * b));
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write corpus " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  std::ofstream m(meta_path(path), std::ios::trunc);
  m << "format=" << kFormatName << "\nversion=" << kCorpusVersion << "\nvocab_size=" << meta.vocab_size
    << "\ntokenizer=" << meta.tokenizer << "\ncount=" << ids.size() << "\n";
}

TokenCorpus read_corpus(const fs::path& path) {
  auto kv = parse_meta(meta_path(path));
  auto require = [&](const char* key) -> const std::pair<std::string, std::uint64_t>& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("corpus metadata lacks '") + key + "'", 0);
    return it->second;
  };
  const auto& format = require("format");
  if (format.first != kFormatName) throw FormatError("unknown corpus format '" + format.first + "'", format.second);
  const auto& version = require("version");
  const auto ver = parse_count(version.first, "version", version.second);
  if (ver != std::uint64_t(kCorpusVersion)) {
    throw UnsupportedVersionError("corpus format version " + version.first + " (supported: " +
                                  std::to_string(kCorpusVersion) + ")");
  }
  TokenCorpus c;
  const auto& vocab = require("vocab_size");
  c.meta.vocab_size = parse_count(vocab.first, "vocab_size", vocab.second);
  c.meta.tokenizer = require("tokenizer").first;
  const auto& count_entry = require("count");
  const auto count = parse_count(count_entry.first, "count", count_entry.second);

  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open corpus " + path.string(), 0);
  const auto size = std::uint64_t(in.tellg());
  if (size != count * 4) {
    throw FormatError("corpus holds " + std::to_string(size) + " bytes but metadata declares " +
                          std::to_string(count) + " tokens",
                      std::min(size, count * 4));
  }
  in.seekg(0);
  std::vector<unsigned char> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(size));
  c.ids.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(bytes[i * 4 + std::size_t(b)]) << (8 * b);
    if (v >= c.meta.vocab_size) {
      throw FormatError("token id " + std::to_string(v) + " outside vocabulary of " +
                            std::to_string(c.meta.vocab_size),
                        i * 4);
    }
    c.ids[i] = TokenId(v);
  }
  return c;
}

std::vector<TokenId> sample_window(const TokenCorpus& corpus, std::mt19937_64& rng, std::size_t len,
                                   std::size_t n_future) {
  const std::size_t need = len + n_future;
  if (corpus.size() < need) {
    throw ContractError("corpus of " + std::to_string(corpus.size()) + " tokens is shorter than a window of " +
                        std::to_string(need));
  }
  std::uniform_int_distribution<std::size_t> start(0, corpus.size() - need);
  const std::size_t s = start(rng);
  return {corpus.ids.begin() + std::ptrdiff_t(s), corpus.ids.begin() + std::ptrdiff_t(s + need)};
}

Batch make_batch(const std::vector<std::vector<TokenId>>& windows, std::size_t n_future,
                 std::optional<TokenId> pad_id) {
  if (windows.empty()) throw ContractError("make_batch needs at least one window");
  const std::size_t w = windows[0].size();
  if (w <= n_future || n_future == 0) {
    throw ContractError("window length " + std::to_string(w) + " leaves no encoder positions for n_future " +
                        std::to_string(n_future));
  }
  Batch b;
  b.batch = windows.size();
  b.len = w - n_future;
  b.n_future = n_future;
  b.enc_tokens.resize(b.batch * b.len);
  b.dec_in.resize(b.batch * b.len * n_future);
  b.dec_target.resize(b.dec_in.size());
  b.loss_mask.resize(b.dec_in.size());
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto& win = windows[i];
    if (win.size() != w) {
      throw ContractError("ragged windows: window " + std::to_string(i) + " has " + std::to_string(win.size()) +
                          " tokens, expected " + std::to_string(w));
    }
    for (std::size_t t = 0; t < b.len; ++t) {
      b.enc_tokens[i * b.len + t] = win[t];
      for (std::size_t k = 0; k < n_future; ++k) {
        const std::size_t at = b.index(i, t, k);
        b.dec_in[at] = win[t + k];
        b.dec_target[at] = win[t + k + 1];
        b.loss_mask[at] = !(pad_id && win[t + k + 1] == *pad_id);
      }
    }
  }
  return b;
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(base_seed), std::uint32_t(base_seed >> 32), std::uint32_t(stream),
                    std::uint32_t(stream >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t(out[0]) << 32) | out[1];
}

BatchStream::BatchStream(const TokenCorpus& corpus, std::size_t batch, std::size_t len, std::size_t n_future,
                         std::uint64_t seed)
    : corpus_(&corpus), batch_(batch), len_(len), n_future_(n_future), rng_(seed) {}

Batch BatchStream::next() {
  std::vector<std::vector<TokenId>> windows;
  windows.reserve(batch_);
  for (std::size_t i = 0; i < batch_; ++i) windows.push_back(sample_window(*corpus_, rng_, len_, n_future_));
  return make_batch(windows, n_future_);
}

std::string BatchStream::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void BatchStream::set_rng_state(const std::string& state) {
  std::istringstream is(state);
  is >> rng_;
  if (!is) throw FormatError("invalid batch stream RNG state", 0);
}

}  // namespace ftp::data

#include "ftp/data/tokenizer.hpp"

#include <fstream>
#include <unordered_map>

#include "ftp/core/errors.hpp"

namespace ftp::data {

namespace {

std::uint64_t pair_key(TokenId a, TokenId b) {
  return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
}

void apply_merge(std::vector<TokenId>& seq, TokenId a, TokenId b, TokenId merged) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i + 1 < seq.size() && seq[i] == a && seq[i + 1] == b) {
      seq[out++] = merged;
      ++i;
    } else {
      seq[out++] = seq[i];
    }
  }
  seq.resize(out);
}

}  // namespace

Tokenizer Tokenizer::byte_level() {
  Tokenizer t;
  t.rebuild_pieces();
  return t;
}

Tokenizer Tokenizer::train_bpe(std::string_view text, std::size_t vocab_size) {
  if (vocab_size < kBaseVocab) {
    throw ConfigError("BPE vocab_size must be at least " + std::to_string(kBaseVocab));
  }
  Tokenizer t;
  t.bpe_ = true;
  std::vector<TokenId> seq(text.begin(), text.end());
  for (auto& id : seq) id = TokenId(static_cast<unsigned char>(id));
  while (t.vocab_size() < vocab_size) {
    std::unordered_map<std::uint64_t, std::size_t> counts;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) ++counts[pair_key(seq[i], seq[i + 1])];
    std::uint64_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [key, count] : counts) {
      if (count > best_count || (count == best_count && key < best)) {
        best = key;
        best_count = count;
      }
    }
    if (best_count < 2) break;
    const TokenId a = TokenId(best >> 32), b = TokenId(best & 0xffffffffu);
    const TokenId merged = TokenId(t.vocab_size());
    t.merges_.emplace_back(a, b);
    apply_merge(seq, a, b, merged);
  }
  t.rebuild_pieces();
  return t;
}

void Tokenizer::rebuild_pieces() {
  pieces_.assign(vocab_size(), std::string());
  for (int b = 0; b < 256; ++b) pieces_[std::size_t(b)] = std::string(1, char(b));
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    pieces_[kBaseVocab + i] = pieces_[std::size_t(merges_[i].first)] + pieces_[std::size_t(merges_[i].second)];
  }
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> seq(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) seq[i] = TokenId(static_cast<unsigned char>(text[i]));
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    apply_merge(seq, merges_[i].first, merges_[i].second, TokenId(kBaseVocab + i));
  }
  return seq;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id < 0 || std::size_t(id) >= vocab_size()) {
      throw IndexError("unknown token id " + std::to_string(id) + " at position " + std::to_string(i));
    }
    out += pieces_[std::size_t(id)];
  }
  return out;
}

std::string Tokenizer::identifier() const { return bpe_ ? "bpe-" + std::to_string(vocab_size()) : "byte"; }

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write tokenizer file " + path.string());
  out << "ftp-tokenizer 1\nmode " << (bpe_ ? "bpe" : "byte") << "\nmerges " << merges_.size() << "\n";
  for (const auto& [a, b] : merges_) out << a << ' ' << b << '\n';
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read tokenizer file " + path.string());
  std::string magic, mode_key, mode, merges_key;
  int version = 0;
  std::size_t count = 0;
  in >> magic >> version;
  if (magic != "ftp-tokenizer") throw FormatError("not a tokenizer file: " + path.string(), 0);
  if (version != 1) throw UnsupportedVersionError("tokenizer format version " + std::to_string(version));
  const auto header_offset = std::uint64_t(in.tellg());
  in >> mode_key >> mode >> merges_key >> count;
  if (!in || mode_key != "mode" || merges_key != "merges" || (mode != "bpe" && mode != "byte")) {
    throw FormatError("malformed tokenizer header in " + path.string(), header_offset);
  }
  Tokenizer t;
  t.bpe_ = mode == "bpe";
  for (std::size_t i = 0; i < count; ++i) {
    TokenId a = 0, b = 0;
    const auto offset = std::uint64_t(in.tellg());
    if (!(in >> a >> b) || a < 0 || b < 0 || std::size_t(a) >= kBaseVocab + i || std::size_t(b) >= kBaseVocab + i) {
      throw FormatError("bad merge entry " + std::to_string(i) + " in " + path.string(), offset);
    }
    t.merges_.emplace_back(a, b);
  }
  t.rebuild_pieces();
  return t;
}

}  // namespace ftp::data

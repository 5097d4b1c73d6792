#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ftp/numerics/ops.hpp"

namespace ftp::data {

using numerics::TokenId;

// Byte-level tokenizer with optional byte-pair merges. Ids 0..255 are raw
// bytes, 256 is end-of-sequence, 257 is padding, and merged pairs follow.
class Tokenizer {
 public:
  static constexpr TokenId kEos = 256;
  static constexpr TokenId kPad = 257;
  static constexpr std::size_t kBaseVocab = 258;

  static Tokenizer byte_level();
  // Learns up to vocab_size - 258 merges from text, most frequent pair first
  // (ties broken towards the smaller pair of ids).
  static Tokenizer train_bpe(std::string_view text, std::size_t vocab_size);
  static Tokenizer load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;

  std::vector<TokenId> encode(std::string_view text) const;
  // Special tokens decode to nothing. Unknown ids throw IndexError.
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t vocab_size() const { return kBaseVocab + merges_.size(); }
  TokenId eos_id() const { return kEos; }
  TokenId pad_id() const { return kPad; }
  bool is_bpe() const { return bpe_; }
  // "byte" or "bpe-<vocab_size>".
  std::string identifier() const;
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }

 private:
  bool bpe_ = false;
  std::vector<std::pair<TokenId, TokenId>> merges_;  // merge i creates id 258 + i
  std::vector<std::string> pieces_;                  // byte string of every id
  void rebuild_pieces();
};

}  // namespace ftp::data

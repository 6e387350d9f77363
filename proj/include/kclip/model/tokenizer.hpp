// SPDX-License-Identifier: Apache-2.0
//
// Small deterministic word-level tokenizer with byte fallback.
//
// Id layout: 0 <pad>, 1 <begin>, 2 <end>, 3 <head> (reserved, never
// emitted), 4..259 one token per byte, then whole words. The vocabulary
// file stores one token per line; the line number is the id.

#ifndef KCLIP_MODEL_TOKENIZER_HPP_
#define KCLIP_MODEL_TOKENIZER_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kclip::model {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadToken = 0;
inline constexpr TokenId kBeginToken = 1;
inline constexpr TokenId kEndToken = 2;
inline constexpr TokenId kHeadToken = 3;
inline constexpr TokenId kFirstByteToken = 4;
inline constexpr TokenId kFirstWordToken = kFirstByteToken + 256;

/// Fixed-length token ids; mask is 1 for every non-pad position.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;
  bool operator==(const TokenSequence&) const = default;
};

/// Lowercased words (runs of alphanumerics and non-ASCII bytes) and single
/// punctuation characters, in order.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  /// Reserved and byte tokens only.
  Vocabulary();

  /// Words from `corpus` ordered by descending count then lexicographically,
  /// truncated so that size() <= capacity.
  static Vocabulary build(std::span<const std::string> corpus, std::size_t capacity);
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  void write(std::ostream& out) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  /// Word id, or nothing for words that fall back to bytes.
  const TokenId* find(std::string_view word) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void append(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

class Tokenizer {
 public:
  Tokenizer(Vocabulary vocab, std::size_t length);

  /// [begin, tokens..., end, pad...], truncating content to length - 2.
  TokenSequence tokenize(std::string_view text) const;
  /// Content tokens without begin/end/padding or truncation.
  std::vector<TokenId> encode_words(std::string_view text) const;

  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  std::size_t length() const noexcept { return length_; }

 private:
  Vocabulary vocab_;
  std::size_t length_;
};

}  // namespace kclip::model

#endif  // KCLIP_MODEL_TOKENIZER_HPP_

// SPDX-License-Identifier: Apache-2.0

#include "kclip/model/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "kclip/errors.hpp"

namespace kclip::model {

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

std::string byte_token(unsigned b) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  return std::string("<0x") + kHex[b >> 4] + kHex[b & 15] + ">";
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (word_byte(c)) {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
      continue;
    }
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
    if (!std::isspace(c) && std::isprint(c)) out.emplace_back(1, static_cast<char>(c));
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<begin>", "<end>", "<head>"}) append(t);
  for (unsigned b = 0; b < 256; ++b) append(byte_token(b));
}

void Vocabulary::append(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  if (id >= kFirstWordToken && !index_.emplace(token, id).second) {
    throw DataError("duplicate vocabulary entry '" + token + "'");
  }
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::size_t capacity) {
  if (capacity < kFirstWordToken) {
    throw DataError("vocabulary capacity " + std::to_string(capacity) + " below the " +
                    std::to_string(kFirstWordToken) + " reserved and byte tokens");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus)
    for (auto& w : split_words(text)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [word, count] : ranked) {
    if (v.size() >= capacity) break;
    v.append(word);
  }
  return v;
}

Vocabulary Vocabulary::read(std::istream& in) {
  Vocabulary v;
  std::string line;
  for (std::size_t id = 0; std::getline(in, line); ++id) {
    if (id < kFirstWordToken) {
      if (line != v.tokens_[id]) {
        throw DataError("vocabulary line " + std::to_string(id + 1) + ": expected reserved token " +
                        v.tokens_[id]);
      }
      continue;
    }
    v.append(line);
  }
  if (v.size() < kFirstWordToken) throw DataError("vocabulary is missing reserved tokens");
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  return read(in);
}

void Vocabulary::write(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  write(out);
}

const TokenId* Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? nullptr : &it->second;
}

Tokenizer::Tokenizer(Vocabulary vocab, std::size_t length)
    : vocab_(std::move(vocab)), length_(length) {
  if (length_ < 2) throw std::invalid_argument("token sequence length must be at least 2");
}

std::vector<TokenId> Tokenizer::encode_words(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) {
    if (const TokenId* id = vocab_.find(w)) {
      ids.push_back(*id);
      continue;
    }
    for (unsigned char b : w) ids.push_back(kFirstByteToken + b);
  }
  return ids;
}

TokenSequence Tokenizer::tokenize(std::string_view text) const {
  std::vector<TokenId> words = encode_words(text);
  if (words.size() > length_ - 2) words.resize(length_ - 2);
  TokenSequence seq;
  seq.ids.assign(length_, kPadToken);
  seq.mask.assign(length_, 0);
  seq.ids[0] = kBeginToken;
  std::copy(words.begin(), words.end(), seq.ids.begin() + 1);
  seq.ids[words.size() + 1] = kEndToken;
  std::fill(seq.mask.begin(), seq.mask.begin() + static_cast<std::ptrdiff_t>(words.size() + 2), 1);
  return seq;
}

}  // namespace kclip::model

#pragma once

// Word-level tokenizer and vocabulary.
//
// A token is a maximal run of word characters (ASCII letters and digits, and
// every non-ASCII code point) or a single ASCII punctuation character.
// Whitespace separates tokens and belongs to none. Offsets count Unicode code
// points, not bytes.

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "notescore/spans.hpp"

namespace notescore {

struct Token {
  std::string text;  // UTF-8, ASCII-lowercased
  Span range;        // code-point offsets into the source text
};

// Throws DataError on malformed UTF-8.
std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(std::u32string_view text);

std::vector<Token> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kSep = 3;
  static constexpr std::string_view kSpecials[] = {"[PAD]", "[UNK]", "[MASK]", "[SEP]"};

  Vocabulary();
  // Specials first, then every distinct token of `texts` in byte order.
  static Vocabulary build(const std::vector<std::string>& texts);
  // Throws DataError unless the list starts with the special tokens and has
  // no duplicates.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  struct Empty {};
  explicit Vocabulary(Empty) {}

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace notescore

#include "notescore/tokenizer.hpp"

#include <algorithm>
#include <set>

#include "notescore/errors.hpp"

namespace notescore {

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      throw DataError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > text.size()) throw DataError("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) throw DataError("invalid UTF-8 continuation byte at offset " + std::to_string(i + k));
      cp = (cp << 6) | (b & 0x3F);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

namespace {

bool is_space(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v'; }

bool is_punct(char32_t c) {
  return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
}

bool is_control(char32_t c) { return c < 0x20 || c == 0x7F; }

char32_t ascii_lower(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + (U'a' - U'A') : c; }

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  const std::u32string chars = decode_utf8(text);
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < chars.size()) {
    const char32_t c = chars[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (is_punct(c) || is_control(c)) {
      tokens.push_back({encode_utf8(std::u32string(1, c)), {i, i + 1}});
      ++i;
      continue;
    }
    std::size_t j = i;
    std::u32string word;
    while (j < chars.size() && !is_space(chars[j]) && !is_punct(chars[j]) && !is_control(chars[j])) {
      word.push_back(ascii_lower(chars[j]));
      ++j;
    }
    tokens.push_back({encode_utf8(word), {i, j}});
    i = j;
  }
  return tokens;
}

Vocabulary::Vocabulary() { *this = from_tokens({}); }

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v{Empty{}};
  if (tokens.empty()) tokens.assign(std::begin(kSpecials), std::end(kSpecials));
  for (std::size_t i = 0; i < std::size(kSpecials); ++i) {
    if (i >= tokens.size() || tokens[i] != kSpecials[i]) {
      throw DataError("vocabulary must start with the special tokens [PAD] [UNK] [MASK] [SEP]");
    }
  }
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  std::set<std::string> distinct;
  for (const auto& t : texts)
    for (auto& tok : tokenize(t)) distinct.insert(std::move(tok.text));
  std::vector<std::string> tokens(std::begin(kSpecials), std::end(kSpecials));
  for (const auto& s : distinct)
    if (std::find(tokens.begin(), tokens.end(), s) == tokens.end()) tokens.push_back(s);
  return from_tokens(std::move(tokens));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

}  // namespace notescore

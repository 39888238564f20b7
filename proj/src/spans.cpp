#include "notescore/spans.hpp"

#include <algorithm>
#include <charconv>

#include "notescore/errors.hpp"

namespace notescore {

SpanSet::SpanSet(std::vector<Span> spans) : spans_(std::move(spans)) {
  for (const auto& s : spans_) {
    if (s.start >= s.end) {
      throw DataError("invalid span [" + std::to_string(s.start) + ", " + std::to_string(s.end) + ")");
    }
  }
}

SpanSet SpanSet::normalized(std::vector<Span> spans) {
  SpanSet checked(std::move(spans));
  auto& v = checked.spans_;
  std::sort(v.begin(), v.end());
  std::vector<Span> merged;
  for (const auto& s : v) {
    if (!merged.empty() && s.start <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, s.end);
    } else {
      merged.push_back(s);
    }
  }
  SpanSet out;
  out.spans_ = std::move(merged);
  return out;
}

bool SpanSet::is_normalized() const {
  for (std::size_t i = 1; i < spans_.size(); ++i)
    if (spans_[i].start <= spans_[i - 1].end) return false;
  return true;
}

std::size_t SpanSet::char_count() const {
  std::size_t n = 0;
  for (const auto& s : spans_) n += s.length();
  return n;
}

std::size_t SpanSet::max_end() const {
  std::size_t m = 0;
  for (const auto& s : spans_) m = std::max(m, s.end);
  return m;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::size_t parse_offset(std::string_view s, std::string_view whole) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("bad character offset '" + std::string(s) + "' in location '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

SpanSet parse_location(std::string_view text) {
  std::vector<Span> spans;
  std::string_view rest = trim(text);
  while (!rest.empty()) {
    const auto semi = rest.find(';');
    std::string_view item = trim(rest.substr(0, semi));
    rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
    if (item.empty()) continue;
    const auto space = item.find(' ');
    if (space == std::string_view::npos) {
      throw ParseError("location item '" + std::string(item) + "' needs 'start end'");
    }
    Span s{parse_offset(trim(item.substr(0, space)), text), parse_offset(trim(item.substr(space + 1)), text)};
    if (s.start >= s.end) throw ParseError("empty or reversed span in location '" + std::string(text) + "'");
    spans.push_back(s);
  }
  return SpanSet(std::move(spans));
}

std::string format_location(const SpanSet& spans) {
  std::string out;
  for (const auto& s : spans.spans()) {
    if (!out.empty()) out += ';';
    out += std::to_string(s.start);
    out += ' ';
    out += std::to_string(s.end);
  }
  return out;
}

}  // namespace notescore

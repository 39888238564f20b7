#pragma once

// Half-open character intervals [start, end) into a note.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace notescore {

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

class SpanSet {
 public:
  SpanSet() = default;
  // Keeps the spans as given; see is_normalized(). Throws DataError when a
  // span has start >= end.
  explicit SpanSet(std::vector<Span> spans);

  // Sorted, with overlapping or touching spans merged.
  static SpanSet normalized(std::vector<Span> spans);

  const std::vector<Span>& spans() const { return spans_; }
  bool empty() const { return spans_.empty(); }
  std::size_t size() const { return spans_.size(); }
  // True when sorted by start and pairwise disjoint and non-touching.
  bool is_normalized() const;
  SpanSet normalize() const { return normalized(spans_); }
  // Total characters covered (requires normalization to be meaningful).
  std::size_t char_count() const;
  std::size_t max_end() const;

  friend bool operator==(const SpanSet&, const SpanSet&) = default;

 private:
  std::vector<Span> spans_;
};

// "5 9;12 15" <-> {[5,9),[12,15)}. Empty text is the empty set. Parsing does
// not normalize.
SpanSet parse_location(std::string_view text);
std::string format_location(const SpanSet& spans);

}  // namespace notescore

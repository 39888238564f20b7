#pragma once

// Seeded synthetic corpus for the word-locating task. Notes are random
// sentences over a fixed word list; each feature is one word of that list
// and its gold spans are every occurrence of the word in the note.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "notescore/corpus.hpp"

namespace notescore {

struct SyntheticOptions {
  std::size_t labeled_notes = 250;
  std::size_t unlabeled_notes = 200;
  std::size_t cases = 4;
  std::size_t features_per_case = 3;
  std::size_t vocab_words = 200;
  std::size_t min_words = 15;
  std::size_t max_words = 40;
  double feature_prob = 0.5;  // chance a case feature occurs in a note

  void validate() const;
};

// Distinct lowercase ASCII words, independent of any seed.
std::vector<std::string> synthetic_word_list(std::size_t count);

// Notes 1..labeled_notes carry one annotation row per feature of their case
// (empty location when absent); the following unlabeled_notes ids carry
// none. Identical output for identical (options, seed).
NoteCorpus generate_synthetic(const SyntheticOptions& options, std::uint64_t seed);

// Character spans of every token of `text` equal to `word`.
SpanSet word_occurrences(const std::string& text, const std::string& word);

}  // namespace notescore

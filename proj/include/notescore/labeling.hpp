#pragma once

// Model inputs for one (note, feature) pair and the bridge between character
// spans and per-token labels.
//
// Input packing: feature tokens, [SEP], note tokens. Only note tokens carry
// labels; a note token is positive when its character range overlaps a gold
// span by at least one character.

#include <cstdint>
#include <span>
#include <vector>

#include "notescore/corpus.hpp"
#include "notescore/spans.hpp"
#include "notescore/tokenizer.hpp"

namespace notescore {

struct TokenizedExample {
  NoteId note_id = 0;
  FeatureId feature_id = 0;
  std::vector<int> token_ids;
  // Character ranges of the note tokens, ascending; token_ids[note_offset + i]
  // covers token_char_ranges[i].
  std::vector<Span> token_char_ranges;
  std::size_t note_offset = 0;
  std::vector<std::uint8_t> binary_labels;  // one per token, 0 outside the note
  std::vector<std::uint8_t> pad_mask;       // one per token, 1 = padding
  SpanSet gold;                             // empty for unlabeled pairs

  std::size_t length() const { return token_ids.size(); }
  std::size_t note_token_count() const { return token_char_ranges.size(); }
};

// label[i] = 1 iff ranges[i] overlaps some span. Throws DataError naming the
// note when a span ends past `text_length`.
std::vector<std::uint8_t> project_spans_to_labels(const SpanSet& gold, std::span<const Span> ranges,
                                                  std::size_t text_length, NoteId note_id);

// Union of the ranges of positive tokens, normalized.
SpanSet labels_to_spans(std::span<const std::uint8_t> labels, std::span<const Span> ranges);

// Note tokens beyond max_seq_len are dropped. `gold` may be null (unlabeled).
TokenizedExample build_example(const PatientNote& note, const Feature& feature, const SpanSet* gold,
                               const Vocabulary& vocab, std::size_t max_seq_len);

// Builds one example per annotation. Throws IntegrityError for dangling ids.
std::vector<TokenizedExample> build_examples(const NoteCorpus& corpus, std::span<const AnnotatedExample> annotations,
                                             const Vocabulary& vocab, std::size_t max_seq_len);

struct MaskedSequence {
  std::vector<int> token_ids;         // input with selected positions replaced
  std::vector<std::size_t> positions;  // ascending
  std::vector<int> original_ids;       // same order as positions
};

// Each non-pad token is selected independently with probability mask_prob
// and replaced by mask_id. Deterministic in (ids, mask_prob, seed).
MaskedSequence mask_for_mlm(std::span<const int> token_ids, double mask_prob, std::uint64_t seed, int mask_id,
                            int pad_id);

}  // namespace notescore

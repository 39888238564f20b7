#include "notescore/labeling.hpp"

#include "notescore/errors.hpp"
#include "notescore/rng.hpp"

namespace notescore {

std::vector<std::uint8_t> project_spans_to_labels(const SpanSet& gold, std::span<const Span> ranges,
                                                  std::size_t text_length, NoteId note_id) {
  if (gold.max_end() > text_length) {
    throw DataError("span out of bounds in note " + std::to_string(note_id) + ": end " +
                    std::to_string(gold.max_end()) + " > length " + std::to_string(text_length));
  }
  std::vector<std::uint8_t> labels(ranges.size(), 0);
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    for (const auto& s : gold.spans()) {
      if (s.start < ranges[i].end && ranges[i].start < s.end) {
        labels[i] = 1;
        break;
      }
    }
  }
  return labels;
}

SpanSet labels_to_spans(std::span<const std::uint8_t> labels, std::span<const Span> ranges) {
  if (labels.size() != ranges.size()) throw ShapeError("labels_to_spans: label and range counts differ");
  std::vector<Span> spans;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0) spans.push_back(ranges[i]);
  return SpanSet::normalized(std::move(spans));
}

TokenizedExample build_example(const PatientNote& note, const Feature& feature, const SpanSet* gold,
                               const Vocabulary& vocab, std::size_t max_seq_len) {
  TokenizedExample ex;
  ex.note_id = note.note_id;
  ex.feature_id = feature.feature_id;
  for (const auto& t : tokenize(feature.feature_text)) ex.token_ids.push_back(vocab.id(t.text));
  ex.token_ids.push_back(Vocabulary::kSep);
  if (ex.token_ids.size() >= max_seq_len) {
    throw LengthError("feature " + std::to_string(feature.feature_id) + " leaves no room for note tokens");
  }
  ex.note_offset = ex.token_ids.size();
  const auto note_tokens = tokenize(note.text);
  const std::size_t room = max_seq_len - ex.note_offset;
  for (std::size_t i = 0; i < note_tokens.size() && i < room; ++i) {
    ex.token_ids.push_back(vocab.id(note_tokens[i].text));
    ex.token_char_ranges.push_back(note_tokens[i].range);
  }
  ex.binary_labels.assign(ex.token_ids.size(), 0);
  if (gold != nullptr) {
    const auto labels = project_spans_to_labels(*gold, ex.token_char_ranges, char_length(note.text), note.note_id);
    std::copy(labels.begin(), labels.end(), ex.binary_labels.begin() + static_cast<std::ptrdiff_t>(ex.note_offset));
    ex.gold = *gold;
  }
  ex.pad_mask.assign(ex.token_ids.size(), 0);
  return ex;
}

std::vector<TokenizedExample> build_examples(const NoteCorpus& corpus, std::span<const AnnotatedExample> annotations,
                                             const Vocabulary& vocab, std::size_t max_seq_len) {
  const auto notes = corpus.note_index();
  const auto features = corpus.feature_index();
  std::vector<TokenizedExample> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) {
    auto n = notes.find(a.note_id);
    auto f = features.find(a.feature_id);
    if (n == notes.end() || f == features.end()) {
      throw IntegrityError("annotation (" + std::to_string(a.note_id) + ", " + std::to_string(a.feature_id) +
                           ") does not resolve");
    }
    out.push_back(build_example(corpus.notes[n->second], corpus.features[f->second], &a.gold, vocab, max_seq_len));
  }
  return out;
}

MaskedSequence mask_for_mlm(std::span<const int> token_ids, double mask_prob, std::uint64_t seed, int mask_id,
                            int pad_id) {
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) {
    throw ConfigError("mask_prob must lie in (0, 1), got " + std::to_string(mask_prob));
  }
  MaskedSequence out;
  out.token_ids.assign(token_ids.begin(), token_ids.end());
  Rng rng(seed);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] == pad_id) continue;
    if (rng.bernoulli(mask_prob)) {
      out.positions.push_back(i);
      out.original_ids.push_back(token_ids[i]);
      out.token_ids[i] = mask_id;
    }
  }
  return out;
}

}  // namespace notescore

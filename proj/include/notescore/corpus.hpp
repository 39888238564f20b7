#pragma once

// Patient notes, features and span annotations, plus the three-file TSV
// format they are stored in:
//
//   notes.tsv        note_id <TAB> case_id <TAB> text
//   features.tsv     feature_id <TAB> case_id <TAB> feature_text
//   annotations.tsv  note_id <TAB> feature_id <TAB> location
//
// Each file starts with that header line. Text fields escape backslash, tab,
// newline and carriage return as \\ \t \n \r. `location` is a
// semicolon-separated list of "start end" code-point offsets, empty when the
// feature is absent from the note. A note with at least one annotation row
// is labeled; every other note belongs to the unlabeled pool.

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "notescore/spans.hpp"

namespace notescore {

using NoteId = std::int64_t;
using FeatureId = std::int64_t;

struct PatientNote {
  NoteId note_id = 0;
  std::int64_t case_id = 0;
  std::string text;
  friend bool operator==(const PatientNote&, const PatientNote&) = default;
};

struct Feature {
  FeatureId feature_id = 0;
  std::int64_t case_id = 0;
  std::string feature_text;
  friend bool operator==(const Feature&, const Feature&) = default;
};

enum class Provenance { human, pseudo };

struct AnnotatedExample {
  NoteId note_id = 0;
  FeatureId feature_id = 0;
  SpanSet gold;
  Provenance provenance = Provenance::human;
  friend bool operator==(const AnnotatedExample&, const AnnotatedExample&) = default;
};

struct NoteCorpus {
  std::vector<PatientNote> notes;
  std::vector<Feature> features;
  std::vector<AnnotatedExample> annotations;

  std::unordered_map<NoteId, std::size_t> note_index() const;
  std::unordered_map<FeatureId, std::size_t> feature_index() const;
  // Sorted ascending.
  std::vector<NoteId> labeled_note_ids() const;
  std::vector<NoteId> unlabeled_note_ids() const;

  // Unique ids, non-empty texts, resolvable references, spans inside their
  // note. Throws IntegrityError / DataError.
  void validate() const;

  friend bool operator==(const NoteCorpus&, const NoteCorpus&) = default;
};

struct CorpusPaths {
  std::filesystem::path notes;
  std::filesystem::path features;
  std::filesystem::path annotations;

  static CorpusPaths in_directory(const std::filesystem::path& dir);
};

// Reads, normalizes every gold SpanSet and validates. ParseError messages
// name file and line.
NoteCorpus load_corpus(const CorpusPaths& paths);
void save_corpus(const NoteCorpus& corpus, const CorpusPaths& paths);

// Annotation file alone. Spans are returned exactly as written (no
// normalization) so callers can reject overlapping input.
std::vector<AnnotatedExample> load_annotations(const std::filesystem::path& path,
                                               Provenance provenance = Provenance::human);
void save_annotations(const std::vector<AnnotatedExample>& annotations, const std::filesystem::path& path);

std::size_t char_length(const std::string& text);

}  // namespace notescore

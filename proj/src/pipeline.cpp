#include "notescore/pipeline.hpp"

#include <algorithm>
#include <set>

#include "notescore/errors.hpp"

namespace notescore {

CorpusSplit split_corpus(const NoteCorpus& corpus, std::size_t heldout_notes) {
  const auto labeled = corpus.labeled_note_ids();
  if (heldout_notes >= labeled.size()) {
    throw ConfigError("heldout_notes (" + std::to_string(heldout_notes) + ") leaves no training notes out of " +
                      std::to_string(labeled.size()));
  }
  const std::set<NoteId> heldout(labeled.end() - static_cast<std::ptrdiff_t>(heldout_notes), labeled.end());
  CorpusSplit split;
  for (const auto& a : corpus.annotations) (heldout.contains(a.note_id) ? split.heldout : split.train).push_back(a);

  const auto unlabeled = corpus.unlabeled_note_ids();
  const auto notes = corpus.note_index();
  for (NoteId id : unlabeled) {
    const auto& note = corpus.notes[notes.at(id)];
    for (const auto& f : corpus.features)
      if (f.case_id == note.case_id) split.unlabeled.push_back({id, f.feature_id, {}, Provenance::pseudo});
  }
  return split;
}

Vocabulary corpus_vocabulary(const NoteCorpus& corpus) {
  std::vector<std::string> texts;
  texts.reserve(corpus.notes.size() + corpus.features.size());
  for (const auto& n : corpus.notes) texts.push_back(n.text);
  for (const auto& f : corpus.features) texts.push_back(f.feature_text);
  return Vocabulary::build(texts);
}

std::vector<TokenizedExample> build_unlabeled_examples(const NoteCorpus& corpus,
                                                       std::span<const AnnotatedExample> pairs,
                                                       const Vocabulary& vocab, std::size_t max_seq_len) {
  const auto notes = corpus.note_index();
  const auto features = corpus.feature_index();
  std::vector<TokenizedExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto n = notes.find(p.note_id);
    auto f = features.find(p.feature_id);
    if (n == notes.end() || f == features.end()) {
      throw IntegrityError("pair (" + std::to_string(p.note_id) + ", " + std::to_string(p.feature_id) +
                           ") does not resolve");
    }
    out.push_back(build_example(corpus.notes[n->second], corpus.features[f->second], nullptr, vocab, max_seq_len));
  }
  return out;
}

}  // namespace notescore

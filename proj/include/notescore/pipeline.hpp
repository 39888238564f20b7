#pragma once

// Glue shared by the command-line tool and the acceptance checks: the
// train/held-out split, the unlabeled pool and example construction.

#include <cstddef>
#include <vector>

#include "notescore/corpus.hpp"
#include "notescore/labeling.hpp"
#include "notescore/tokenizer.hpp"

namespace notescore {

struct CorpusSplit {
  std::vector<AnnotatedExample> train;
  std::vector<AnnotatedExample> heldout;
  // One empty-gold pair per unlabeled note and feature of the note's case.
  std::vector<AnnotatedExample> unlabeled;
};

// The `heldout_notes` labeled notes with the largest ids are held out.
// Throws ConfigError when that leaves nothing to train on.
CorpusSplit split_corpus(const NoteCorpus& corpus, std::size_t heldout_notes);

// Every note text and feature text.
Vocabulary corpus_vocabulary(const NoteCorpus& corpus);

// Like build_examples, but examples built from `pairs` carry no gold.
std::vector<TokenizedExample> build_unlabeled_examples(const NoteCorpus& corpus,
                                                       std::span<const AnnotatedExample> pairs,
                                                       const Vocabulary& vocab, std::size_t max_seq_len);

}  // namespace notescore

#include "notescore/synthetic.hpp"

#include <algorithm>
#include <cctype>

#include "notescore/errors.hpp"
#include "notescore/rng.hpp"
#include "notescore/tokenizer.hpp"

namespace notescore {

void SyntheticOptions::validate() const {
  if (labeled_notes == 0) throw ConfigError("synthetic labeled_notes must be positive");
  if (cases == 0 || features_per_case == 0) throw ConfigError("synthetic cases and features_per_case must be positive");
  if (min_words == 0 || min_words > max_words) throw ConfigError("synthetic word counts must satisfy 0 < min <= max");
  if (cases * features_per_case >= vocab_words) throw ConfigError("synthetic vocabulary too small for the features");
  if (vocab_words > 400) throw ConfigError("synthetic vocab_words is limited to 400");
  if (!(feature_prob >= 0.0 && feature_prob <= 1.0)) throw ConfigError("synthetic feature_prob must lie in [0, 1]");
}

std::vector<std::string> synthetic_word_list(std::size_t count) {
  static constexpr const char* kSyllables[] = {"ba", "ke", "di", "mo", "lu", "ra", "se", "ti", "no", "pu",
                                               "ga", "fe", "hi", "jo", "vu", "za", "we", "ni", "ko", "mu"};
  constexpr std::size_t n = std::size(kSyllables);
  std::vector<std::string> words;
  words.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    words.push_back(std::string(kSyllables[i % n]) + kSyllables[(i / n) % n] + kSyllables[(i * 7 + 3) % n]);
  }
  return words;
}

SpanSet word_occurrences(const std::string& text, const std::string& word) {
  std::vector<Span> spans;
  for (const auto& t : tokenize(text))
    if (t.text == word) spans.push_back(t.range);
  return SpanSet::normalized(std::move(spans));
}

namespace {

std::string render(const std::vector<std::string>& words, Rng& rng) {
  std::string text;
  bool sentence_start = true;
  std::size_t since_break = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (!text.empty()) text += ' ';
    std::string w = words[i];
    if (sentence_start) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    text += w;
    sentence_start = false;
    ++since_break;
    if (i + 1 == words.size()) {
      text += '.';
    } else if (since_break >= 4 && rng.bernoulli(0.2)) {
      text += '.';
      sentence_start = true;
      since_break = 0;
    } else if (since_break >= 2 && rng.bernoulli(0.08)) {
      text += ',';
    }
  }
  return text;
}

}  // namespace

NoteCorpus generate_synthetic(const SyntheticOptions& options, std::uint64_t seed) {
  options.validate();
  Rng rng(derive_seed(seed, "synthetic"));
  const auto words = synthetic_word_list(options.vocab_words);

  std::vector<std::size_t> order(words.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t n_features = options.cases * options.features_per_case;
  std::vector<std::string> filler;
  for (std::size_t i = n_features; i < order.size(); ++i) filler.push_back(words[order[i]]);

  NoteCorpus corpus;
  for (std::size_t c = 0; c < options.cases; ++c) {
    for (std::size_t k = 0; k < options.features_per_case; ++k) {
      Feature f;
      f.case_id = static_cast<std::int64_t>(c);
      f.feature_id = static_cast<FeatureId>(c * 100 + k + 1);
      f.feature_text = words[order[c * options.features_per_case + k]];
      corpus.features.push_back(f);
    }
  }

  const std::size_t total = options.labeled_notes + options.unlabeled_notes;
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t case_id = i % options.cases;
    const std::size_t len = options.min_words + rng.below(options.max_words - options.min_words + 1);
    std::vector<std::string> note_words(len);
    for (auto& w : note_words) w = filler[rng.below(filler.size())];
    for (std::size_t k = 0; k < options.features_per_case; ++k) {
      if (!rng.bernoulli(options.feature_prob)) continue;
      const std::string& fw = corpus.features[case_id * options.features_per_case + k].feature_text;
      const std::size_t copies = rng.bernoulli(0.25) ? 2 : 1;
      for (std::size_t c = 0; c < copies; ++c) {
        // Never next to another copy of the same word: adjacent copies
        // would be one merged span after decoding.
        for (int attempt = 0; attempt < 64; ++attempt) {
          const std::size_t pos = rng.below(note_words.size());
          const bool clash = note_words[pos] == fw || (pos > 0 && note_words[pos - 1] == fw) ||
                             (pos + 1 < note_words.size() && note_words[pos + 1] == fw);
          if (clash) continue;
          note_words[pos] = fw;
          break;
        }
      }
    }
    PatientNote note;
    note.note_id = static_cast<NoteId>(i + 1);
    note.case_id = static_cast<std::int64_t>(case_id);
    note.text = render(note_words, rng);
    if (i < options.labeled_notes) {
      for (std::size_t k = 0; k < options.features_per_case; ++k) {
        const Feature& f = corpus.features[case_id * options.features_per_case + k];
        corpus.annotations.push_back({note.note_id, f.feature_id, word_occurrences(note.text, f.feature_text),
                                      Provenance::human});
      }
    }
    corpus.notes.push_back(std::move(note));
  }
  corpus.validate();
  return corpus;
}

}  // namespace notescore

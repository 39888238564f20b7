#pragma once

// Masked-token pretraining, span fine-tuning and the pseudo-labeling
// regimen (generate -> train on a random subset -> re-fine-tune).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "notescore/corpus.hpp"
#include "notescore/eval.hpp"
#include "notescore/labeling.hpp"
#include "notescore/model.hpp"
#include "notescore/tokenizer.hpp"

namespace notescore {

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double mask_prob = 0.15;
  double pseudo_fraction = 0.5;
  std::size_t pseudo_epochs = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double threshold = 0.5;   // decode threshold for held-out scoring
  std::size_t workers = 1;  // pseudo-label generation fan-out

  void validate() const;
};

struct EpochRecord {
  std::string stage;
  std::size_t epoch = 0;  // 1-based within its stage
  double loss = 0.0;
  std::size_t steps = 0;
  std::optional<double> heldout_f1;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::optional<double> final_metric;  // held-out micro-F1
  double wall_seconds = 0.0;

  // One JSON object per epoch. Timing is left out so the stream is
  // reproducible.
  std::string to_jsonl() const;
  std::string summary() const;
  void append(const TrainReport& other);
};

struct TrainResult {
  EncoderModel model;
  TrainReport report;
};

// Token id sequences of every note (note tokens only), truncated to
// max_seq_len.
std::vector<std::vector<int>> note_sequences(const NoteCorpus& corpus, const Vocabulary& vocab, std::size_t max_seq_len);

// Fresh model (seeded from config.seed) trained on masked-token recovery.
// Throws DivergenceError on a non-finite loss.
TrainResult pretrain_mlm(const std::vector<std::vector<int>>& sequences, const ModelConfig& model_config,
                         const TrainConfig& config);
TrainResult pretrain_mlm(const NoteCorpus& corpus, const Vocabulary& vocab, const ModelConfig& model_config,
                         const TrainConfig& config);

// Trains a copy of `model` with per-token BCE. Held-out micro-F1 is recorded
// per epoch when `validation` is non-empty.
TrainResult finetune_span(const EncoderModel& model, std::span<const TokenizedExample> train,
                          const TrainConfig& config, std::span<const TokenizedExample> validation = {});

// sigmoid(span logit) for each note token of the example.
std::vector<double> note_token_probabilities(const EncoderModel& model, const TokenizedExample& example);

SpanSet predict_spans(const EncoderModel& model, const TokenizedExample& example, double threshold = 0.5);

MetricResult evaluate_model(const EncoderModel& model, std::span<const TokenizedExample> examples,
                            double threshold = 0.5);

// Per-token label = 1 iff sigmoid(logit) > 0.5 (ties go to 0), converted to
// a SpanSet. Each example uses one forward pass of one model; results do not
// depend on `workers`.
std::vector<AnnotatedExample> generate_pseudo_labels(const EncoderModel& model,
                                                     std::span<const TokenizedExample> unlabeled,
                                                     std::size_t workers = 1);

// Seeded uniform subset of round(fraction * n) indices, ascending.
std::vector<std::size_t> select_pseudo_subset(std::size_t n, double fraction, std::uint64_t seed);

// Throws LeakageError when any unlabeled note_id is also a validation note_id.
void check_leakage(std::span<const TokenizedExample> unlabeled, std::span<const TokenizedExample> validation);

struct RegimenResult {
  EncoderModel model;
  TrainReport report;
  std::vector<AnnotatedExample> pseudo_labels;     // every generated label
  std::vector<std::size_t> pseudo_subset;          // indices trained on
};

// 1) pseudo-label every unlabeled pair, 2) train config.pseudo_epochs epochs
// on a config.pseudo_fraction subset, 3) fine-tune on `labeled` as
// finetune_span would.
RegimenResult pseudo_label_regimen(const EncoderModel& model, std::span<const TokenizedExample> labeled,
                                   std::span<const TokenizedExample> unlabeled,
                                   std::span<const TokenizedExample> validation, const TrainConfig& config);

}  // namespace notescore

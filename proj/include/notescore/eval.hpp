#pragma once

// Span decoding and micro-averaged character-level F1.

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "notescore/corpus.hpp"
#include "notescore/spans.hpp"

namespace notescore {

struct MetricResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positive_chars = 0;
  std::size_t predicted_chars = 0;
  std::size_t gold_chars = 0;
};

// Ranges of tokens with probability > threshold, merged when they overlap or
// when neighbouring tokens are separated by at most one character. `ranges`
// must come from tokenize(), which leaves only whitespace between tokens.
SpanSet decode_spans(std::span<const double> probabilities, std::span<const Span> ranges, double threshold = 0.5);

struct SpanPair {
  SpanSet gold;
  SpanSet pred;
};

// Pools character counts over all pairs: P = TP/|pred|, R = TP/|gold|,
// F1 = 2PR/(P+R). Zero predicted chars gives P = 0, zero gold chars gives
// R = 0; if both totals are zero F1 is 1. Throws ContractError if any
// SpanSet is not normalized.
MetricResult micro_f1(std::span<const SpanPair> pairs);

// Character overlap of two normalized sets.
std::size_t overlap_chars(const SpanSet& a, const SpanSet& b);

struct EvaluationReport {
  MetricResult overall;
  std::map<FeatureId, MetricResult> per_feature;
  std::size_t pairs = 0;
};

// Pairs gold and predicted annotations by (note_id, feature_id); a pair
// missing on one side counts as an empty SpanSet there.
EvaluationReport evaluate(std::span<const AnnotatedExample> gold, std::span<const AnnotatedExample> pred);

}  // namespace notescore

#include "notescore/eval.hpp"

#include <algorithm>
#include <set>

#include "notescore/errors.hpp"

namespace notescore {

SpanSet decode_spans(std::span<const double> probabilities, std::span<const Span> ranges, double threshold) {
  if (probabilities.size() != ranges.size()) throw ShapeError("decode_spans: probability and range counts differ");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("decode threshold must lie in (0, 1)");
  // Characters between consecutive tokens are whitespace, so a gap of at most
  // one between neighbouring positive tokens is one whitespace character.
  std::vector<Span> spans;
  std::size_t prev = ranges.size();
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (!(probabilities[i] > threshold)) continue;
    const Span r = ranges[i];
    const bool neighbour = prev + 1 == i;
    prev = i;
    if (!spans.empty() && (r.start <= spans.back().end || (neighbour && r.start <= spans.back().end + 1))) {
      spans.back().end = std::max(spans.back().end, r.end);
    } else {
      spans.push_back(r);
    }
  }
  return SpanSet::normalized(std::move(spans));
}

std::size_t overlap_chars(const SpanSet& a, const SpanSet& b) {
  std::size_t total = 0;
  std::size_t i = 0, j = 0;
  const auto& x = a.spans();
  const auto& y = b.spans();
  while (i < x.size() && j < y.size()) {
    const std::size_t lo = std::max(x[i].start, y[j].start);
    const std::size_t hi = std::min(x[i].end, y[j].end);
    if (lo < hi) total += hi - lo;
    if (x[i].end < y[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return total;
}

namespace {

MetricResult finish(std::size_t tp, std::size_t pred, std::size_t gold) {
  MetricResult r;
  r.true_positive_chars = tp;
  r.predicted_chars = pred;
  r.gold_chars = gold;
  if (pred == 0 && gold == 0) {
    r.precision = 1.0;
    r.recall = 1.0;
    r.f1 = 1.0;
    return r;
  }
  r.precision = pred == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred);
  r.recall = gold == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold);
  const double denom = r.precision + r.recall;
  r.f1 = denom > 0.0 ? 2.0 * r.precision * r.recall / denom : 0.0;
  return r;
}

}  // namespace

MetricResult micro_f1(std::span<const SpanPair> pairs) {
  std::size_t tp = 0, pred = 0, gold = 0;
  for (const auto& p : pairs) {
    if (!p.gold.is_normalized() || !p.pred.is_normalized()) {
      throw ContractError("micro_f1: overlapping or unsorted spans; normalize first");
    }
    tp += overlap_chars(p.gold, p.pred);
    pred += p.pred.char_count();
    gold += p.gold.char_count();
  }
  return finish(tp, pred, gold);
}

EvaluationReport evaluate(std::span<const AnnotatedExample> gold, std::span<const AnnotatedExample> pred) {
  std::map<std::pair<NoteId, FeatureId>, SpanPair> joined;
  std::set<std::pair<NoteId, FeatureId>> seen_gold, seen_pred;
  for (const auto& g : gold) {
    if (!seen_gold.insert({g.note_id, g.feature_id}).second) {
      throw ContractError("duplicate gold row for note " + std::to_string(g.note_id) + " feature " +
                          std::to_string(g.feature_id));
    }
    joined[{g.note_id, g.feature_id}].gold = g.gold;
  }
  for (const auto& p : pred) {
    if (!seen_pred.insert({p.note_id, p.feature_id}).second) {
      throw ContractError("duplicate predicted row for note " + std::to_string(p.note_id) + " feature " +
                          std::to_string(p.feature_id));
    }
    joined[{p.note_id, p.feature_id}].pred = p.gold;
  }
  std::vector<SpanPair> all;
  std::map<FeatureId, std::vector<SpanPair>> by_feature;
  for (const auto& [key, pair] : joined) {
    all.push_back(pair);
    by_feature[key.second].push_back(pair);
  }
  EvaluationReport report;
  report.overall = micro_f1(all);
  report.pairs = all.size();
  for (const auto& [fid, pairs] : by_feature) report.per_feature[fid] = micro_f1(pairs);
  return report;
}

}  // namespace notescore

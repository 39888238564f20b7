#include "notescore/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "notescore/errors.hpp"
#include "notescore/losses.hpp"
#include "notescore/optimizer.hpp"
#include "notescore/rng.hpp"

namespace notescore {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw ConfigError("mask_prob must lie in (0, 1)");
  if (!(pseudo_fraction > 0.0 && pseudo_fraction <= 1.0)) throw ConfigError("pseudo_fraction must lie in (0, 1]");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (workers == 0) throw ConfigError("workers must be positive");
}

std::string TrainReport::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["stage"] = e.stage;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["steps"] = e.steps;
    if (e.heldout_f1) j["heldout_f1"] = *e.heldout_f1;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string TrainReport::summary() const {
  std::ostringstream os;
  for (const auto& e : epochs) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s epoch %3zu  loss %.6f  steps %zu", e.stage.c_str(), e.epoch, e.loss, e.steps);
    os << line;
    if (e.heldout_f1) {
      std::snprintf(line, sizeof line, "  heldout_f1 %.4f", *e.heldout_f1);
      os << line;
    }
    os << '\n';
  }
  if (final_metric) {
    char line[80];
    std::snprintf(line, sizeof line, "final heldout micro-F1: %.4f\n", *final_metric);
    os << line;
  }
  char line[80];
  std::snprintf(line, sizeof line, "wall time: %.2f s\n", wall_seconds);
  os << line;
  return os.str();
}

void TrainReport::append(const TrainReport& other) {
  epochs.insert(epochs.end(), other.epochs.begin(), other.epochs.end());
  if (other.final_metric) final_metric = other.final_metric;
  wall_seconds += other.wall_seconds;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Tensor> trainable(const EncoderModel& model) {
  std::vector<Tensor> out;
  for (auto& p : model.parameters()) out.push_back(p.tensor);
  return out;
}

std::unique_ptr<Optimizer> make_optimizer(const EncoderModel& model, const TrainConfig& config) {
  if (config.optimizer == OptimizerKind::sgd) return std::make_unique<Sgd>(trainable(model), config.learning_rate);
  AdamOptions opt;
  opt.learning_rate = config.learning_rate;
  return std::make_unique<Adam>(trainable(model), opt);
}

void check_finite(double loss, std::string_view stage, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw DivergenceError(std::string(stage) + ": non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                          std::to_string(step));
  }
}

std::vector<std::uint8_t> note_mask(const TokenizedExample& ex) {
  std::vector<std::uint8_t> mask(ex.length(), 0);
  for (std::size_t i = ex.note_offset; i < ex.length(); ++i) mask[i] = ex.pad_mask.empty() || ex.pad_mask[i] == 0;
  return mask;
}

std::size_t counted_tokens(const TokenizedExample& ex) {
  const auto m = note_mask(ex);
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
}

// One pass over `items` in a seeded order. Returns the token-weighted mean
// loss and the number of optimizer steps.
std::pair<double, std::size_t> span_epoch(EncoderModel& model, Optimizer& opt,
                                          const std::vector<const TokenizedExample*>& items, std::size_t batch_size,
                                          Rng& rng, std::string_view stage, std::size_t epoch) {
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  double weighted = 0.0;
  std::size_t tokens = 0, steps = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::size_t batch_tokens = 0;
    for (std::size_t i = start; i < end; ++i) batch_tokens += counted_tokens(*items[order[i]]);
    if (batch_tokens == 0) continue;
    Tape tape;
    TapeScope scope(tape);
    Tensor loss;
    for (std::size_t i = start; i < end; ++i) {
      const auto& ex = *items[order[i]];
      const std::size_t n = counted_tokens(ex);
      if (n == 0) continue;
      const Tensor hidden = model.encode(ex.token_ids, ex.pad_mask);
      const Tensor term = scale(bce_with_logits(model.span_logits(hidden), ex.binary_labels, note_mask(ex)),
                                static_cast<double>(n) / static_cast<double>(batch_tokens));
      loss = loss.defined() ? add(loss, term) : term;
    }
    const double value = loss.item();
    check_finite(value, stage, epoch, steps + 1);
    tape.backward(loss);
    opt.step();
    weighted += value * static_cast<double>(batch_tokens);
    tokens += batch_tokens;
    ++steps;
  }
  return {tokens > 0 ? weighted / static_cast<double>(tokens) : 0.0, steps};
}

}  // namespace

std::vector<std::vector<int>> note_sequences(const NoteCorpus& corpus, const Vocabulary& vocab, std::size_t max_seq_len) {
  std::vector<std::vector<int>> out;
  for (const auto& note : corpus.notes) {
    std::vector<int> ids;
    for (const auto& t : tokenize(note.text)) {
      if (ids.size() == max_seq_len) break;
      ids.push_back(vocab.id(t.text));
    }
    if (!ids.empty()) out.push_back(std::move(ids));
  }
  return out;
}

TrainResult pretrain_mlm(const std::vector<std::vector<int>>& sequences, const ModelConfig& model_config,
                         const TrainConfig& config) {
  config.validate();
  model_config.validate();
  if (sequences.empty()) throw ContractError("pretrain_mlm: empty corpus");
  const auto start = Clock::now();
  TrainResult result{EncoderModel::initialize(model_config, derive_seed(config.seed, "init")), {}};
  EncoderModel& model = result.model;
  auto opt = make_optimizer(model, config);
  Rng order_rng(derive_seed(config.seed, "mlm-order"));
  const std::uint64_t mask_seed = derive_seed(config.seed, "mlm-mask");
  std::vector<std::size_t> order(sequences.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    double weighted = 0.0;
    std::size_t targets_seen = 0, steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<MaskedSequence> masked;
      std::size_t batch_targets = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint64_t s = splitmix64(mask_seed ^ splitmix64(epoch * 0x100000001ULL + order[i]));
        masked.push_back(mask_for_mlm(sequences[order[i]], config.mask_prob, s, model_config.mask_token_id,
                                      model_config.pad_token_id));
        batch_targets += masked.back().positions.size();
      }
      if (batch_targets == 0) continue;
      Tape tape;
      TapeScope scope(tape);
      Tensor loss;
      for (const auto& m : masked) {
        auto term = mlm_loss(model.mlm_logits(model.encode(m.token_ids)), m.positions, m.original_ids);
        if (!term) continue;
        Tensor weighted_term =
            scale(*term, static_cast<double>(m.positions.size()) / static_cast<double>(batch_targets));
        loss = loss.defined() ? add(loss, weighted_term) : weighted_term;
      }
      const double value = loss.item();
      check_finite(value, "pretrain", epoch, steps + 1);
      tape.backward(loss);
      opt->step();
      weighted += value * static_cast<double>(batch_targets);
      targets_seen += batch_targets;
      ++steps;
    }
    result.report.epochs.push_back(
        {"pretrain", epoch, targets_seen > 0 ? weighted / static_cast<double>(targets_seen) : 0.0, steps, {}});
  }
  result.report.wall_seconds = seconds_since(start);
  return result;
}

TrainResult pretrain_mlm(const NoteCorpus& corpus, const Vocabulary& vocab, const ModelConfig& model_config,
                         const TrainConfig& config) {
  return pretrain_mlm(note_sequences(corpus, vocab, model_config.max_seq_len), model_config, config);
}

namespace {

void check_vocab(const EncoderModel& model, std::span<const TokenizedExample> examples) {
  const auto v = model.config().vocab_size;
  for (const auto& ex : examples) {
    for (int id : ex.token_ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= v) {
        throw ContractError("example for note " + std::to_string(ex.note_id) + " uses token id " + std::to_string(id) +
                            " outside the model vocabulary (" + std::to_string(v) + ")");
      }
    }
  }
}

TrainResult span_training(const EncoderModel& model, std::span<const TokenizedExample> train, const TrainConfig& config,
                          std::span<const TokenizedExample> validation, std::size_t epochs, std::string_view stage) {
  config.validate();
  check_vocab(model, train);
  check_vocab(model, validation);
  const auto start = Clock::now();
  TrainResult result{model.clone(), {}};
  result.model.set_requires_grad(true);
  if (epochs == 0) return result;
  auto opt = make_optimizer(result.model, config);
  Rng rng(derive_seed(config.seed, stage));
  std::vector<const TokenizedExample*> items;
  for (const auto& ex : train) items.push_back(&ex);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    auto [loss, steps] = span_epoch(result.model, *opt, items, config.batch_size, rng, stage, epoch);
    EpochRecord rec{std::string(stage), epoch, loss, steps, {}};
    if (!validation.empty()) {
      rec.heldout_f1 = evaluate_model(result.model, validation, config.threshold).f1;
      result.report.final_metric = rec.heldout_f1;
    }
    result.report.epochs.push_back(rec);
  }
  result.report.wall_seconds = seconds_since(start);
  return result;
}

}  // namespace

TrainResult finetune_span(const EncoderModel& model, std::span<const TokenizedExample> train, const TrainConfig& config,
                          std::span<const TokenizedExample> validation) {
  return span_training(model, train, config, validation, config.epochs, "finetune");
}

std::vector<double> note_token_probabilities(const EncoderModel& model, const TokenizedExample& example) {
  const Tensor logits = model.span_logits(model.encode(example.token_ids, example.pad_mask));
  const Tensor probs = sigmoid(logits);
  auto v = probs.values();
  return {v.begin() + static_cast<std::ptrdiff_t>(example.note_offset),
          v.begin() + static_cast<std::ptrdiff_t>(example.note_offset + example.note_token_count())};
}

SpanSet predict_spans(const EncoderModel& model, const TokenizedExample& example, double threshold) {
  return decode_spans(note_token_probabilities(model, example), example.token_char_ranges, threshold);
}

MetricResult evaluate_model(const EncoderModel& model, std::span<const TokenizedExample> examples, double threshold) {
  std::vector<SpanPair> pairs;
  pairs.reserve(examples.size());
  for (const auto& ex : examples) pairs.push_back({ex.gold, predict_spans(model, ex, threshold)});
  return micro_f1(pairs);
}

std::vector<AnnotatedExample> generate_pseudo_labels(const EncoderModel& model,
                                                     std::span<const TokenizedExample> unlabeled,
                                                     std::size_t workers) {
  std::vector<AnnotatedExample> out(unlabeled.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < unlabeled.size(); i += stride) {
      const auto& ex = unlabeled[i];
      const auto probs = note_token_probabilities(model, ex);
      std::vector<std::uint8_t> labels(probs.size());
      for (std::size_t k = 0; k < probs.size(); ++k) labels[k] = probs[k] > 0.5 ? 1 : 0;
      out[i] = {ex.note_id, ex.feature_id, labels_to_spans(labels, ex.token_char_ranges), Provenance::pseudo};
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, unlabeled.size()));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  return out;
}

std::vector<std::size_t> select_pseudo_subset(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("pseudo_fraction must lie in (0, 1]");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  idx.resize(std::min(keep, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

void check_leakage(std::span<const TokenizedExample> unlabeled, std::span<const TokenizedExample> validation) {
  std::set<NoteId> held_out;
  for (const auto& ex : validation) held_out.insert(ex.note_id);
  for (const auto& ex : unlabeled) {
    if (held_out.contains(ex.note_id)) {
      throw LeakageError("note " + std::to_string(ex.note_id) + " is in both the unlabeled pool and the validation set");
    }
  }
}

RegimenResult pseudo_label_regimen(const EncoderModel& model, std::span<const TokenizedExample> labeled,
                                   std::span<const TokenizedExample> unlabeled,
                                   std::span<const TokenizedExample> validation, const TrainConfig& config) {
  config.validate();
  check_leakage(unlabeled, validation);
  const auto start = Clock::now();
  RegimenResult out{model, {}, {}, {}};

  out.pseudo_labels = generate_pseudo_labels(model, unlabeled, config.workers);

  out.pseudo_subset = select_pseudo_subset(unlabeled.size(), config.pseudo_fraction,
                                           derive_seed(config.seed, "pseudo-subset"));
  std::vector<TokenizedExample> pseudo_train;
  pseudo_train.reserve(out.pseudo_subset.size());
  for (std::size_t i : out.pseudo_subset) {
    TokenizedExample ex = unlabeled[i];
    const auto& spans = out.pseudo_labels[i].gold;
    const auto labels = project_spans_to_labels(spans, ex.token_char_ranges, spans.max_end(), ex.note_id);
    std::fill(ex.binary_labels.begin(), ex.binary_labels.end(), 0);
    std::copy(labels.begin(), labels.end(), ex.binary_labels.begin() + static_cast<std::ptrdiff_t>(ex.note_offset));
    ex.gold = spans;
    pseudo_train.push_back(std::move(ex));
  }
  check_leakage(pseudo_train, validation);

  TrainResult stage2 = span_training(model, pseudo_train, config, {}, config.pseudo_epochs, "pseudo");
  TrainResult stage3 = finetune_span(stage2.model, labeled, config, validation);
  out.model = std::move(stage3.model);
  out.report.append(stage2.report);
  out.report.append(stage3.report);
  out.report.wall_seconds = seconds_since(start);
  return out;
}

}  // namespace notescore

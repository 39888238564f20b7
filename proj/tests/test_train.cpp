#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "notescore/errors.hpp"
#include "notescore/losses.hpp"
#include "notescore/pipeline.hpp"
#include "notescore/rng.hpp"
#include "notescore/synthetic.hpp"
#include "notescore/train.hpp"
#include "support/oracles.hpp"

using namespace notescore;

namespace {

Tensor column(std::vector<double> v, bool grad = false) {
  const std::size_t n = v.size();
  return Tensor({n, 1}, std::move(v), grad);
}

Tensor& param(EncoderModel& m, const std::string& name) {
  static thread_local std::vector<NamedTensor> keep;
  keep = m.parameters();
  for (auto& p : keep)
    if (p.name == name) return p.tensor;
  throw std::runtime_error("no parameter " + name);
}

bool same_parameters(const EncoderModel& a, const EncoderModel& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto x = pa[i].tensor.values(), y = pb[i].tensor.values();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

// Small synthetic task shared by the training tests.
struct Fixture {
  NoteCorpus corpus;
  Vocabulary vocab;
  ModelConfig model_config;
  std::vector<TokenizedExample> train, heldout, unlabeled;

  Fixture() {
    SyntheticOptions o;
    o.labeled_notes = 40;
    o.unlabeled_notes = 12;
    o.cases = 2;
    o.features_per_case = 2;
    o.vocab_words = 30;
    o.min_words = 8;
    o.max_words = 14;
    corpus = generate_synthetic(o, 4);
    vocab = corpus_vocabulary(corpus);
    model_config.vocab_size = vocab.size();
    model_config.d_model = 16;
    model_config.n_heads = 2;
    model_config.n_layers = 1;
    model_config.max_seq_len = 32;
    const CorpusSplit s = split_corpus(corpus, 10);
    train = build_examples(corpus, s.train, vocab, 32);
    heldout = build_examples(corpus, s.heldout, vocab, 32);
    unlabeled = build_unlabeled_examples(corpus, s.unlabeled, vocab, 32);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST(Bce, MatchesDirectFormulaAndStaysFinite) {
  const std::vector<double> xs{-20.0, -2.5, -1e-3, 0.0, 0.7, 4.0, 20.0};
  for (int y : {0, 1}) {
    for (double x : xs) {
      const std::vector<std::uint8_t> label{static_cast<std::uint8_t>(y)};
      const double got = bce_with_logits(column({x}), label).item();
      EXPECT_NEAR(got, oracle::bce_direct(x, y), 1e-10) << x << " " << y;
    }
  }
  const std::vector<std::uint8_t> one{1}, zero{0};
  EXPECT_NEAR(bce_with_logits(column({0.0}), one).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_with_logits(column({800.0}), zero).item(), 800.0, 1e-9);
  EXPECT_NEAR(bce_with_logits(column({-800.0}), one).item(), 800.0, 1e-9);
}

TEST(Bce, SymmetricUnderFlippingLogitAndLabel) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-20.0, 20.0);
    const std::vector<std::uint8_t> one{1}, zero{0};
    EXPECT_NEAR(bce_with_logits(column({x}), one).item(), bce_with_logits(column({-x}), zero).item(), 1e-12);
  }
}

TEST(Bce, GradientIsSigmoidMinusLabelOverCount) {
  const Tensor x = column({-1.5, 0.0, 2.0, 9.0}, true);
  const std::vector<std::uint8_t> labels{1, 0, 1, 0}, include{1, 1, 0, 1};
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = bce_with_logits(x, labels, include);
  }
  tape.backward(loss);
  const auto g = x.grad();
  for (std::size_t i = 0; i < 4; ++i) {
    const double want = include[i] ? (oracle::sigmoid(x.at(i, 0)) - labels[i]) / 3.0 : 0.0;
    EXPECT_NEAR(g[i], want, 1e-14);
  }
}

TEST(Bce, RejectsEmptySelectionAndBadLabels) {
  const std::vector<std::uint8_t> labels{1, 0}, none{0, 0}, bad{2, 0};
  EXPECT_THROW(bce_with_logits(column({0.1, 0.2}), labels, none), ContractError);
  EXPECT_THROW(bce_with_logits(column({0.1, 0.2}), bad), ContractError);
}

TEST(MlmLoss, UniformLogitsGiveLogVocab) {
  const Tensor logits = Tensor::zeros({3, 5});
  const std::vector<std::size_t> pos{0, 2};
  const std::vector<int> tgt{1, 4};
  EXPECT_NEAR(mlm_loss(logits, pos, tgt)->item(), std::log(5.0), 1e-14);
}

TEST(MlmLoss, MatchesNegativeLogSoftmax) {
  const Tensor logits({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.5, 4.0});
  const std::vector<std::size_t> pos{0, 1};
  const std::vector<int> tgt{2, 0};
  const double want = 0.5 * (oracle::nll({1.0, 2.0, 3.0}, 2) + oracle::nll({-1.0, 0.5, 4.0}, 0));
  EXPECT_NEAR(mlm_loss(logits, pos, tgt)->item(), want, 1e-13);
  EXPECT_FALSE(mlm_loss(logits, {}, {}).has_value());
}

TEST(Pretrain, DeterministicUnderSeed) {
  const auto& f = fixture();
  TrainConfig c;
  c.epochs = 1;
  c.seed = 3;
  const TrainResult a = pretrain_mlm(f.corpus, f.vocab, f.model_config, c);
  const TrainResult b = pretrain_mlm(f.corpus, f.vocab, f.model_config, c);
  EXPECT_TRUE(same_parameters(a.model, b.model));
  EXPECT_EQ(a.report.to_jsonl(), b.report.to_jsonl());
  ASSERT_EQ(a.report.epochs.size(), 1u);
  EXPECT_TRUE(std::isfinite(a.report.epochs[0].loss));
}

TEST(Pretrain, LearnsADeterministicBigram) {
  // Token t is always followed by t+1; the masked token is recoverable from
  // its neighbours.
  std::vector<std::vector<int>> seqs;
  Rng rng(9);
  for (int i = 0; i < 60; ++i) {
    std::vector<int> s;
    const int start = 4 + static_cast<int>(rng.below(6));
    for (int k = 0; k < 8; ++k) s.push_back(start + k);
    seqs.push_back(s);
  }
  ModelConfig m;
  m.vocab_size = 18;
  m.d_model = 16;
  m.n_heads = 2;
  m.n_layers = 1;
  m.max_seq_len = 8;
  TrainConfig c;
  c.epochs = 30;
  c.learning_rate = 3e-3;
  c.mask_prob = 0.15;
  c.seed = 1;
  const TrainResult r = pretrain_mlm(seqs, m, c);
  const double first = r.report.epochs.front().loss, last = r.report.epochs.back().loss;
  EXPECT_LE(last, 0.5 * first) << first << " -> " << last;
}

TEST(Finetune, ZeroEpochsLeavesModelUnchanged) {
  const auto& f = fixture();
  const EncoderModel base = EncoderModel::initialize(f.model_config, 5);
  TrainConfig c;
  c.epochs = 0;
  const TrainResult r = finetune_span(base, f.train, c);
  EXPECT_TRUE(same_parameters(base, r.model));
  EXPECT_TRUE(r.report.epochs.empty());
}

TEST(Finetune, DoesNotMutateItsInputAndLossFalls) {
  const auto& f = fixture();
  const EncoderModel base = EncoderModel::initialize(f.model_config, 5);
  const EncoderModel copy = base.clone();
  TrainConfig c;
  c.epochs = 2;
  c.learning_rate = 3e-3;
  const TrainResult r = finetune_span(base, f.train, c, f.heldout);
  EXPECT_TRUE(same_parameters(base, copy));
  ASSERT_EQ(r.report.epochs.size(), 2u);
  EXPECT_LE(r.report.epochs[1].loss, r.report.epochs[0].loss);
  ASSERT_TRUE(r.report.epochs[1].heldout_f1.has_value());
  ASSERT_TRUE(r.report.final_metric.has_value());
  EXPECT_GE(*r.report.final_metric, 0.0);
  EXPECT_LE(*r.report.final_metric, 1.0);
}

TEST(PseudoLabels, StronglyNegativeBiasGivesNoSpans) {
  const auto& f = fixture();
  EncoderModel m = EncoderModel::initialize(f.model_config, 6);
  m.span_bias().mutable_values()[0] = -100.0;
  for (const auto& a : generate_pseudo_labels(m, f.unlabeled)) {
    EXPECT_TRUE(a.gold.empty());
    EXPECT_EQ(a.provenance, Provenance::pseudo);
  }
}

TEST(PseudoLabels, ProbabilityExactlyHalfIsNegative) {
  const auto& f = fixture();
  EncoderModel m = EncoderModel::initialize(f.model_config, 6);
  for (double& w : param(m, "span_w").mutable_values()) w = 0.0;
  m.span_bias().mutable_values()[0] = 0.0;
  for (const auto& a : generate_pseudo_labels(m, f.unlabeled)) EXPECT_TRUE(a.gold.empty());
  m.span_bias().mutable_values()[0] = 1e-9;
  for (const auto& a : generate_pseudo_labels(m, f.unlabeled)) EXPECT_FALSE(a.gold.empty());
}

TEST(PseudoLabels, MatchRethresholdedProbabilitiesAndIgnoreWorkers) {
  const auto& f = fixture();
  const EncoderModel m = EncoderModel::initialize(f.model_config, 7);
  const auto one = generate_pseudo_labels(m, f.unlabeled, 1);
  const auto three = generate_pseudo_labels(m, f.unlabeled, 3);
  EXPECT_EQ(one, three);
  EXPECT_EQ(one, generate_pseudo_labels(m, f.unlabeled, 1));
  ASSERT_EQ(one.size(), f.unlabeled.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    const auto& ex = f.unlabeled[i];
    const auto probs = note_token_probabilities(m, ex);
    std::set<std::size_t> want;
    for (std::size_t t = 0; t < probs.size(); ++t)
      if (probs[t] > 0.5)
        for (std::size_t c = ex.token_char_ranges[t].start; c < ex.token_char_ranges[t].end; ++c) want.insert(c);
    std::set<std::size_t> got;
    for (auto s : one[i].gold.spans())
      for (std::size_t c = s.start; c < s.end; ++c) got.insert(c);
    // Decoding may add single whitespace characters between neighbours.
    for (std::size_t c : want) EXPECT_TRUE(got.contains(c));
    for (std::size_t c : got)
      if (!want.contains(c)) EXPECT_LE(got.size(), want.size() + probs.size());
    EXPECT_EQ(one[i].note_id, ex.note_id);
    EXPECT_EQ(one[i].feature_id, ex.feature_id);
  }
}

TEST(PseudoSubset, SeededSortedAndSized) {
  const auto a = select_pseudo_subset(100, 0.5, 11);
  EXPECT_EQ(a, select_pseudo_subset(100, 0.5, 11));
  EXPECT_NE(a, select_pseudo_subset(100, 0.5, 12));
  EXPECT_EQ(a.size(), 50u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), a.size());
  EXPECT_EQ(select_pseudo_subset(7, 1.0, 3).size(), 7u);
  EXPECT_TRUE(select_pseudo_subset(0, 0.5, 3).empty());
}

TEST(Leakage, SharedNoteIdThrows) {
  const auto& f = fixture();
  EXPECT_NO_THROW(check_leakage(f.unlabeled, f.heldout));
  std::vector<TokenizedExample> leaked = f.unlabeled;
  leaked.push_back(f.heldout.front());
  EXPECT_THROW(check_leakage(leaked, f.heldout), LeakageError);
  TrainConfig c;
  c.epochs = 0;
  const EncoderModel m = EncoderModel::initialize(f.model_config, 1);
  EXPECT_THROW(pseudo_label_regimen(m, f.train, leaked, f.heldout, c), LeakageError);
}

TEST(Regimen, NoPseudoEpochsEqualsPlainFinetune) {
  const auto& f = fixture();
  const EncoderModel m = EncoderModel::initialize(f.model_config, 8);
  TrainConfig c;
  c.epochs = 1;
  c.pseudo_epochs = 0;
  c.pseudo_fraction = 1.0;
  c.seed = 4;
  const RegimenResult r = pseudo_label_regimen(m, f.train, f.unlabeled, f.heldout, c);
  const TrainResult plain = finetune_span(m, f.train, c, f.heldout);
  EXPECT_TRUE(same_parameters(r.model, plain.model));
  EXPECT_EQ(r.pseudo_subset.size(), f.unlabeled.size());
  EXPECT_EQ(r.pseudo_labels.size(), f.unlabeled.size());
}

TEST(Regimen, DeterministicUnderSeed) {
  const auto& f = fixture();
  const EncoderModel m = EncoderModel::initialize(f.model_config, 8);
  TrainConfig c;
  c.epochs = 1;
  c.seed = 4;
  const RegimenResult a = pseudo_label_regimen(m, f.train, f.unlabeled, f.heldout, c);
  const RegimenResult b = pseudo_label_regimen(m, f.train, f.unlabeled, f.heldout, c);
  EXPECT_TRUE(same_parameters(a.model, b.model));
  EXPECT_EQ(a.pseudo_labels, b.pseudo_labels);
  EXPECT_EQ(a.report.to_jsonl(), b.report.to_jsonl());
}

TEST(TrainConfig, RejectsBadValues) {
  TrainConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.pseudo_fraction = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.workers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

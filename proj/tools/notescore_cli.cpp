// notescore: command-line front end for the span-extraction pipeline.
//
// Exit status: 0 success, 1 data or runtime error, 2 usage or configuration
// error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "notescore/batching.hpp"
#include "notescore/checkpoint.hpp"
#include "notescore/config.hpp"
#include "notescore/corpus.hpp"
#include "notescore/errors.hpp"
#include "notescore/eval.hpp"
#include "notescore/kernels.hpp"
#include "notescore/pipeline.hpp"
#include "notescore/rng.hpp"
#include "notescore/synthetic.hpp"
#include "notescore/train.hpp"

namespace fs = std::filesystem;
using namespace notescore;
using json = nlohmann::ordered_json;

namespace {

struct UsageError : Error {
  using Error::Error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + p.string());
}

std::string fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Options common to every subcommand.
struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config;
  std::string out = ".";
  std::vector<std::string> sets;  // key=value overrides
  std::map<std::string, std::string> flags;  // flag overrides, by setting key
};

class Run {
 public:
  Run(std::string command, const Globals& g, std::vector<std::string> argv)
      : command_(std::move(command)), globals_(g), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {
    if (!g.config.empty()) {
      settings = load_settings(g.config);
      input(g.config);
    }
    for (const auto& s : g.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      apply_setting(settings, s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : g.flags) apply_setting(settings, k, v);
    if (g.seed_given) settings.train.seed = g.seed;
    settings.train.validate();
  }

  RunSettings settings;

  std::uint64_t seed() const { return settings.train.seed; }

  void input(const fs::path& p) {
    if (!fs::exists(p)) throw DataError("input not found: " + p.string());
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file()) inputs_.insert(fs::weakly_canonical(e.path()));
      }
    } else {
      inputs_.insert(fs::weakly_canonical(p));
    }
  }

  // Creates the output directory. Called once inputs are validated.
  fs::path output(const std::string& name) {
    fs::path dir = globals_.out;
    fs::path p = dir / name;
    if (inputs_.contains(fs::weakly_canonical(p))) {
      throw DataError("refusing to overwrite input file " + p.string());
    }
    if (std::find(outputs_.begin(), outputs_.end(), p) == outputs_.end()) outputs_.push_back(p);
    return p;
  }

  void write(const std::string& name, const std::string& bytes) {
    fs::create_directories(globals_.out);
    write_file(output(name), bytes);
  }

  void finish() {
    fs::create_directories(globals_.out);
    json m;
    m["command"] = command_;
    m["argv"] = argv_;
    m["seed"] = seed();
    json cfg = json::object();
    for (const auto& [k, v] : snapshot(settings)) cfg[k] = v;
    m["config"] = cfg;
    m["kernels"] = kernels::active().name;
    json ins = json::array();
    for (const auto& p : inputs_) ins.push_back({{"path", p.string()}, {"fnv1a64", fnv1a(read_file(p))}});
    m["inputs"] = ins;
    json outs = json::array();
    for (const auto& p : outputs_) outs.push_back({{"path", p.string()}, {"fnv1a64", fnv1a(read_file(p))}});
    m["outputs"] = outs;
    m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file(fs::path(globals_.out) / (command_ + ".manifest.json"), m.dump(2) + "\n");
  }

 private:
  std::string command_;
  Globals globals_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  std::set<fs::path> inputs_;
  std::vector<fs::path> outputs_;
};

NoteCorpus read_corpus(Run& run, const std::string& dir) {
  run.input(dir);
  return load_corpus(CorpusPaths::in_directory(dir));
}

Checkpoint read_model(Run& run, const std::string& path) {
  run.input(path);
  return load_checkpoint(path);
}

void require_vocabulary_covers(const Vocabulary& vocab, const NoteCorpus& corpus) {
  const Vocabulary needed = corpus_vocabulary(corpus);
  for (const auto& t : needed.tokens()) {
    if (vocab.id(t) == Vocabulary::kUnk && t != Vocabulary::kSpecials[Vocabulary::kUnk]) {
      throw DataError("model vocabulary lacks corpus token '" + t + "'");
    }
  }
}

void write_report(Run& run, const std::string& stem, const TrainReport& report) {
  run.write(stem + "_report.jsonl", report.to_jsonl());
  run.write(stem + "_summary.txt", report.summary());
  std::cout << report.summary();
}

struct Split {
  std::vector<TokenizedExample> train, heldout, unlabeled;
  CorpusSplit pairs;
};

Split make_split(const RunSettings& s, const NoteCorpus& corpus, const Vocabulary& vocab) {
  Split out;
  out.pairs = split_corpus(corpus, s.heldout_notes);
  const std::size_t max_len = s.model.max_seq_len;
  out.train = build_examples(corpus, out.pairs.train, vocab, max_len);
  out.heldout = build_examples(corpus, out.pairs.heldout, vocab, max_len);
  out.unlabeled = build_unlabeled_examples(corpus, out.pairs.unlabeled, vocab, max_len);
  return out;
}

std::string metric_line(const MetricResult& m) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "P=%.6f R=%.6f F1=%.6f tp_chars=%zu pred_chars=%zu gold_chars=%zu", m.precision,
                m.recall, m.f1, m.true_positive_chars, m.predicted_chars, m.gold_chars);
  return buf;
}

json metric_json(const MetricResult& m) {
  return {{"precision", m.precision},         {"recall", m.recall},
          {"f1", m.f1},                       {"true_positive_chars", m.true_positive_chars},
          {"predicted_chars", m.predicted_chars}, {"gold_chars", m.gold_chars}};
}

// --- commands ---------------------------------------------------------------

void cmd_gen_synthetic(Run& run) {
  const NoteCorpus corpus = generate_synthetic(run.settings.synthetic, run.seed());
  fs::create_directories(run.output("notes.tsv").parent_path());
  const CorpusPaths paths{run.output("notes.tsv").string(), run.output("features.tsv").string(),
                          run.output("annotations.tsv").string()};
  save_corpus(corpus, paths);
  std::cout << "wrote " << corpus.notes.size() << " notes, " << corpus.features.size() << " features, "
            << corpus.annotations.size() << " annotations\n";
}

void cmd_pretrain(Run& run, const std::string& corpus_dir) {
  const NoteCorpus corpus = read_corpus(run, corpus_dir);
  const Vocabulary vocab = corpus_vocabulary(corpus);
  ModelConfig mc = run.settings.model;
  mc.vocab_size = vocab.size();
  mc.validate();
  TrainResult r = pretrain_mlm(corpus, vocab, mc, run.settings.train);
  run.write("pretrained.ckpt", serialize_checkpoint(r.model, vocab));
  write_report(run, "pretrain", r.report);
}

void cmd_finetune(Run& run, const std::string& corpus_dir, const std::string& model_path) {
  const NoteCorpus corpus = read_corpus(run, corpus_dir);
  const Checkpoint ck = read_model(run, model_path);
  require_vocabulary_covers(ck.vocab, corpus);
  const Split split = make_split(run.settings, corpus, ck.vocab);
  TrainResult r = finetune_span(ck.model, split.train, run.settings.train, split.heldout);
  run.write("finetuned.ckpt", serialize_checkpoint(r.model, ck.vocab));
  write_report(run, "finetune", r.report);
}

void cmd_pseudolabel(Run& run, const std::string& corpus_dir, const std::string& model_path) {
  const NoteCorpus corpus = read_corpus(run, corpus_dir);
  const Checkpoint ck = read_model(run, model_path);
  require_vocabulary_covers(ck.vocab, corpus);
  const Split split = make_split(run.settings, corpus, ck.vocab);
  if (split.unlabeled.empty()) throw DataError("corpus has no unlabeled notes to pseudo-label");
  const double before = evaluate_model(ck.model, split.heldout, run.settings.train.threshold).f1;
  RegimenResult r = pseudo_label_regimen(ck.model, split.train, split.unlabeled, split.heldout, run.settings.train);
  std::vector<AnnotatedExample> subset;
  for (std::size_t i : r.pseudo_subset) subset.push_back(r.pseudo_labels[i]);
  run.write("regimen.ckpt", serialize_checkpoint(r.model, ck.vocab));
  fs::create_directories(run.output("pseudo_labels.tsv").parent_path());
  save_annotations(r.pseudo_labels, run.output("pseudo_labels.tsv"));
  save_annotations(subset, run.output("pseudo_subset.tsv"));
  write_report(run, "pseudolabel", r.report);
  std::printf("heldout micro-F1 before regimen: %.6f\n", before);
}

void cmd_infer(Run& run, const std::string& corpus_dir, const std::string& model_path, const std::string& which) {
  const NoteCorpus corpus = read_corpus(run, corpus_dir);
  const Checkpoint ck = read_model(run, model_path);
  CorpusSplit pairs = split_corpus(corpus, run.settings.heldout_notes);
  std::vector<AnnotatedExample> chosen;
  if (which == "heldout") chosen = pairs.heldout;
  else if (which == "train") chosen = pairs.train;
  else if (which == "labeled") chosen = corpus.annotations;
  else if (which == "unlabeled") chosen = pairs.unlabeled;
  else throw UsageError("--split must be heldout, train, labeled or unlabeled");
  const auto examples = build_unlabeled_examples(corpus, chosen, ck.vocab, ck.model.config().max_seq_len);
  std::vector<AnnotatedExample> pred;
  pred.reserve(examples.size());
  for (const auto& ex : examples) {
    pred.push_back({ex.note_id, ex.feature_id, predict_spans(ck.model, ex, run.settings.train.threshold),
                    Provenance::pseudo});
  }
  fs::create_directories(run.output("predictions.tsv").parent_path());
  save_annotations(pred, run.output("predictions.tsv"));
  if (which != "unlabeled") save_annotations(chosen, run.output("gold.tsv"));
  std::cout << "wrote " << pred.size() << " predictions\n";
}

void cmd_eval(Run& run, const std::string& gold_path, const std::string& pred_path) {
  run.input(gold_path);
  run.input(pred_path);
  const auto gold = load_annotations(gold_path, Provenance::human);
  const auto pred = load_annotations(pred_path, Provenance::pseudo);
  const EvaluationReport report = evaluate(gold, pred);
  json j;
  j["pairs"] = report.pairs;
  j["overall"] = metric_json(report.overall);
  json per = json::array();
  for (const auto& [fid, m] : report.per_feature) {
    json row = metric_json(m);
    row["feature_id"] = fid;
    per.push_back(row);
  }
  j["per_feature"] = per;
  std::cout << "pairs " << report.pairs << "\n";
  std::cout << "overall " << metric_line(report.overall) << "\n";
  for (const auto& [fid, m] : report.per_feature) std::cout << "feature " << fid << " " << metric_line(m) << "\n";
  run.write("eval_report.json", j.dump(2) + "\n");
}

void cmd_bench(Run& run, const std::string& corpus_dir, const std::string& model_path) {
  const auto& b = run.settings.bench;
  std::optional<Checkpoint> ck;
  if (!model_path.empty()) ck = read_model(run, model_path);
  std::vector<std::vector<int>> sequences;
  if (!corpus_dir.empty()) {
    const NoteCorpus corpus = read_corpus(run, corpus_dir);
    const Vocabulary vocab = ck ? ck->vocab : corpus_vocabulary(corpus);
    const std::size_t max_len = ck ? ck->model.config().max_seq_len : run.settings.model.max_seq_len;
    for (const auto& ex : build_examples(corpus, corpus.annotations, vocab, max_len)) sequences.push_back(ex.token_ids);
  } else {
    const std::size_t max_len = std::min(b.max_length, ck ? ck->model.config().max_seq_len : b.max_length);
    const auto lengths = lognormal_lengths(b.sequences, b.median_length, b.sigma, b.min_length, max_len,
                                           derive_seed(run.seed(), "bench-lengths"));
    Rng rng(derive_seed(run.seed(), "bench-tokens"));
    const std::size_t vocab = ck ? ck->model.config().vocab_size : 8;
    for (std::size_t len : lengths) {
      std::vector<int> ids(len);
      for (auto& id : ids) id = static_cast<int>(Vocabulary::kSep + 1 + rng.below(vocab - Vocabulary::kSep - 1));
      sequences.push_back(std::move(ids));
    }
  }
  if (sequences.empty()) throw DataError("bench: no sequences");
  std::vector<std::size_t> lengths;
  for (const auto& s : sequences) lengths.push_back(s.size());
  const CostReport report =
      benchmark(lengths, b.options, ck ? &ck->model : nullptr, std::span<const std::vector<int>>(sequences));
  std::cout << report.table();
  run.write("bench.jsonl", report.jsonl());
  run.write("bench_table.txt", report.table());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"notescore: clinical note span extraction pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice");
  app.add_option("--config", g.config, "flat key=value settings file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--set", g.sets, "override a setting (key=value), repeatable");
  struct FlagKey {
    const char* flag;
    const char* key;
  };
  static constexpr FlagKey kFlags[] = {
      {"--epochs", "epochs"},           {"--learning-rate", "learning_rate"},
      {"--batch-size", "batch_size"},   {"--mask-prob", "mask_prob"},
      {"--pseudo-fraction", "pseudo_fraction"}, {"--pseudo-epochs", "pseudo_epochs"},
      {"--optimizer", "optimizer"},     {"--threshold", "threshold"},
      {"--workers", "workers"},         {"--heldout-notes", "heldout_notes"},
      {"--attention-mode", "attention_mode"},
  };
  std::map<std::string, std::string> flag_values;
  for (const auto& f : kFlags) app.add_option(f.flag, flag_values[f.key], std::string("setting ") + f.key);

  std::string corpus_dir, model_path, gold_path, pred_path, split = "heldout";
  auto* gen = app.add_subcommand("gen-synthetic", "write a seeded synthetic corpus");
  auto* pre = app.add_subcommand("pretrain", "masked-token pretraining");
  pre->add_option("--corpus", corpus_dir, "corpus directory")->required();
  auto* fin = app.add_subcommand("finetune", "span fine-tuning");
  fin->add_option("--corpus", corpus_dir, "corpus directory")->required();
  fin->add_option("--model", model_path, "checkpoint to start from")->required();
  auto* pse = app.add_subcommand("pseudolabel", "pseudo-label regimen on a fine-tuned model");
  pse->add_option("--corpus", corpus_dir, "corpus directory")->required();
  pse->add_option("--model", model_path, "fine-tuned checkpoint")->required();
  auto* inf = app.add_subcommand("infer", "write predicted annotations");
  inf->add_option("--corpus", corpus_dir, "corpus directory")->required();
  inf->add_option("--model", model_path, "checkpoint")->required();
  inf->add_option("--split", split, "heldout, train, labeled or unlabeled");
  auto* ev = app.add_subcommand("eval", "micro-F1 of predicted against gold annotations");
  ev->add_option("--gold", gold_path, "gold annotations file")->required();
  ev->add_option("--pred", pred_path, "predicted annotations file")->required();
  auto* ben = app.add_subcommand("bench", "padding cost and wall time per batching strategy");
  ben->add_option("--corpus", corpus_dir, "corpus directory (default: synthetic lengths)");
  ben->add_option("--model", model_path, "checkpoint; enables wall-time measurement");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  g.seed_given = app.count("--seed") > 0;
  for (const auto& f : kFlags)
    if (app.count(f.flag) > 0) g.flags[f.key] = flag_values[f.key];

  std::vector<std::string> args(argv, argv + argc);
  try {
    auto* sub = app.get_subcommands().front();
    Run run(sub->get_name(), g, args);
    if (sub == gen) cmd_gen_synthetic(run);
    else if (sub == pre) cmd_pretrain(run, corpus_dir);
    else if (sub == fin) cmd_finetune(run, corpus_dir, model_path);
    else if (sub == pse) cmd_pseudolabel(run, corpus_dir, model_path);
    else if (sub == inf) cmd_infer(run, corpus_dir, model_path, split);
    else if (sub == ev) cmd_eval(run, gold_path, pred_path);
    else if (sub == ben) cmd_bench(run, corpus_dir, model_path);
    run.finish();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include "notescore/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "notescore/errors.hpp"

namespace notescore {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

std::size_t parse_count(std::string_view key, std::string_view value) {
  if (!value.empty() && value.front() == '-') {
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return parse_number<std::size_t>(key, value);
}

OptimizerKind parse_optimizer(std::string_view value) {
  if (value == "adam") return OptimizerKind::adam;
  if (value == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + std::string(value) + "'");
}

std::vector<BatchStrategy> parse_strategies(std::string_view value) {
  std::vector<BatchStrategy> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const auto comma = value.find(',', pos);
    const auto item = trim(value.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    out.push_back(parse_batch_strategy(item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string join_strategies(const std::vector<BatchStrategy>& s) {
  std::string out;
  for (auto k : s) {
    if (!out.empty()) out += ',';
    out += to_string(k);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

KeyValues parse_key_values(std::string_view text, const std::string& source) {
  KeyValues out;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ParseError(where + ": expected key=value");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError(where + ": empty key");
    if (!seen.insert(key).second) throw ParseError(where + ": duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

void apply_setting(RunSettings& s, std::string_view key, std::string_view value) {
  auto& m = s.model;
  auto& t = s.train;
  auto& y = s.synthetic;
  auto& b = s.bench;
  if (key == "d_model") m.d_model = parse_count(key, value);
  else if (key == "n_heads") m.n_heads = parse_count(key, value);
  else if (key == "n_layers") m.n_layers = parse_count(key, value);
  else if (key == "max_seq_len") m.max_seq_len = parse_count(key, value);
  else if (key == "attention_mode") m.attention_mode = parse_attention_mode(value);
  else if (key == "learning_rate") t.learning_rate = parse_number<double>(key, value);
  else if (key == "epochs") t.epochs = parse_count(key, value);
  else if (key == "batch_size") t.batch_size = parse_count(key, value);
  else if (key == "mask_prob") t.mask_prob = parse_number<double>(key, value);
  else if (key == "pseudo_fraction") t.pseudo_fraction = parse_number<double>(key, value);
  else if (key == "pseudo_epochs") t.pseudo_epochs = parse_count(key, value);
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "optimizer") t.optimizer = parse_optimizer(value);
  else if (key == "threshold") t.threshold = parse_number<double>(key, value);
  else if (key == "workers") t.workers = parse_count(key, value);
  else if (key == "heldout_notes") s.heldout_notes = parse_count(key, value);
  else if (key == "synthetic_labeled_notes") y.labeled_notes = parse_count(key, value);
  else if (key == "synthetic_unlabeled_notes") y.unlabeled_notes = parse_count(key, value);
  else if (key == "synthetic_cases") y.cases = parse_count(key, value);
  else if (key == "synthetic_features_per_case") y.features_per_case = parse_count(key, value);
  else if (key == "synthetic_vocab_words") y.vocab_words = parse_count(key, value);
  else if (key == "synthetic_min_words") y.min_words = parse_count(key, value);
  else if (key == "synthetic_max_words") y.max_words = parse_count(key, value);
  else if (key == "synthetic_feature_prob") y.feature_prob = parse_number<double>(key, value);
  else if (key == "bench_strategies") b.options.strategies = parse_strategies(value);
  else if (key == "bench_batch_size") b.options.batch_size = parse_count(key, value);
  else if (key == "bench_token_budget") b.options.token_budget = parse_count(key, value);
  else if (key == "bench_bucket_width") b.options.bucket_width = parse_count(key, value);
  else if (key == "bench_cost_per_token") b.options.cost_per_token = parse_number<double>(key, value);
  else if (key == "bench_optimized_cost_per_token") b.options.optimized_cost_per_token = parse_number<double>(key, value);
  else if (key == "bench_repeats") b.options.repeats = parse_count(key, value);
  else if (key == "bench_sequences") b.sequences = parse_count(key, value);
  else if (key == "bench_median_length") b.median_length = parse_number<double>(key, value);
  else if (key == "bench_sigma") b.sigma = parse_number<double>(key, value);
  else if (key == "bench_min_length") b.min_length = parse_count(key, value);
  else if (key == "bench_max_length") b.max_length = parse_count(key, value);
  else throw ConfigError("unknown setting '" + std::string(key) + "'");
}

RunSettings load_settings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  RunSettings s;
  for (const auto& [k, v] : parse_key_values(buf.str(), path.string())) apply_setting(s, k, v);
  return s;
}

KeyValues snapshot(const RunSettings& s) {
  const auto& m = s.model;
  const auto& t = s.train;
  const auto& y = s.synthetic;
  const auto& b = s.bench;
  return {
      {"d_model", std::to_string(m.d_model)},
      {"n_heads", std::to_string(m.n_heads)},
      {"n_layers", std::to_string(m.n_layers)},
      {"max_seq_len", std::to_string(m.max_seq_len)},
      {"attention_mode", std::string(to_string(m.attention_mode))},
      {"learning_rate", format_double(t.learning_rate)},
      {"epochs", std::to_string(t.epochs)},
      {"batch_size", std::to_string(t.batch_size)},
      {"mask_prob", format_double(t.mask_prob)},
      {"pseudo_fraction", format_double(t.pseudo_fraction)},
      {"pseudo_epochs", std::to_string(t.pseudo_epochs)},
      {"seed", std::to_string(t.seed)},
      {"optimizer", t.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
      {"threshold", format_double(t.threshold)},
      {"workers", std::to_string(t.workers)},
      {"heldout_notes", std::to_string(s.heldout_notes)},
      {"synthetic_labeled_notes", std::to_string(y.labeled_notes)},
      {"synthetic_unlabeled_notes", std::to_string(y.unlabeled_notes)},
      {"synthetic_cases", std::to_string(y.cases)},
      {"synthetic_features_per_case", std::to_string(y.features_per_case)},
      {"synthetic_vocab_words", std::to_string(y.vocab_words)},
      {"synthetic_min_words", std::to_string(y.min_words)},
      {"synthetic_max_words", std::to_string(y.max_words)},
      {"synthetic_feature_prob", format_double(y.feature_prob)},
      {"bench_strategies", join_strategies(b.options.strategies)},
      {"bench_batch_size", std::to_string(b.options.batch_size)},
      {"bench_token_budget", std::to_string(b.options.token_budget)},
      {"bench_bucket_width", std::to_string(b.options.bucket_width)},
      {"bench_cost_per_token", format_double(b.options.cost_per_token)},
      {"bench_optimized_cost_per_token", format_double(b.options.optimized_cost_per_token)},
      {"bench_repeats", std::to_string(b.options.repeats)},
      {"bench_sequences", std::to_string(b.sequences)},
      {"bench_median_length", format_double(b.median_length)},
      {"bench_sigma", format_double(b.sigma)},
      {"bench_min_length", std::to_string(b.min_length)},
      {"bench_max_length", std::to_string(b.max_length)},
  };
}

std::string model_config_text(const ModelConfig& c) {
  return "vocab_size=" + std::to_string(c.vocab_size) + " d_model=" + std::to_string(c.d_model) +
         " n_heads=" + std::to_string(c.n_heads) + " n_layers=" + std::to_string(c.n_layers) +
         " max_seq_len=" + std::to_string(c.max_seq_len) + " attention_mode=" + std::string(to_string(c.attention_mode)) +
         " mask_token_id=" + std::to_string(c.mask_token_id) + " pad_token_id=" + std::to_string(c.pad_token_id);
}

ModelConfig parse_model_config_text(std::string_view text) {
  ModelConfig c;
  std::set<std::string, std::less<>> seen;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto sp = text.find(' ', pos);
    if (sp == std::string_view::npos) sp = text.size();
    const auto word = text.substr(pos, sp - pos);
    pos = sp + 1;
    if (word.empty()) continue;
    const auto eq = word.find('=');
    if (eq == std::string_view::npos) throw ConfigError("model config: expected key=value, got '" + std::string(word) + "'");
    const auto key = word.substr(0, eq);
    const auto value = word.substr(eq + 1);
    seen.insert(std::string(key));
    if (key == "vocab_size") c.vocab_size = parse_count(key, value);
    else if (key == "d_model") c.d_model = parse_count(key, value);
    else if (key == "n_heads") c.n_heads = parse_count(key, value);
    else if (key == "n_layers") c.n_layers = parse_count(key, value);
    else if (key == "max_seq_len") c.max_seq_len = parse_count(key, value);
    else if (key == "attention_mode") c.attention_mode = parse_attention_mode(value);
    else if (key == "mask_token_id") c.mask_token_id = parse_number<int>(key, value);
    else if (key == "pad_token_id") c.pad_token_id = parse_number<int>(key, value);
    else throw ConfigError("model config: unknown key '" + std::string(key) + "'");
  }
  if (seen.size() != 8) throw ConfigError("model config: expected 8 keys, got " + std::to_string(seen.size()));
  c.validate();
  return c;
}

}  // namespace notescore

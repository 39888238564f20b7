#pragma once

// Flat key=value settings shared by every command. Blank lines and lines
// starting with '#' are ignored; keys are unique per file.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "notescore/batching.hpp"
#include "notescore/model.hpp"
#include "notescore/synthetic.hpp"
#include "notescore/train.hpp"

namespace notescore {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

struct BenchSettings {
  BenchmarkOptions options;
  std::size_t sequences = 1000;  // synthetic lengths when no corpus is given
  double median_length = 24.0;
  double sigma = 0.6;
  std::size_t min_length = 4;
  std::size_t max_length = 128;
};

struct RunSettings {
  ModelConfig model;  // vocab_size comes from the data
  TrainConfig train;
  SyntheticOptions synthetic;
  BenchSettings bench;
  std::size_t heldout_notes = 50;
};

// Throws ParseError naming `source` and the line.
KeyValues parse_key_values(std::string_view text, const std::string& source);

// Throws ConfigError for an unknown key or a malformed value.
void apply_setting(RunSettings& settings, std::string_view key, std::string_view value);
RunSettings load_settings(const std::filesystem::path& path);

// Every key with its current value, in a fixed order.
KeyValues snapshot(const RunSettings& settings);

// Model config as "key=value" words separated by spaces, and back.
std::string model_config_text(const ModelConfig& config);
ModelConfig parse_model_config_text(std::string_view text);

std::string format_double(double v);

}  // namespace notescore

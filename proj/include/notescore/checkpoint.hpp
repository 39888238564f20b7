#pragma once

// Model checkpoint file. Layout (see README "Checkpoint format"):
//
//   "NSCKPT 1\n"
//   "config <key>=<value> ...\n"
//   "vocab <count>\n" then one token per line
//   "params <count>\n" then "<name> <rows> <cols>\n" per tensor
//   "data\n" then every value as an IEEE-754 little-endian double, in the
//   order the params were listed
//
// Everything before "data\n" is ASCII text. Loading rebuilds bitwise the
// same model and vocabulary.

#include <filesystem>
#include <string>

#include "notescore/model.hpp"
#include "notescore/tokenizer.hpp"

namespace notescore {

struct Checkpoint {
  EncoderModel model;
  Vocabulary vocab;
};

std::string serialize_checkpoint(const EncoderModel& model, const Vocabulary& vocab);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const EncoderModel& model, const Vocabulary& vocab, const std::filesystem::path& path);
// Throws DataError on a malformed or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace notescore

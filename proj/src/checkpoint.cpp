#include "notescore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "notescore/config.hpp"
#include "notescore/errors.hpp"

namespace notescore {

namespace {

constexpr std::string_view kMagic = "NSCKPT 1\n";

void put_double(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double get_double(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::string line() {
    const auto nl = bytes_.find('\n', pos_);
    if (nl == std::string::npos) throw DataError("checkpoint: truncated header");
    std::string out = bytes_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return out;
  }

  std::string field(const std::string& line, std::string_view prefix) {
    if (line.rfind(prefix, 0) != 0) {
      throw DataError("checkpoint: expected '" + std::string(prefix) + "', got '" + line.substr(0, 40) + "'");
    }
    return line.substr(prefix.size());
  }

  std::size_t count(const std::string& text) {
    std::size_t n = 0;
    if (text.empty()) throw DataError("checkpoint: missing count");
    for (char c : text) {
      if (c < '0' || c > '9') throw DataError("checkpoint: bad count '" + text + "'");
      n = n * 10 + static_cast<std::size_t>(c - '0');
    }
    return n;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const EncoderModel& model, const Vocabulary& vocab) {
  if (vocab.size() != model.config().vocab_size) throw ContractError("checkpoint: vocabulary size differs from model");
  std::string out(kMagic);
  out += "config " + model_config_text(model.config()) + "\n";
  out += "vocab " + std::to_string(vocab.size()) + "\n";
  for (const auto& t : vocab.tokens()) out += t + "\n";
  const auto params = model.parameters();
  out += "params " + std::to_string(params.size()) + "\n";
  for (const auto& p : params) {
    out += p.name + " " + std::to_string(p.tensor.rows()) + " " + std::to_string(p.tensor.cols()) + "\n";
  }
  out += "data\n";
  for (const auto& p : params)
    for (double v : p.tensor.values()) put_double(out, v);
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.compare(0, kMagic.size(), kMagic) != 0) throw DataError("checkpoint: bad magic");
  Reader r(bytes);
  r.line();
  ModelConfig config;
  try {
    config = parse_model_config_text(r.field(r.line(), "config "));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  const std::size_t n_tokens = r.count(r.field(r.line(), "vocab "));
  std::vector<std::string> tokens;
  tokens.reserve(n_tokens);
  for (std::size_t i = 0; i < n_tokens; ++i) tokens.push_back(r.line());
  Vocabulary vocab = Vocabulary::from_tokens(std::move(tokens));

  const std::size_t n_params = r.count(r.field(r.line(), "params "));
  struct Header {
    std::string name;
    std::size_t rows, cols;
  };
  std::vector<Header> headers;
  std::size_t total = 0;
  for (std::size_t i = 0; i < n_params; ++i) {
    std::istringstream is(r.line());
    Header h;
    if (!(is >> h.name >> h.rows >> h.cols)) throw DataError("checkpoint: malformed parameter header");
    total += h.rows * h.cols;
    headers.push_back(std::move(h));
  }
  if (r.line() != "data") throw DataError("checkpoint: missing data marker");
  if (bytes.size() - r.pos() != total * 8) {
    throw DataError("checkpoint: expected " + std::to_string(total * 8) + " data bytes, found " +
                    std::to_string(bytes.size() - r.pos()));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + r.pos();
  std::vector<NamedTensor> params;
  for (const auto& h : headers) {
    std::vector<double> values(h.rows * h.cols);
    for (auto& v : values) {
      v = get_double(p);
      p += 8;
    }
    params.push_back({h.name, Tensor({h.rows, h.cols}, std::move(values))});
  }
  try {
    return {EncoderModel::from_parameters(config, params), std::move(vocab)};
  } catch (const Error& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const EncoderModel& model, const Vocabulary& vocab, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model, vocab);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace notescore

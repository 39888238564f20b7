#include "notescore/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "notescore/errors.hpp"
#include "notescore/rng.hpp"

namespace notescore {

std::string_view to_string(AttentionMode mode) {
  return mode == AttentionMode::standard ? "standard" : "disentangled";
}

AttentionMode parse_attention_mode(std::string_view text) {
  if (text == "standard") return AttentionMode::standard;
  if (text == "disentangled") return AttentionMode::disentangled;
  throw ConfigError("unknown attention mode '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (d_model == 0 || n_heads == 0 || max_seq_len == 0) {
    throw ConfigError("d_model, n_heads and max_seq_len must be positive");
  }
  if (d_model % 2 != 0) throw ConfigError("d_model must be even, got " + std::to_string(d_model));
  if (d_model % n_heads != 0) {
    throw ConfigError("n_heads (" + std::to_string(n_heads) + ") must divide d_model (" + std::to_string(d_model) +
                      ")");
  }
  auto in_vocab = [&](int id) { return id >= 0 && static_cast<std::size_t>(id) < vocab_size; };
  if (!in_vocab(mask_token_id) || !in_vocab(pad_token_id)) throw ConfigError("special token ids outside vocabulary");
  if (mask_token_id == pad_token_id) throw ConfigError("mask_token_id and pad_token_id must differ");
}

Tensor positional_encoding(std::size_t max_seq_len, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("positional encoding needs an even d_model, got " + std::to_string(d_model));
  }
  if (max_seq_len == 0) throw ConfigError("positional encoding needs max_seq_len > 0");
  std::vector<double> values(max_seq_len * d_model);
  for (std::size_t pos = 0; pos < max_seq_len; ++pos) {
    for (std::size_t i = 0; 2 * i < d_model; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      values[pos * d_model + 2 * i] = std::sin(angle);
      values[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({max_seq_len, d_model}, std::move(values));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* key_bias,
                 std::span<const std::uint8_t> pad_mask, AttentionMode mode) {
  if (mode == AttentionMode::standard && key_bias != nullptr) {
    throw ContractError("attention: key bias supplied in standard mode");
  }
  if (mode == AttentionMode::disentangled && key_bias == nullptr) {
    throw ContractError("attention: disentangled mode needs a key bias");
  }
  if (q.cols() != k.cols() || q.rows() != k.rows()) throw ShapeError("attention: Q " + q.shape().str() + " vs K " + k.shape().str());
  if (v.rows() != k.rows()) throw ShapeError("attention: K " + k.shape().str() + " vs V " + v.shape().str());
  const Tensor keys = key_bias != nullptr ? add_row(k, *key_bias) : k;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const Tensor scores = scale(matmul(q, transpose(keys)), inv_sqrt_dk);
  return matmul(softmax_rows(scores, pad_mask), v);
}

Tensor multi_head(const Tensor& x, const LayerParams& layer, AttentionMode mode,
                  std::span<const std::uint8_t> pad_mask) {
  const std::size_t heads = layer.w_q.size();
  if (x.cols() != layer.w_o.rows()) throw ShapeError("multi_head: input " + x.shape().str() + " vs W_O " + layer.w_o.shape().str());
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor* bias = mode == AttentionMode::disentangled ? &layer.key_bias.at(h) : nullptr;
    outputs.push_back(attention(matmul(x, layer.w_q[h]), matmul(x, layer.w_k[h]), matmul(x, layer.w_v[h]), bias,
                                pad_mask, mode));
  }
  return matmul(concat_cols(outputs), layer.w_o);
}

// ---------------------------------------------------------------------------

namespace {

Tensor uniform_matrix(Rng& rng, Shape shape, double bound) {
  std::vector<double> values(shape.size());
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor(shape, std::move(values), true);
}

}  // namespace

EncoderModel EncoderModel::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  EncoderModel m;
  m.config_ = config;
  Rng rng(seed);
  const std::size_t d = config.d_model, dk = config.d_k(), ff = config.ff_width();
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  m.embedding_ = uniform_matrix(rng, {config.vocab_size, d}, bound);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    LayerParams p;
    for (std::size_t h = 0; h < config.n_heads; ++h) {
      p.w_q.push_back(uniform_matrix(rng, {d, dk}, bound));
      p.w_k.push_back(uniform_matrix(rng, {d, dk}, bound));
      p.w_v.push_back(uniform_matrix(rng, {d, dk}, bound));
      if (config.attention_mode == AttentionMode::disentangled) p.key_bias.push_back(Tensor::zeros({1, dk}, true));
    }
    p.w_o = uniform_matrix(rng, {d, d}, bound);
    p.ff_w1 = uniform_matrix(rng, {d, ff}, bound);
    p.ff_b1 = Tensor::zeros({1, ff}, true);
    p.ff_w2 = uniform_matrix(rng, {ff, d}, bound);
    p.ff_b2 = Tensor::zeros({1, d}, true);
    p.ln1_gamma = Tensor::full({1, d}, 1.0, true);
    p.ln1_beta = Tensor::zeros({1, d}, true);
    p.ln2_gamma = Tensor::full({1, d}, 1.0, true);
    p.ln2_beta = Tensor::zeros({1, d}, true);
    m.layers_.push_back(std::move(p));
  }
  m.mlm_w_ = uniform_matrix(rng, {d, config.vocab_size}, bound);
  m.mlm_b_ = Tensor::zeros({1, config.vocab_size}, true);
  m.span_w_ = uniform_matrix(rng, {d, 1}, bound);
  m.span_b_ = Tensor::zeros({1, 1}, true);
  m.positions_ = positional_encoding(config.max_seq_len, d);
  return m;
}

std::vector<NamedTensor> EncoderModel::parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"embedding", embedding_});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& p = layers_[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < p.w_q.size(); ++h) {
      const std::string hp = prefix + "head" + std::to_string(h) + ".";
      out.push_back({hp + "w_q", p.w_q[h]});
      out.push_back({hp + "w_k", p.w_k[h]});
      out.push_back({hp + "w_v", p.w_v[h]});
      if (!p.key_bias.empty()) out.push_back({hp + "key_bias", p.key_bias[h]});
    }
    out.push_back({prefix + "w_o", p.w_o});
    out.push_back({prefix + "ff_w1", p.ff_w1});
    out.push_back({prefix + "ff_b1", p.ff_b1});
    out.push_back({prefix + "ff_w2", p.ff_w2});
    out.push_back({prefix + "ff_b2", p.ff_b2});
    out.push_back({prefix + "ln1_gamma", p.ln1_gamma});
    out.push_back({prefix + "ln1_beta", p.ln1_beta});
    out.push_back({prefix + "ln2_gamma", p.ln2_gamma});
    out.push_back({prefix + "ln2_beta", p.ln2_beta});
  }
  out.push_back({"mlm_w", mlm_w_});
  out.push_back({"mlm_b", mlm_b_});
  out.push_back({"span_w", span_w_});
  out.push_back({"span_b", span_b_});
  return out;
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

EncoderModel EncoderModel::from_parameters(const ModelConfig& config, const std::vector<NamedTensor>& params) {
  // Shapes come from a freshly initialized skeleton; values are then copied in.
  EncoderModel m = initialize(config, 0);
  auto slots = m.parameters();
  if (slots.size() != params.size()) {
    throw DataError("parameter count " + std::to_string(params.size()) + " does not match config (" +
                    std::to_string(slots.size()) + ")");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].name != params[i].name) {
      throw DataError("parameter " + std::to_string(i) + " is '" + params[i].name + "', expected '" + slots[i].name + "'");
    }
    if (slots[i].tensor.shape() != params[i].tensor.shape()) {
      throw ShapeError("parameter '" + slots[i].name + "' has shape " + params[i].tensor.shape().str() + ", expected " +
                       slots[i].tensor.shape().str());
    }
    auto dst = slots[i].tensor.mutable_values();
    auto src = params[i].tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return m;
}

EncoderModel EncoderModel::clone() const {
  EncoderModel m = from_parameters(config_, parameters());
  m.set_requires_grad(embedding_.requires_grad());
  return m;
}

void EncoderModel::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

Tensor EncoderModel::encode(std::span<const int> token_ids, std::span<const std::uint8_t> pad_mask) const {
  const std::size_t n = token_ids.size();
  if (n == 0) throw LengthError("encode: empty token sequence");
  if (n > config_.max_seq_len) {
    throw LengthError("encode: sequence length " + std::to_string(n) + " exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
  }
  if (!pad_mask.empty() && pad_mask.size() != n) throw ShapeError("encode: pad mask length does not match token count");
  Tensor x = add(scale(embedding(embedding_, token_ids), std::sqrt(static_cast<double>(config_.d_model))), slice_rows(positions_, 0, n));
  for (const auto& layer : layers_) {
    const Tensor attended = multi_head(x, layer, config_.attention_mode, pad_mask);
    const Tensor h = layer_norm(add(x, attended), layer.ln1_gamma, layer.ln1_beta);
    const Tensor ff = add_row(matmul(relu(add_row(matmul(h, layer.ff_w1), layer.ff_b1)), layer.ff_w2), layer.ff_b2);
    x = layer_norm(add(h, ff), layer.ln2_gamma, layer.ln2_beta);
  }
  return x;
}

Tensor EncoderModel::mlm_logits(const Tensor& hidden) const { return add_row(matmul(hidden, mlm_w_), mlm_b_); }

Tensor EncoderModel::span_logits(const Tensor& hidden) const { return add_row(matmul(hidden, span_w_), span_b_); }

bool identical(const EncoderModel& a, const EncoderModel& b) {
  if (!(a.config() == b.config())) return false;
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name || pa[i].tensor.shape() != pb[i].tensor.shape()) return false;
    const auto va = pa[i].tensor.values();
    const auto vb = pb[i].tensor.values();
    if (!std::equal(va.begin(), va.end(), vb.begin(), [](double x, double y) {
          return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
        })) {
      return false;
    }
  }
  return true;
}

}  // namespace notescore

#pragma once

// Toy transformer encoder with optional learned key bias ("disentangled"
// attention), a masked-token head and a per-token span head.
//
// Input: sqrt(d_model) * embedding + positional encoding.
// Layer layout (post-norm):
//   h = LN1(x + MultiHead(x));  out = LN2(h + FFN(h)),  FFN = relu(h W1 + b1) W2 + b2

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "notescore/tensor.hpp"

namespace notescore {

enum class AttentionMode { standard, disentangled };

std::string_view to_string(AttentionMode mode);
AttentionMode parse_attention_mode(std::string_view text);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t max_seq_len = 128;
  AttentionMode attention_mode = AttentionMode::disentangled;
  int mask_token_id = 2;
  int pad_token_id = 0;

  std::size_t d_k() const { return d_model / n_heads; }
  std::size_t ff_width() const { return 4 * d_model; }
  // Throws ConfigError on any violated invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same angle).
Tensor positional_encoding(std::size_t max_seq_len, std::size_t d_model);

// softmax((Q (K + b)^T) / sqrt(d_k)) V. `key_bias` (1 x d_k) must be given
// exactly when mode is disentangled; keys flagged in `pad_mask` get zero
// weight.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* key_bias,
                 std::span<const std::uint8_t> pad_mask, AttentionMode mode);

struct LayerParams {
  std::vector<Tensor> w_q, w_k, w_v;  // one d_model x d_k matrix per head
  std::vector<Tensor> key_bias;       // one 1 x d_k row per head; empty in standard mode
  Tensor w_o;                         // d_model x d_model
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

Tensor multi_head(const Tensor& x, const LayerParams& layer, AttentionMode mode,
                  std::span<const std::uint8_t> pad_mask);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class EncoderModel {
 public:
  EncoderModel() = default;

  // Weights uniform in [-1/sqrt(d_model), 1/sqrt(d_model)]; biases and key
  // biases zero; layer-norm gains one.
  static EncoderModel initialize(const ModelConfig& config, std::uint64_t seed);

  // Rebuilds a model from named parameters (as produced by parameters()).
  static EncoderModel from_parameters(const ModelConfig& config, const std::vector<NamedTensor>& params);

  const ModelConfig& config() const { return config_; }

  // Throws LengthError for sequences longer than max_seq_len and ShapeError
  // for out-of-vocabulary ids. pad_mask may be empty (nothing padded).
  Tensor encode(std::span<const int> token_ids, std::span<const std::uint8_t> pad_mask = {}) const;
  Tensor mlm_logits(const Tensor& hidden) const;   // n x vocab
  Tensor span_logits(const Tensor& hidden) const;  // n x 1

  // Stable order; the handles share storage with the model.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;

  EncoderModel clone() const;
  void set_requires_grad(bool on);

  LayerParams& layer(std::size_t i) { return layers_.at(i); }
  const LayerParams& layer(std::size_t i) const { return layers_.at(i); }
  const Tensor& token_embedding() const { return embedding_; }
  Tensor& mlm_bias() { return mlm_b_; }
  Tensor& span_bias() { return span_b_; }

 private:
  ModelConfig config_;
  Tensor embedding_;
  Tensor positions_;
  std::vector<LayerParams> layers_;
  Tensor mlm_w_, mlm_b_;
  Tensor span_w_, span_b_;
};

// Exact bitwise equality of configs and every parameter value.
bool identical(const EncoderModel& a, const EncoderModel& b);

}  // namespace notescore

#pragma once

// Gradient-check cases for every tensor primitive and for the full
// fine-tune loss. Shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "notescore/losses.hpp"
#include "notescore/model.hpp"
#include "notescore/rng.hpp"
#include "notescore/tensor.hpp"

namespace testing_support {

struct GradCase {
  std::string name;
  std::function<notescore::Tensor()> loss;
  std::vector<std::pair<std::string, notescore::Tensor>> params;
};

inline notescore::Tensor random_tensor(notescore::Rng& rng, std::size_t r, std::size_t c, double lo = -1.0,
                                       double hi = 1.0) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return notescore::Tensor({r, c}, std::move(v));
}

// Contracts an arbitrary output with fixed random weights so every output
// entry reaches the loss with a distinct coefficient.
inline notescore::Tensor weighted_sum(const notescore::Tensor& out, const notescore::Tensor& w) {
  return notescore::sum(notescore::mul(out, w));
}

inline std::vector<GradCase> primitive_cases(std::uint64_t seed) {
  using namespace notescore;
  Rng rng(seed);
  std::vector<GradCase> cases;
  auto w_for = [&](std::size_t r, std::size_t c) { return random_tensor(rng, r, c); };

  {
    Tensor a = random_tensor(rng, 3, 4), b = random_tensor(rng, 4, 2), w = w_for(3, 2);
    cases.push_back({"matmul", [=] { return weighted_sum(matmul(a, b), w); }, {{"a", a}, {"b", b}}});
  }
  {
    Tensor a = random_tensor(rng, 2, 3), b = random_tensor(rng, 2, 3), w = w_for(2, 3);
    cases.push_back({"add", [=] { return weighted_sum(add(a, b), w); }, {{"a", a}, {"b", b}}});
    cases.push_back({"sub", [=] { return weighted_sum(sub(a, b), w); }, {{"a", a}, {"b", b}}});
    cases.push_back({"mul", [=] { return weighted_sum(mul(a, b), w); }, {{"a", a}, {"b", b}}});
    cases.push_back({"scale", [=] { return weighted_sum(scale(a, -1.7), w); }, {{"a", a}}});
  }
  {
    Tensor a = random_tensor(rng, 2, 3), w = w_for(3, 2);
    cases.push_back({"transpose", [=] { return weighted_sum(transpose(a), w); }, {{"a", a}}});
  }
  {
    Tensor a = random_tensor(rng, 3, 2), b = random_tensor(rng, 3, 1), c = random_tensor(rng, 3, 3);
    Tensor w = w_for(3, 6);
    cases.push_back({"concat_cols",
                     [=] {
                       const std::vector<Tensor> parts{a, b, c};
                       return weighted_sum(concat_cols(parts), w);
                     },
                     {{"a", a}, {"b", b}, {"c", c}}});
  }
  {
    Tensor a = random_tensor(rng, 5, 3), w = w_for(2, 3);
    cases.push_back({"slice_rows", [=] { return weighted_sum(slice_rows(a, 1, 3), w); }, {{"a", a}}});
  }
  {
    Tensor x = random_tensor(rng, 4, 3), r = random_tensor(rng, 1, 3), w = w_for(4, 3);
    cases.push_back({"add_row", [=] { return weighted_sum(add_row(x, r), w); }, {{"x", x}, {"row", r}}});
  }
  {
    Tensor x = random_tensor(rng, 3, 3, -3.0, 3.0), w = w_for(3, 3);
    cases.push_back({"sigmoid", [=] { return weighted_sum(sigmoid(x), w); }, {{"x", x}}});
  }
  {
    Tensor x = random_tensor(rng, 3, 3, 0.2, 3.0), w = w_for(3, 3);
    cases.push_back({"log", [=] { return weighted_sum(log(x), w); }, {{"x", x}}});
  }
  {
    // Keep entries away from the kink at 0.
    Tensor x = random_tensor(rng, 3, 4, 0.1, 1.0);
    auto v = x.mutable_values();
    for (std::size_t i = 0; i < v.size(); i += 2) v[i] = -v[i];
    Tensor w = w_for(3, 4);
    cases.push_back({"relu", [=] { return weighted_sum(relu(x), w); }, {{"x", x}}});
  }
  {
    Tensor x = random_tensor(rng, 3, 4);
    cases.push_back({"sum", [=] { return scale(sum(x), 0.7); }, {{"x", x}}});
    cases.push_back({"mean", [=] { return scale(mean(mul(x, x)), 1.3); }, {{"x", x}}});
  }
  {
    Tensor table = random_tensor(rng, 6, 3), w = w_for(4, 3);
    const std::vector<int> ids{2, 5, 2, 0};
    cases.push_back({"embedding", [=] { return weighted_sum(embedding(table, ids), w); }, {{"table", table}}});
  }
  {
    Tensor x = random_tensor(rng, 3, 5, -2.0, 2.0), w = w_for(3, 5);
    const std::vector<std::uint8_t> masked{0, 1, 0, 0, 1};
    cases.push_back({"softmax_rows", [=] { return weighted_sum(softmax_rows(x), w); }, {{"x", x}}});
    cases.push_back({"softmax_rows_masked", [=] { return weighted_sum(softmax_rows(x, masked), w); }, {{"x", x}}});
  }
  {
    Tensor x = random_tensor(rng, 3, 6, -2.0, 2.0), g = random_tensor(rng, 1, 6, 0.5, 1.5);
    Tensor b = random_tensor(rng, 1, 6), w = w_for(3, 6);
    cases.push_back({"layer_norm", [=] { return weighted_sum(layer_norm(x, g, b), w); },
                     {{"x", x}, {"gamma", g}, {"beta", b}}});
  }
  {
    Tensor x = random_tensor(rng, 6, 1, -3.0, 3.0);
    const std::vector<std::uint8_t> y{1, 0, 0, 1, 1, 0}, include{1, 1, 0, 1, 1, 1};
    cases.push_back({"bce_with_logits", [=] { return bce_with_logits(x, y, include); }, {{"logits", x}}});
  }
  {
    Tensor logits = random_tensor(rng, 4, 5, -2.0, 2.0);
    const std::vector<std::size_t> pos{0, 2, 3};
    const std::vector<int> tgt{4, 1, 1};
    cases.push_back({"mlm_loss", [=] { return *mlm_loss(logits, pos, tgt); }, {{"logits", logits}}});
  }
  return cases;
}

// Tiny encoder with perturbed parameters (so key biases, gains and biases
// are all nonzero) and the span fine-tune loss on a padded example.
struct ModelCase {
  notescore::EncoderModel model;
  std::vector<int> ids;
  std::vector<std::uint8_t> pad, labels, include;

  notescore::Tensor loss() const {
    return notescore::bce_with_logits(model.span_logits(model.encode(ids, pad)), labels, include);
  }

  std::vector<std::pair<std::string, notescore::Tensor>> params() const {
    std::vector<std::pair<std::string, notescore::Tensor>> out;
    for (const auto& p : model.parameters()) out.emplace_back(p.name, p.tensor);
    return out;
  }
};

inline ModelCase model_case(notescore::AttentionMode mode, std::uint64_t seed) {
  using namespace notescore;
  ModelConfig mc;
  mc.vocab_size = 10;
  mc.d_model = 8;
  mc.n_heads = 2;
  mc.n_layers = 2;
  mc.max_seq_len = 12;
  mc.attention_mode = mode;
  ModelCase c{EncoderModel::initialize(mc, seed), {5, 7, 3, 4, 9, 6, 8, 0, 0}, {0, 0, 0, 0, 0, 0, 0, 1, 1},
              {0, 0, 0, 1, 0, 1, 0, 0, 0}, {0, 0, 0, 1, 1, 1, 1, 0, 0}};
  Rng rng(seed ^ 0x5eedULL);
  for (auto& p : c.model.parameters())
    for (auto& v : p.tensor.mutable_values()) v += 0.2 * rng.uniform(-1.0, 1.0);
  return c;
}

}  // namespace testing_support

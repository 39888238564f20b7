#include "notescore/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "notescore/errors.hpp"

namespace notescore {

Tensor bce_with_logits(const Tensor& logits, std::span<const std::uint8_t> labels,
                       std::span<const std::uint8_t> include) {
  if (logits.rows() != 1 && logits.cols() != 1) {
    throw ShapeError("bce_with_logits: logits must be a vector, got " + logits.shape().str());
  }
  const std::size_t n = logits.size();
  if (labels.size() != n) {
    throw ShapeError("bce_with_logits: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " logits");
  }
  if (!include.empty() && include.size() != n) throw ShapeError("bce_with_logits: include mask length mismatch");
  std::size_t count = 0;
  double total = 0.0;
  auto x = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (!include.empty() && include[i] == 0) continue;
    if (labels[i] > 1) throw ContractError("bce_with_logits: labels must be 0 or 1");
    const double y = labels[i];
    total += std::max(x[i], 0.0) - x[i] * y + std::log1p(std::exp(-std::abs(x[i])));
    ++count;
  }
  if (count == 0) throw ContractError("bce_with_logits: empty token set");
  Tensor out = make_result({1, 1});
  out.mutable_values()[0] = total / static_cast<double>(count);

  auto xn = logits.node();
  auto on = out.node();
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  std::vector<std::uint8_t> inc(include.begin(), include.end());
  detail::record("bce_with_logits", {&logits}, out, [xn, on, lab = std::move(lab), inc = std::move(inc), count] {
    if (on->grad.empty()) return;
    auto& g = xn->grad_buffer();
    const double scale = on->grad[0] / static_cast<double>(count);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!inc.empty() && inc[i] == 0) continue;
      const double v = xn->value[i];
      const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      g[i] += scale * (s - static_cast<double>(lab[i]));
    }
  });
  return out;
}

std::optional<Tensor> mlm_loss(const Tensor& logits, std::span<const std::size_t> positions,
                               std::span<const int> targets) {
  if (positions.size() != targets.size()) throw ShapeError("mlm_loss: positions and targets differ in length");
  if (positions.empty()) return std::nullopt;
  const std::size_t v = logits.cols();
  // Softmax rows of the selected positions, kept for backward.
  auto probs = std::make_shared<std::vector<double>>(positions.size() * v);
  double total = 0.0;
  auto x = logits.values();
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const std::size_t r = positions[k];
    if (r >= logits.rows()) throw ShapeError("mlm_loss: position out of range");
    if (targets[k] < 0 || static_cast<std::size_t>(targets[k]) >= v) throw ShapeError("mlm_loss: target id out of range");
    const double* row = x.data() + r * v;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[targets[k]];
    for (std::size_t j = 0; j < v; ++j) (*probs)[k * v + j] = std::exp(row[j] - log_z);
  }
  const double count = static_cast<double>(positions.size());
  Tensor out = make_result({1, 1});
  out.mutable_values()[0] = total / count;
  auto xn = logits.node();
  auto on = out.node();
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  std::vector<int> tgt(targets.begin(), targets.end());
  detail::record("mlm_loss", {&logits}, out, [xn, on, probs, pos = std::move(pos), tgt = std::move(tgt), v, count] {
    if (on->grad.empty()) return;
    auto& g = xn->grad_buffer();
    const double scale = on->grad[0] / count;
    for (std::size_t k = 0; k < pos.size(); ++k) {
      double* row = g.data() + pos[k] * v;
      for (std::size_t j = 0; j < v; ++j) row[j] += scale * (*probs)[k * v + j];
      row[tgt[k]] -= scale;
    }
  });
  return out;
}

}  // namespace notescore

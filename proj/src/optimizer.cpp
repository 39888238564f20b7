#include "notescore/optimizer.hpp"

#include <cmath>

namespace notescore {

Sgd::Sgd(std::vector<Tensor> params, double learning_rate) : params_(std::move(params)), lr_(learning_rate) {}

void Sgd::step() {
  for (auto& p : params_) {
    if (!p.has_grad()) continue;
    auto w = p.mutable_values();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
    p.zero_grad();
  }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    auto w = p.mutable_values();
    auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
      w[i] -= opt_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.epsilon);
    }
    p.zero_grad();
  }
}

}  // namespace notescore

#pragma once

#include <cstddef>
#include <vector>

#include "notescore/tensor.hpp"

namespace notescore {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies accumulated gradients, then clears them.
  virtual void step() = 0;
};

// Plain gradient descent.
class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<Tensor> params, double learning_rate);
  void step() override;

 private:
  std::vector<Tensor> params_;
  double lr_;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam final : public Optimizer {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {});
  void step() override;
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamOptions opt_;
  std::size_t t_ = 0;
};

}  // namespace notescore

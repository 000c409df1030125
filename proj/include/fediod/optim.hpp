#pragma once

#include <cstddef>
#include <vector>

#include "fediod/tensor.hpp"

namespace fediod {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Owns the first/second moment buffers for the
/// parameters it was constructed with.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions opts = {});

  void step();
  void zero_grad();
  void set_lr(double lr) { opts_.lr = lr; }
  double lr() const { return opts_.lr; }
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Plain gradient descent, no momentum.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double lr);

  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  double lr_;
};

/// lr(t) = lr0 * (1 + cos(pi * t / T)) / 2, clamped to 0 for t >= T.
double cosine_annealing(double lr0, std::size_t t, std::size_t total);

}  // namespace fediod

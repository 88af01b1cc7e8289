#pragma once

#include <span>
#include <vector>

#include "pvfault/tensor.hpp"

namespace pvfault {

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v - lr * (g + decay * w)
///   w <- w + v
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum, double decay);

  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr);
  double momentum() const { return momentum_; }
  double decay() const { return decay_; }

  /// Velocity buffers; empty until the first step, then one per parameter.
  const std::vector<Tensor>& velocity() const { return velocity_; }

  /// One update over every parameter. Shapes of params, grads and velocity
  /// must agree pairwise; velocity is zero-initialized on first use.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

 private:
  double learning_rate_;
  double momentum_;
  double decay_;
  std::vector<Tensor> velocity_;
};

}  // namespace pvfault

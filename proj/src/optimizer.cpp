#include "pvfault/optimizer.hpp"

#include <cmath>

namespace pvfault {

SgdMomentum::SgdMomentum(double learning_rate, double momentum, double decay)
    : learning_rate_(learning_rate), momentum_(momentum), decay_(decay) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(decay >= 0.0) || !std::isfinite(decay)) throw ConfigError("decay must be non-negative");
}

void SgdMomentum::set_learning_rate(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  learning_rate_ = lr;
}

void SgdMomentum::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer got " + std::to_string(params.size()) + " parameters and " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const Tensor* p : params) velocity_.emplace_back(p->shape());
  }
  if (velocity_.size() != params.size()) {
    throw ShapeError("optimizer state tracks " + std::to_string(velocity_.size()) +
                     " parameters, step received " + std::to_string(params.size()));
  }
  for (std::size_t n = 0; n < params.size(); ++n) {
    Tensor& w = *params[n];
    const Tensor& g = grads[n];
    Tensor& v = velocity_[n];
    if (w.shape() != g.shape() || w.shape() != v.shape()) {
      throw ShapeError("parameter " + std::to_string(n) + " shape " + shape_string(w.shape()) +
                       ", gradient " + shape_string(g.shape()) + ", velocity " +
                       shape_string(v.shape()));
    }
  }

  const float lr = static_cast<float>(learning_rate_);
  const float mu = static_cast<float>(momentum_);
  const float wd = static_cast<float>(decay_);
  for (std::size_t n = 0; n < params.size(); ++n) {
    float* w = params[n]->data().data();
    const float* g = grads[n].data().data();
    float* v = velocity_[n].data().data();
    const std::size_t count = params[n]->size();
    for (std::size_t i = 0; i < count; ++i) {
      v[i] = mu * v[i] - lr * (g[i] + wd * w[i]);
      w[i] += v[i];
    }
  }
}

}  // namespace pvfault

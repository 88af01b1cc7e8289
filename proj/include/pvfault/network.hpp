#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pvfault/architecture.hpp"
#include "pvfault/kernels.hpp"
#include "pvfault/rng.hpp"
#include "pvfault/tensor.hpp"

namespace pvfault {

enum class Mode { training, inference };

struct BatchNormSettings {
  double epsilon = 1e-5;
  /// Weight of the current batch in the running averages.
  double momentum = 0.1;
};

/// Everything a backward pass needs from the forward pass. acts[0] is the
/// input batch, acts[i] the output of layer i.
template <class T>
struct ForwardCache {
  Mode mode = Mode::inference;
  std::vector<BasicTensor<T>> acts;
  std::vector<std::vector<PoolIndices>> pool;      // per layer, per sample
  std::vector<BasicTensor<T>> dropout_mask;        // per layer, scaled keep mask
  std::vector<BasicTensor<T>> bn_normalized;       // per layer, x-hat
  std::vector<std::vector<T>> bn_inv_std;          // per layer, per channel
  std::vector<std::vector<T>> bn_mean;             // batch statistics
  std::vector<std::vector<T>> bn_var;              // biased batch variance

  bool empty() const { return acts.empty(); }
  /// [B, classes]
  const BasicTensor<T>& logits() const { return acts.back(); }
};

template <class T>
struct BatchGradients {
  /// Mean cross-entropy over the batch.
  T loss = T(0);
  /// One tensor per parameter, same order and shapes as parameters().
  std::vector<BasicTensor<T>> grads;
  std::vector<std::size_t> predictions;
};

/// A built network: parameters plus forward/backward execution over
/// batch-major tensors [B, C, H, W].
template <class T>
class BasicNetwork {
 public:
  explicit BasicNetwork(ArchitectureConfig config, BatchNormSettings bn = {});

  const ArchitectureConfig& config() const { return config_; }
  const std::vector<Shape>& shapes() const { return shapes_; }
  const BatchNormSettings& batchnorm_settings() const { return bn_; }
  std::size_t num_classes() const { return shapes_.back()[0]; }

  /// He-scaled normal weights (variance 2/fan_in), zero biases, unit
  /// batchnorm scale.
  void initialize(std::uint64_t seed);

  /// Learnable tensors in declaration order: per layer weights then bias
  /// (batchnorm: scale then shift).
  std::vector<BasicTensor<T>*> parameters();
  std::vector<const BasicTensor<T>*> parameters() const;
  std::vector<std::string> parameter_names() const;
  /// Non-learnable state (batchnorm running mean/variance).
  std::vector<BasicTensor<T>*> buffers();
  std::vector<const BasicTensor<T>*> buffers() const;

  /// Training mode uses batch statistics (and updates running averages) and
  /// draws dropout masks from `rng`, which is then required.
  ForwardCache<T> forward(const BasicTensor<T>& batch, Mode mode, Rng* rng = nullptr);
  /// Inference-mode forward that leaves the network untouched.
  ForwardCache<T> infer(const BasicTensor<T>& batch) const;

  /// Logits for one C x H x W image, inference mode.
  std::vector<T> logits(const BasicTensor<T>& image) const;

  /// Softmax cross-entropy against `labels` and the mean gradient of every
  /// parameter.
  BatchGradients<T> backward(const ForwardCache<T>& cache,
                             std::span<const std::size_t> labels) const;

  template <class U>
  BasicNetwork<U> cast() const {
    BasicNetwork<U> out(config_, bn_);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    auto dbuf = out.buffers();
    auto sbuf = buffers();
    for (std::size_t i = 0; i < sbuf.size(); ++i) *dbuf[i] = sbuf[i]->template cast<U>();
    return out;
  }

 private:
  struct Layer {
    LayerSpec spec;
    Shape in_shape;
    Shape out_shape;
    ConvKernel<T> conv;
    LinearLayer<T> fc;
    BasicTensor<T> gamma, beta, running_mean, running_var;
  };

  ForwardCache<T> run_forward(const BasicTensor<T>& batch, Mode mode, Rng* rng) const;

  ArchitectureConfig config_;
  std::vector<Shape> shapes_;
  BatchNormSettings bn_;
  std::vector<Layer> layers_;
};

using Network = BasicNetwork<float>;
using NetworkD = BasicNetwork<double>;

extern template class BasicNetwork<float>;
extern template class BasicNetwork<double>;

/// Index of the largest element; first one on ties.
template <class T>
std::size_t argmax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace pvfault

#pragma once

// Forward and backward kernels for the layer types of the network. All
// kernels operate on a single sample; batching is done by the caller.

#include <cstdint>
#include <span>
#include <vector>

#include "pvfault/tensor.hpp"

namespace pvfault {

/// Spatial output extent of a sliding window: floor((in + 2*pad - k)/s) + 1.
/// Throws ShapeError when the window does not fit.
std::size_t window_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                 std::size_t padding);

/// Convolution filter bank, weights laid out out_channels x in_channels x kh x kw.
template <class T>
struct ConvKernel {
  BasicTensor<T> weights;
  BasicTensor<T> bias;  // [out_channels]
  std::size_t stride = 1;
  std::size_t padding = 0;

  ConvKernel() = default;
  ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t kh, std::size_t kw,
             std::size_t stride = 1, std::size_t padding = 0);

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel_h() const { return weights.dim(2); }
  std::size_t kernel_w() const { return weights.dim(3); }
  /// (kh*kw*in + 1) * out
  std::uint64_t parameter_count() const;
};

template <class T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

/// Cross-correlation of a C x H x W input. Each output element is accumulated
/// as bias, then the (channel, row, col) window terms in ascending order.
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvKernel<T>& kernel);

template <class T>
ConvGrads<T> conv2d_grad(const BasicTensor<T>& input, const ConvKernel<T>& kernel,
                         const BasicTensor<T>& upstream);

/// Accumulating form used for mini-batches: adds this sample's weight and
/// bias gradients into `grad_weights`/`grad_bias`, and writes the input
/// gradient into `grad_input` when it is non-null.
template <class T>
void conv2d_backward(const BasicTensor<T>& input, const ConvKernel<T>& kernel,
                     const BasicTensor<T>& upstream, BasicTensor<T>& grad_weights,
                     BasicTensor<T>& grad_bias, BasicTensor<T>* grad_input);

/// Argmax bookkeeping of a 2x2/stride-2 max-pool, kept for the backward pass.
struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> argmax;  // flat input offset per output element
};

template <class T>
struct PoolResult {
  BasicTensor<T> output;
  PoolIndices indices;
};

/// 2x2 window, stride 2, no padding. Ties go to the first element in
/// row-major window order.
template <class T>
PoolResult<T> maxpool2(const BasicTensor<T>& input);

template <class T>
BasicTensor<T> maxpool2_grad(const PoolIndices& indices, const BasicTensor<T>& upstream);

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// upstream where input > 0, else 0.
template <class T>
BasicTensor<T> relu_grad(const BasicTensor<T>& input, const BasicTensor<T>& upstream);

/// Fully connected layer, weights N_o x N_i.
template <class T>
struct LinearLayer {
  BasicTensor<T> weights;
  BasicTensor<T> bias;  // [N_o]

  LinearLayer() = default;
  LinearLayer(std::size_t inputs, std::size_t outputs);

  std::size_t inputs() const { return weights.dim(1); }
  std::size_t outputs() const { return weights.dim(0); }
  /// (N_i + 1) * N_o
  std::uint64_t parameter_count() const;
};

template <class T>
struct LinearGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

/// W x + b. The input may have any shape with N_i elements; output is [N_o].
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& input, const LinearLayer<T>& layer);

/// grad_input keeps the shape of `input`.
template <class T>
LinearGrads<T> linear_grad(const BasicTensor<T>& input, const LinearLayer<T>& layer,
                           const BasicTensor<T>& upstream);

/// Accumulating form, see conv2d_backward.
template <class T>
void linear_backward(const BasicTensor<T>& input, const LinearLayer<T>& layer,
                     const BasicTensor<T>& upstream, BasicTensor<T>& grad_weights,
                     BasicTensor<T>& grad_bias, BasicTensor<T>* grad_input);

/// Max-subtracted softmax.
template <class T>
std::vector<T> softmax(std::span<const T> logits);

template <class T>
struct LossGrad {
  T loss;
  std::vector<T> grad;  // d loss / d logits
};

/// -log softmax(logits)[label] and its gradient softmax - onehot.
template <class T>
LossGrad<T> softmax_cross_entropy(std::span<const T> logits, std::size_t label);

}  // namespace pvfault

#include "pvfault/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdlib>
#include <limits>

namespace pvfault {

std::size_t window_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                 std::size_t padding) {
  if (stride == 0) throw ShapeError("window stride must be positive");
  const std::size_t padded = in + 2 * padding;
  if (kernel == 0 || padded < kernel) {
    throw ShapeError("window of " + std::to_string(kernel) + " does not fit extent " +
                     std::to_string(in) + " with padding " + std::to_string(padding));
  }
  return (padded - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// Convolution

template <class T>
ConvKernel<T>::ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t kh,
                          std::size_t kw, std::size_t stride_, std::size_t padding_)
    : weights({out_channels, in_channels, kh, kw}),
      bias({out_channels}),
      stride(stride_),
      padding(padding_) {
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError("convolution kernel extents must be odd, got " + std::to_string(kh) + "x" +
                     std::to_string(kw));
  }
  if (stride == 0) throw ShapeError("convolution stride must be positive");
}

template <class T>
std::uint64_t ConvKernel<T>::parameter_count() const {
  return (static_cast<std::uint64_t>(kernel_h()) * kernel_w() * in_channels() + 1) *
         out_channels();
}

namespace {

template <class T>
void check_conv_input(const BasicTensor<T>& input, const ConvKernel<T>& kernel) {
  if (kernel.weights.rank() != 4 || kernel.bias.rank() != 1 ||
      kernel.bias.dim(0) != kernel.out_channels()) {
    throw ShapeError("malformed convolution kernel: weights " +
                     shape_string(kernel.weights.shape()) + ", bias " +
                     shape_string(kernel.bias.shape()));
  }
  if (input.rank() != 3 || input.dim(0) != kernel.in_channels()) {
    throw ShapeError("conv2d input " + shape_string(input.shape()) +
                     " does not match kernel " + shape_string(kernel.weights.shape()));
  }
}

struct ConvGeometry {
  std::size_t channels, in_h, in_w, kh, kw, out_h, out_w, stride, pad;

  // Range of output positions whose tap (offset) lands inside [0, in).
  static std::pair<std::size_t, std::size_t> valid_range(std::size_t tap, std::size_t pad,
                                                         std::size_t stride, std::size_t in,
                                                         std::size_t out) {
    // position o reads o*stride + tap - pad
    std::size_t lo = 0;
    if (tap < pad) lo = (pad - tap + stride - 1) / stride;
    std::size_t hi = 0;  // exclusive
    if (in + pad > tap) hi = std::min(out, (in + pad - tap - 1) / stride + 1);
    if (hi < lo) hi = lo;
    return {lo, hi};
  }
};

template <class T>
ConvGeometry geometry(const BasicTensor<T>& input, const ConvKernel<T>& kernel) {
  ConvGeometry g{};
  g.channels = input.dim(0);
  g.in_h = input.dim(1);
  g.in_w = input.dim(2);
  g.kh = kernel.kernel_h();
  g.kw = kernel.kernel_w();
  g.stride = kernel.stride;
  g.pad = kernel.padding;
  g.out_h = window_output_extent(g.in_h, g.kh, g.stride, g.pad);
  g.out_w = window_output_extent(g.in_w, g.kw, g.stride, g.pad);
  return g;
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvKernel<T>& kernel) {
  check_conv_input(input, kernel);
  const ConvGeometry g = geometry(input, kernel);
  const std::size_t filters = kernel.out_channels();
  BasicTensor<T> out({filters, g.out_h, g.out_w});

  const T* in = input.data().data();
  const T* w = kernel.weights.data().data();
  T* o = out.data().data();
  const std::size_t plane = g.out_h * g.out_w;

  for (std::size_t k = 0; k < filters; ++k) {
    T* ok = o + k * plane;
    std::fill(ok, ok + plane, kernel.bias[k]);
    for (std::size_t c = 0; c < g.channels; ++c) {
      const T* ic = in + c * g.in_h * g.in_w;
      for (std::size_t i = 0; i < g.kh; ++i) {
        const auto [y0, y1] = ConvGeometry::valid_range(i, g.pad, g.stride, g.in_h, g.out_h);
        for (std::size_t j = 0; j < g.kw; ++j) {
          const T wv = w[((k * g.channels + c) * g.kh + i) * g.kw + j];
          const auto [x0, x1] = ConvGeometry::valid_range(j, g.pad, g.stride, g.in_w, g.out_w);
          for (std::size_t y = y0; y < y1; ++y) {
            const T* row = ic + (y * g.stride + i - g.pad) * g.in_w;
            T* orow = ok + y * g.out_w;
            if (g.stride == 1) {
              const T* src = row + (static_cast<std::ptrdiff_t>(j) -
                                    static_cast<std::ptrdiff_t>(g.pad));
              for (std::size_t x = x0; x < x1; ++x) orow[x] += wv * src[x];
            } else {
              for (std::size_t x = x0; x < x1; ++x) {
                orow[x] += wv * row[x * g.stride + j - g.pad];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <class T>
void conv2d_backward(const BasicTensor<T>& input, const ConvKernel<T>& kernel,
                     const BasicTensor<T>& upstream, BasicTensor<T>& grad_weights,
                     BasicTensor<T>& grad_bias, BasicTensor<T>* grad_input) {
  check_conv_input(input, kernel);
  const ConvGeometry g = geometry(input, kernel);
  const std::size_t filters = kernel.out_channels();
  if (upstream.shape() != Shape{filters, g.out_h, g.out_w}) {
    throw ShapeError("conv2d upstream " + shape_string(upstream.shape()) +
                     " does not match output " + shape_string({filters, g.out_h, g.out_w}));
  }
  if (grad_weights.shape() != kernel.weights.shape() || grad_bias.shape() != kernel.bias.shape()) {
    throw ShapeError("conv2d gradient accumulators do not match kernel " +
                     shape_string(kernel.weights.shape()));
  }
  if (grad_input) *grad_input = BasicTensor<T>(input.shape());

  const T* in = input.data().data();
  const T* w = kernel.weights.data().data();
  const T* up = upstream.data().data();
  T* gw = grad_weights.data().data();
  T* gi = grad_input ? grad_input->data().data() : nullptr;
  const std::size_t plane = g.out_h * g.out_w;

  for (std::size_t k = 0; k < filters; ++k) {
    const T* uk = up + k * plane;
    T bsum = T(0);
    for (std::size_t n = 0; n < plane; ++n) bsum += uk[n];
    grad_bias[k] += bsum;

    for (std::size_t c = 0; c < g.channels; ++c) {
      const T* ic = in + c * g.in_h * g.in_w;
      T* gc = gi ? gi + c * g.in_h * g.in_w : nullptr;
      for (std::size_t i = 0; i < g.kh; ++i) {
        const auto [y0, y1] = ConvGeometry::valid_range(i, g.pad, g.stride, g.in_h, g.out_h);
        for (std::size_t j = 0; j < g.kw; ++j) {
          const std::size_t widx = ((k * g.channels + c) * g.kh + i) * g.kw + j;
          const T wv = w[widx];
          const auto [x0, x1] = ConvGeometry::valid_range(j, g.pad, g.stride, g.in_w, g.out_w);
          T acc = T(0);
          for (std::size_t y = y0; y < y1; ++y) {
            const std::size_t in_row = (y * g.stride + i - g.pad) * g.in_w;
            const T* urow = uk + y * g.out_w;
            T* grow = gc ? gc + in_row : nullptr;
            const T* row = ic + in_row;
            if (g.stride == 1) {
              const std::ptrdiff_t shift =
                  static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad);
              const T* src = row + shift;
              for (std::size_t x = x0; x < x1; ++x) acc += urow[x] * src[x];
              if (grow) {
                T* dst = grow + shift;
                for (std::size_t x = x0; x < x1; ++x) dst[x] += wv * urow[x];
              }
            } else {
              for (std::size_t x = x0; x < x1; ++x) {
                const std::size_t col = x * g.stride + j - g.pad;
                acc += urow[x] * row[col];
                if (grow) grow[col] += wv * urow[x];
              }
            }
          }
          gw[widx] += acc;
        }
      }
    }
  }
}

template <class T>
ConvGrads<T> conv2d_grad(const BasicTensor<T>& input, const ConvKernel<T>& kernel,
                         const BasicTensor<T>& upstream) {
  ConvGrads<T> grads;
  grads.weights = BasicTensor<T>(kernel.weights.shape());
  grads.bias = BasicTensor<T>(kernel.bias.shape());
  conv2d_backward(input, kernel, upstream, grads.weights, grads.bias, &grads.input);
  return grads;
}

// ---------------------------------------------------------------------------
// Max pooling

template <class T>
PoolResult<T> maxpool2(const BasicTensor<T>& input) {
  if (input.rank() != 3) {
    throw ShapeError("maxpool2 expects C x H x W, got " + shape_string(input.shape()));
  }
  const std::size_t channels = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = window_output_extent(h, 2, 2, 0);
  const std::size_t ow = window_output_extent(w, 2, 2, 0);

  PoolResult<T> result;
  result.output = BasicTensor<T>({channels, oh, ow});
  result.indices.input_shape = input.shape();
  result.indices.output_shape = result.output.shape();
  result.indices.argmax.resize(result.output.size());

  const T* in = input.data().data();
  T* out = result.output.data().data();
  std::size_t* arg = result.indices.argmax.data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t base = (c * h + 2 * y) * w + 2 * x;
        const std::size_t window[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = window[0];
        for (std::size_t n = 1; n < 4; ++n) {
          if (in[window[n]] > in[best]) best = window[n];
        }
        const std::size_t o = (c * oh + y) * ow + x;
        out[o] = in[best];
        arg[o] = best;
      }
    }
  }
  return result;
}

template <class T>
BasicTensor<T> maxpool2_grad(const PoolIndices& indices, const BasicTensor<T>& upstream) {
  if (upstream.shape() != indices.output_shape) {
    throw ShapeError("maxpool2 upstream " + shape_string(upstream.shape()) +
                     " does not match pooled output " + shape_string(indices.output_shape));
  }
  BasicTensor<T> grad(indices.input_shape);
  const std::size_t limit = grad.size();
  for (std::size_t o = 0; o < upstream.size(); ++o) {
    const std::size_t at = indices.argmax[o];
    if (at >= limit) std::abort();  // corrupted bookkeeping
    grad[at] += upstream[o];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// ReLU

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (T& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

template <class T>
BasicTensor<T> relu_grad(const BasicTensor<T>& input, const BasicTensor<T>& upstream) {
  if (input.size() != upstream.size()) {
    throw ShapeError("relu upstream " + shape_string(upstream.shape()) + " vs input " +
                     shape_string(input.shape()));
  }
  BasicTensor<T> out(input.shape());
  for (std::size_t n = 0; n < input.size(); ++n) {
    out[n] = input[n] > T(0) ? upstream[n] : T(0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fully connected

template <class T>
LinearLayer<T>::LinearLayer(std::size_t inputs, std::size_t outputs)
    : weights({outputs, inputs}), bias({outputs}) {}

template <class T>
std::uint64_t LinearLayer<T>::parameter_count() const {
  return (static_cast<std::uint64_t>(inputs()) + 1) * outputs();
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& input, const LinearLayer<T>& layer) {
  const std::size_t ni = layer.inputs(), no = layer.outputs();
  if (input.size() != ni) {
    throw ShapeError("linear input has " + std::to_string(input.size()) +
                     " elements, layer expects " + std::to_string(ni));
  }
  BasicTensor<T> out({no});
  const T* x = input.data().data();
  for (std::size_t o = 0; o < no; ++o) {
    const T* row = layer.weights.data().data() + o * ni;
    T acc = T(0);
    for (std::size_t i = 0; i < ni; ++i) acc += row[i] * x[i];
    out[o] = acc + layer.bias[o];
  }
  return out;
}

template <class T>
void linear_backward(const BasicTensor<T>& input, const LinearLayer<T>& layer,
                     const BasicTensor<T>& upstream, BasicTensor<T>& grad_weights,
                     BasicTensor<T>& grad_bias, BasicTensor<T>* grad_input) {
  const std::size_t ni = layer.inputs(), no = layer.outputs();
  if (input.size() != ni) {
    throw ShapeError("linear input has " + std::to_string(input.size()) +
                     " elements, layer expects " + std::to_string(ni));
  }
  if (upstream.size() != no) {
    throw ShapeError("linear upstream has " + std::to_string(upstream.size()) +
                     " elements, layer produces " + std::to_string(no));
  }
  if (grad_weights.shape() != layer.weights.shape() || grad_bias.shape() != layer.bias.shape()) {
    throw ShapeError("linear gradient accumulators do not match layer " +
                     shape_string(layer.weights.shape()));
  }
  const T* x = input.data().data();
  const T* w = layer.weights.data().data();
  T* gw = grad_weights.data().data();
  if (grad_input) *grad_input = BasicTensor<T>(input.shape());
  T* gx = grad_input ? grad_input->data().data() : nullptr;
  for (std::size_t o = 0; o < no; ++o) {
    const T u = upstream[o];
    grad_bias[o] += u;
    if (u == T(0)) continue;
    T* grow = gw + o * ni;
    for (std::size_t i = 0; i < ni; ++i) grow[i] += u * x[i];
    if (gx) {
      const T* wrow = w + o * ni;
      for (std::size_t i = 0; i < ni; ++i) gx[i] += wrow[i] * u;
    }
  }
}

template <class T>
LinearGrads<T> linear_grad(const BasicTensor<T>& input, const LinearLayer<T>& layer,
                           const BasicTensor<T>& upstream) {
  LinearGrads<T> grads;
  grads.weights = BasicTensor<T>(layer.weights.shape());
  grads.bias = BasicTensor<T>(layer.bias.shape());
  linear_backward(input, layer, upstream, grads.weights, grads.bias, &grads.input);
  return grads;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy

template <class T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const T peak = *std::max_element(p.begin(), p.end());
  T sum = T(0);
  for (T& v : p) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (T& v : p) v /= sum;
  return p;
}

template <class T>
LossGrad<T> softmax_cross_entropy(std::span<const T> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ShapeError("label " + std::to_string(label) + " outside " +
                     std::to_string(logits.size()) + " classes");
  }
  for (T v : logits) {
    if (!std::isfinite(v)) throw DivergenceError("non-finite logit in cross-entropy");
  }
  const T peak = *std::max_element(logits.begin(), logits.end());
  T sum = T(0);
  for (T v : logits) sum += std::exp(v - peak);
  const T log_sum = std::log(sum) + peak;

  LossGrad<T> out;
  out.loss = log_sum - logits[label];
  out.grad.resize(logits.size());
  for (std::size_t n = 0; n < logits.size(); ++n) out.grad[n] = std::exp(logits[n] - log_sum);
  out.grad[label] -= T(1);
  return out;
}

#define PVFAULT_INSTANTIATE(T)                                                                   \
  template struct ConvKernel<T>;                                                                 \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const ConvKernel<T>&);                   \
  template ConvGrads<T> conv2d_grad(const BasicTensor<T>&, const ConvKernel<T>&,                 \
                                    const BasicTensor<T>&);                                      \
  template void conv2d_backward(const BasicTensor<T>&, const ConvKernel<T>&,                     \
                                const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,         \
                                BasicTensor<T>*);                                                \
  template PoolResult<T> maxpool2(const BasicTensor<T>&);                                        \
  template BasicTensor<T> maxpool2_grad(const PoolIndices&, const BasicTensor<T>&);              \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                           \
  template BasicTensor<T> relu_grad(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template struct LinearLayer<T>;                                                                \
  template BasicTensor<T> linear(const BasicTensor<T>&, const LinearLayer<T>&);                  \
  template LinearGrads<T> linear_grad(const BasicTensor<T>&, const LinearLayer<T>&,              \
                                      const BasicTensor<T>&);                                    \
  template void linear_backward(const BasicTensor<T>&, const LinearLayer<T>&,                    \
                                const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,         \
                                BasicTensor<T>*);                                                \
  template std::vector<T> softmax(std::span<const T>);                                           \
  template LossGrad<T> softmax_cross_entropy(std::span<const T>, std::size_t);

PVFAULT_INSTANTIATE(float)
PVFAULT_INSTANTIATE(double)

#undef PVFAULT_INSTANTIATE

}  // namespace pvfault

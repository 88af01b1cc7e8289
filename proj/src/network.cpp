#include "pvfault/network.hpp"

#include <algorithm>
#include <cmath>

namespace pvfault {

namespace {

// Channels and per-channel plane size of a batch-major tensor [B, C, ...].
struct ChannelLayout {
  std::size_t batch, channels, plane;
};

template <class T>
ChannelLayout channel_layout(const BasicTensor<T>& x) {
  ChannelLayout l{x.dim(0), x.dim(1), 1};
  for (std::size_t a = 2; a < x.rank(); ++a) l.plane *= x.dim(a);
  return l;
}

Shape batched(std::size_t batch, const Shape& item) {
  Shape s{batch};
  s.insert(s.end(), item.begin(), item.end());
  return s;
}

}  // namespace

template <class T>
BasicNetwork<T>::BasicNetwork(ArchitectureConfig config, BatchNormSettings bn)
    : config_(std::move(config)), bn_(bn) {
  validate(config_);
  if (!(bn_.epsilon > 0.0) || !(bn_.momentum >= 0.0 && bn_.momentum <= 1.0)) {
    throw ConfigError("batchnorm epsilon must be positive and momentum in [0, 1]");
  }
  shapes_ = shape_propagate(config_);
  layers_.reserve(config_.layers.size());
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    Layer layer;
    layer.spec = config_.layers[i];
    layer.in_shape = i == 0 ? shapes_[0] : shapes_[i - 1];
    layer.out_shape = shapes_[i];
    switch (layer.spec.kind) {
      case LayerKind::conv:
        layer.conv = ConvKernel<T>(layer.spec.filters, layer.in_shape[0], layer.spec.kernel_h,
                                   layer.spec.kernel_w, layer.spec.stride, layer.spec.padding);
        break;
      case LayerKind::fully_connected:
      case LayerKind::output:
        layer.fc = LinearLayer<T>(layer.in_shape[0], layer.spec.neurons);
        break;
      case LayerKind::batchnorm: {
        const std::size_t c = layer.in_shape[0];
        layer.gamma = BasicTensor<T>({c}, T(1));
        layer.beta = BasicTensor<T>({c});
        layer.running_mean = BasicTensor<T>({c});
        layer.running_var = BasicTensor<T>({c}, T(1));
        break;
      }
      default:
        break;
    }
    layers_.push_back(std::move(layer));
  }
}

template <class T>
void BasicNetwork<T>::initialize(std::uint64_t seed) {
  Rng rng{seed, 0x1417ull};
  for (Layer& layer : layers_) {
    BasicTensor<T>* weights = nullptr;
    std::size_t fan_in = 0;
    if (layer.spec.kind == LayerKind::conv) {
      weights = &layer.conv.weights;
      fan_in = layer.conv.in_channels() * layer.conv.kernel_h() * layer.conv.kernel_w();
      layer.conv.bias.fill(T(0));
    } else if (layer.spec.kind == LayerKind::fully_connected ||
               layer.spec.kind == LayerKind::output) {
      weights = &layer.fc.weights;
      fan_in = layer.fc.inputs();
      layer.fc.bias.fill(T(0));
    } else if (layer.spec.kind == LayerKind::batchnorm) {
      layer.gamma.fill(T(1));
      layer.beta.fill(T(0));
      layer.running_mean.fill(T(0));
      layer.running_var.fill(T(1));
    }
    if (weights) {
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (T& w : weights->data()) w = static_cast<T>(scale * rng.normal());
    }
  }
}

template <class T>
std::vector<BasicTensor<T>*> BasicNetwork<T>::parameters() {
  std::vector<BasicTensor<T>*> out;
  for (Layer& layer : layers_) {
    switch (layer.spec.kind) {
      case LayerKind::conv:
        out.push_back(&layer.conv.weights);
        out.push_back(&layer.conv.bias);
        break;
      case LayerKind::fully_connected:
      case LayerKind::output:
        out.push_back(&layer.fc.weights);
        out.push_back(&layer.fc.bias);
        break;
      case LayerKind::batchnorm:
        out.push_back(&layer.gamma);
        out.push_back(&layer.beta);
        break;
      default:
        break;
    }
  }
  return out;
}

template <class T>
std::vector<const BasicTensor<T>*> BasicNetwork<T>::parameters() const {
  auto mutable_params = const_cast<BasicNetwork*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <class T>
std::vector<std::string> BasicNetwork<T>::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    const std::string base = (layer.spec.label.empty() ? std::string(to_string(layer.spec.kind))
                                                       : layer.spec.label) +
                             "#" + std::to_string(i);
    switch (layer.spec.kind) {
      case LayerKind::conv:
      case LayerKind::fully_connected:
      case LayerKind::output:
        out.push_back(base + ".weights");
        out.push_back(base + ".bias");
        break;
      case LayerKind::batchnorm:
        out.push_back(base + ".scale");
        out.push_back(base + ".shift");
        break;
      default:
        break;
    }
  }
  return out;
}

template <class T>
std::vector<BasicTensor<T>*> BasicNetwork<T>::buffers() {
  std::vector<BasicTensor<T>*> out;
  for (Layer& layer : layers_) {
    if (layer.spec.kind == LayerKind::batchnorm) {
      out.push_back(&layer.running_mean);
      out.push_back(&layer.running_var);
    }
  }
  return out;
}

template <class T>
std::vector<const BasicTensor<T>*> BasicNetwork<T>::buffers() const {
  auto mutable_bufs = const_cast<BasicNetwork*>(this)->buffers();
  return {mutable_bufs.begin(), mutable_bufs.end()};
}

template <class T>
ForwardCache<T> BasicNetwork<T>::run_forward(const BasicTensor<T>& batch, Mode mode,
                                             Rng* rng) const {
  if (batch.rank() != shapes_[0].size() + 1 ||
      !std::equal(shapes_[0].begin(), shapes_[0].end(), batch.shape().begin() + 1)) {
    throw ShapeError("network '" + config_.name + "' expects batches of " +
                     shape_string(shapes_[0]) + ", got " + shape_string(batch.shape()));
  }
  const std::size_t n = batch.dim(0);
  const std::size_t depth = layers_.size();

  ForwardCache<T> cache;
  cache.mode = mode;
  cache.acts.reserve(depth);
  cache.pool.resize(depth);
  cache.dropout_mask.resize(depth);
  cache.bn_normalized.resize(depth);
  cache.bn_inv_std.resize(depth);
  cache.bn_mean.resize(depth);
  cache.bn_var.resize(depth);
  cache.acts.push_back(batch);

  for (std::size_t li = 1; li < depth; ++li) {
    const Layer& layer = layers_[li];
    const BasicTensor<T>& x = cache.acts.back();
    BasicTensor<T> y;
    switch (layer.spec.kind) {
      case LayerKind::input:
        y = x;
        break;
      case LayerKind::conv:
        y = BasicTensor<T>(batched(n, layer.out_shape));
        for (std::size_t b = 0; b < n; ++b) y.set_slice(b, conv2d(x.slice(b), layer.conv));
        break;
      case LayerKind::maxpool:
        y = BasicTensor<T>(batched(n, layer.out_shape));
        cache.pool[li].reserve(n);
        for (std::size_t b = 0; b < n; ++b) {
          PoolResult<T> r = maxpool2(x.slice(b));
          y.set_slice(b, r.output);
          cache.pool[li].push_back(std::move(r.indices));
        }
        break;
      case LayerKind::flatten:
        y = x.reshaped(batched(n, layer.out_shape));
        break;
      case LayerKind::fully_connected:
      case LayerKind::output:
        y = BasicTensor<T>(batched(n, layer.out_shape));
        for (std::size_t b = 0; b < n; ++b) y.set_slice(b, linear(x.slice(b), layer.fc));
        break;
      case LayerKind::relu:
        y = relu(x);
        break;
      case LayerKind::dropout: {
        if (mode == Mode::inference || layer.spec.rate == 0.0) {
          y = x;
          break;
        }
        if (!rng) throw ConfigError("training-mode dropout requires a random generator");
        const double keep = 1.0 - layer.spec.rate;
        const T scale = static_cast<T>(1.0 / keep);
        BasicTensor<T> mask(x.shape());
        for (T& m : mask.data()) m = rng->bernoulli(keep) ? scale : T(0);
        y = x;
        for (std::size_t k = 0; k < y.size(); ++k) y[k] *= mask[k];
        cache.dropout_mask[li] = std::move(mask);
        break;
      }
      case LayerKind::batchnorm: {
        const ChannelLayout cl = channel_layout(x);
        y = BasicTensor<T>(x.shape());
        const T eps = static_cast<T>(bn_.epsilon);
        if (mode == Mode::inference) {
          for (std::size_t c = 0; c < cl.channels; ++c) {
            const T inv = T(1) / std::sqrt(layer.running_var[c] + eps);
            const T mean = layer.running_mean[c];
            for (std::size_t b = 0; b < cl.batch; ++b) {
              const std::size_t off = (b * cl.channels + c) * cl.plane;
              for (std::size_t p = 0; p < cl.plane; ++p) {
                y[off + p] = layer.gamma[c] * ((x[off + p] - mean) * inv) + layer.beta[c];
              }
            }
          }
          break;
        }
        BasicTensor<T> xhat(x.shape());
        std::vector<T> inv_std(cl.channels), means(cl.channels), vars(cl.channels);
        // Statistics accumulate in double so a constant channel has an
        // exact mean.
        const double count = static_cast<double>(cl.batch * cl.plane);
        for (std::size_t c = 0; c < cl.channels; ++c) {
          double sum = 0.0;
          for (std::size_t b = 0; b < cl.batch; ++b) {
            const std::size_t off = (b * cl.channels + c) * cl.plane;
            for (std::size_t p = 0; p < cl.plane; ++p) sum += static_cast<double>(x[off + p]);
          }
          const T mean = static_cast<T>(sum / count);
          double sq = 0.0;
          for (std::size_t b = 0; b < cl.batch; ++b) {
            const std::size_t off = (b * cl.channels + c) * cl.plane;
            for (std::size_t p = 0; p < cl.plane; ++p) {
              const double d = static_cast<double>(x[off + p]) - static_cast<double>(mean);
              sq += d * d;
            }
          }
          const T var = static_cast<T>(sq / count);
          const T inv = T(1) / std::sqrt(var + eps);
          means[c] = mean;
          vars[c] = var;
          inv_std[c] = inv;
          for (std::size_t b = 0; b < cl.batch; ++b) {
            const std::size_t off = (b * cl.channels + c) * cl.plane;
            for (std::size_t p = 0; p < cl.plane; ++p) {
              const T h = (x[off + p] - mean) * inv;
              xhat[off + p] = h;
              y[off + p] = layer.gamma[c] * h + layer.beta[c];
            }
          }
        }
        cache.bn_normalized[li] = std::move(xhat);
        cache.bn_inv_std[li] = std::move(inv_std);
        cache.bn_mean[li] = std::move(means);
        cache.bn_var[li] = std::move(vars);
        break;
      }
    }
    cache.acts.push_back(std::move(y));
  }
  return cache;
}

template <class T>
ForwardCache<T> BasicNetwork<T>::forward(const BasicTensor<T>& batch, Mode mode, Rng* rng) {
  ForwardCache<T> cache = run_forward(batch, mode, rng);
  if (mode != Mode::training) return cache;
  const T m = static_cast<T>(bn_.momentum);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    Layer& layer = layers_[li];
    if (layer.spec.kind != LayerKind::batchnorm) continue;
    const BasicTensor<T>& x = cache.acts[li - 1];
    const ChannelLayout cl = channel_layout(x);
    const std::size_t count = cl.batch * cl.plane;
    for (std::size_t c = 0; c < cl.channels; ++c) {
      T var = cache.bn_var[li][c];
      if (count > 1) var = var * static_cast<T>(count) / static_cast<T>(count - 1);
      layer.running_mean[c] = (T(1) - m) * layer.running_mean[c] + m * cache.bn_mean[li][c];
      layer.running_var[c] = (T(1) - m) * layer.running_var[c] + m * var;
    }
  }
  return cache;
}

template <class T>
ForwardCache<T> BasicNetwork<T>::infer(const BasicTensor<T>& batch) const {
  return run_forward(batch, Mode::inference, nullptr);
}

template <class T>
std::vector<T> BasicNetwork<T>::logits(const BasicTensor<T>& image) const {
  const ForwardCache<T> cache = infer(image.reshaped(batched(1, image.shape())));
  const auto values = cache.logits().data();
  return {values.begin(), values.end()};
}

template <class T>
BatchGradients<T> BasicNetwork<T>::backward(const ForwardCache<T>& cache,
                                            std::span<const std::size_t> labels) const {
  if (cache.empty() || cache.acts.size() != layers_.size()) {
    throw ConfigError("backward called without a matching forward cache");
  }
  const BasicTensor<T>& out = cache.logits();
  const std::size_t n = out.dim(0);
  const std::size_t classes = out.dim(1);
  if (labels.size() != n) {
    throw ShapeError("backward got " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(n));
  }

  BatchGradients<T> result;
  const auto params = parameters();
  result.grads.reserve(params.size());
  for (const BasicTensor<T>* p : params) result.grads.emplace_back(p->shape());
  result.predictions.resize(n);

  // d loss / d logits, averaged over the batch.
  BasicTensor<T> upstream(out.shape());
  T loss_sum = T(0);
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::span<const T> row = out.data().subspan(b * classes, classes);
    const LossGrad<T> lg = softmax_cross_entropy(row, labels[b]);
    loss_sum += lg.loss;
    for (std::size_t k = 0; k < classes; ++k) upstream[b * classes + k] = lg.grad[k] * inv_n;
    result.predictions[b] = argmax(row);
  }
  result.loss = loss_sum * inv_n;

  // Parameter slots are assigned in declaration order; walk them backwards.
  std::size_t slot = params.size();
  for (std::size_t li = layers_.size(); li-- > 1;) {
    const Layer& layer = layers_[li];
    const BasicTensor<T>& x = cache.acts[li - 1];
    const bool need_input = li > 1;
    BasicTensor<T> down;
    switch (layer.spec.kind) {
      case LayerKind::input:
        down = upstream;
        break;
      case LayerKind::conv: {
        slot -= 2;
        if (need_input) down = BasicTensor<T>(x.shape());
        for (std::size_t b = 0; b < n; ++b) {
          BasicTensor<T> gi;
          conv2d_backward(x.slice(b), layer.conv, upstream.slice(b), result.grads[slot],
                          result.grads[slot + 1], need_input ? &gi : nullptr);
          if (need_input) down.set_slice(b, gi);
        }
        break;
      }
      case LayerKind::maxpool:
        down = BasicTensor<T>(x.shape());
        for (std::size_t b = 0; b < n; ++b) {
          down.set_slice(b, maxpool2_grad(cache.pool[li][b], upstream.slice(b)));
        }
        break;
      case LayerKind::flatten:
        down = upstream.reshaped(x.shape());
        break;
      case LayerKind::fully_connected:
      case LayerKind::output: {
        slot -= 2;
        down = BasicTensor<T>(x.shape());
        for (std::size_t b = 0; b < n; ++b) {
          BasicTensor<T> gi;
          linear_backward(x.slice(b), layer.fc, upstream.slice(b), result.grads[slot],
                          result.grads[slot + 1], need_input ? &gi : nullptr);
          if (need_input) down.set_slice(b, gi);
        }
        break;
      }
      case LayerKind::relu:
        down = relu_grad(x, upstream);
        break;
      case LayerKind::dropout:
        down = upstream;
        if (!cache.dropout_mask[li].empty()) {
          for (std::size_t k = 0; k < down.size(); ++k) down[k] *= cache.dropout_mask[li][k];
        }
        break;
      case LayerKind::batchnorm: {
        slot -= 2;
        BasicTensor<T>& g_gamma = result.grads[slot];
        BasicTensor<T>& g_beta = result.grads[slot + 1];
        const ChannelLayout cl = channel_layout(x);
        down = BasicTensor<T>(x.shape());
        if (cache.mode == Mode::inference) {
          const T eps = static_cast<T>(bn_.epsilon);
          for (std::size_t c = 0; c < cl.channels; ++c) {
            const T inv = T(1) / std::sqrt(layer.running_var[c] + eps);
            for (std::size_t b = 0; b < cl.batch; ++b) {
              const std::size_t off = (b * cl.channels + c) * cl.plane;
              for (std::size_t p = 0; p < cl.plane; ++p) {
                const T dy = upstream[off + p];
                g_gamma[c] += dy * (x[off + p] - layer.running_mean[c]) * inv;
                g_beta[c] += dy;
                down[off + p] = dy * layer.gamma[c] * inv;
              }
            }
          }
          break;
        }
        const BasicTensor<T>& xhat = cache.bn_normalized[li];
        const T count = static_cast<T>(cl.batch * cl.plane);
        for (std::size_t c = 0; c < cl.channels; ++c) {
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (std::size_t b = 0; b < cl.batch; ++b) {
            const std::size_t off = (b * cl.channels + c) * cl.plane;
            for (std::size_t p = 0; p < cl.plane; ++p) {
              sum_dy += upstream[off + p];
              sum_dy_xhat += upstream[off + p] * xhat[off + p];
            }
          }
          g_gamma[c] += sum_dy_xhat;
          g_beta[c] += sum_dy;
          const T k = layer.gamma[c] * cache.bn_inv_std[li][c] / count;
          for (std::size_t b = 0; b < cl.batch; ++b) {
            const std::size_t off = (b * cl.channels + c) * cl.plane;
            for (std::size_t p = 0; p < cl.plane; ++p) {
              down[off + p] =
                  k * (count * upstream[off + p] - sum_dy - xhat[off + p] * sum_dy_xhat);
            }
          }
        }
        break;
      }
    }
    upstream = std::move(down);
  }
  return result;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

}  // namespace pvfault

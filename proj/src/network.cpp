#include "nest/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "nest/kernels.hpp"

namespace nest {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void check_finite(std::span<const T> values, std::size_t layer, const char* what) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(layer, std::string("non-finite ") + what);
  }
}

constexpr double kLeakySlope = 0.01;

template <typename T>
Tensor<T> activate(const Tensor<T>& x, ActivationKind kind) {
  Tensor<T> y(x.shape);
  const std::size_t n = x.size();
  switch (kind) {
    case ActivationKind::Relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
      break;
    case ActivationKind::Tanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
      break;
    case ActivationKind::LeakyRelu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : static_cast<T>(kLeakySlope) * x[i];
      break;
    case ActivationKind::Identity:
      y.data = x.data;
      break;
  }
  return y;
}

template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, std::size_t window, std::vector<std::uint32_t>& argmax) {
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / window, ow = w / window;
  Tensor<T> y({batch, channels, oh, ow});
  argmax.assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    const std::size_t base = bc * h * w;
    for (std::size_t p = 0; p < oh; ++p) {
      for (std::size_t q = 0; q < ow; ++q, ++o) {
        std::size_t best = base + (p * window) * w + q * window;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (p * window + i) * w + q * window + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[o] = x[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> shape_input(const Model<T>& model, const Tensor<T>& input) {
  if (input.rank() == 0) throw DimensionError("input must have a batch dimension");
  const std::size_t batch = input.dim(0);
  if (input.stride0() != model.input.size() && batch != 0) {
    throw DimensionError("input sample size " + std::to_string(input.stride0()) + " does not match model input " +
                         std::to_string(model.input.size()));
  }
  Tensor<T> x;
  x.data = input.data;
  if (model.input.flat()) x.shape = {batch, model.input.channels};
  else x.shape = {batch, model.input.channels, model.input.height, model.input.width};
  return x;
}

template <typename T>
Tensor<T> forward(const Model<T>& model, const Tensor<T>& input, Mode mode, LayerActivations<T>* cache) {
  Tensor<T> x = shape_input(model, input);
  const std::size_t layers = model.layers.size();
  if (cache) {
    cache->inputs.assign(layers, {});
    cache->outputs.assign(layers, {});
    cache->pool_argmax.assign(layers, {});
    cache->bn_batch_mean.assign(layers, {});
    cache->bn_batch_var.assign(layers, {});
  }
  const std::size_t batch = x.dim(0);
  for (std::size_t i = 0; i < layers; ++i) {
    const Layer<T>& layer = model.layers[i];
    Tensor<T> y;
    switch (layer.spec.kind) {
      case LayerKind::FullyConnected:
        y = fc_forward(layer.weights, std::span<const T>(layer.bias), x);
        break;
      case LayerKind::Conv: {
        y = conv_forward(layer.weights, x, std::span<const std::uint8_t>(layer.area_mask), layer.spec.padding);
        const std::size_t maps = layer.spec.units, plane = y.dim(2) * y.dim(3);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t n = 0; n < maps; ++n) {
            T* o = y.data.data() + (b * maps + n) * plane;
            for (std::size_t t = 0; t < plane; ++t) o[t] += layer.bias[n];
          }
        }
        break;
      }
      case LayerKind::BatchNorm: {
        const std::size_t units = x.dim(1);
        if (mode == Mode::Train) {
          if (batch == 0) throw InputError("batch-norm training needs a non-empty batch");
          std::vector<T> mean(units), var(units);
          for (std::size_t u = 0; u < units; ++u) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch; ++b) s += x[b * units + u];
            const double mu = s / static_cast<double>(batch);
            double v = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              const double d = x[b * units + u] - mu;
              v += d * d;
            }
            mean[u] = static_cast<T>(mu);
            var[u] = static_cast<T>(v / static_cast<double>(batch));
          }
          BatchNormParams<T> params{mean, std::vector<T>(units)};
          for (std::size_t u = 0; u < units; ++u) {
            params.divisor[u] = static_cast<T>(std::sqrt(static_cast<double>(var[u]) + model.bn_epsilon));
          }
          y = batchnorm_forward(x, params);
          if (cache) {
            cache->bn_batch_mean[i] = std::move(mean);
            cache->bn_batch_var[i] = std::move(var);
          }
        } else {
          y = batchnorm_forward(x, model.batchnorm_params(i));
        }
        break;
      }
      case LayerKind::Activation:
        y = activate(x, layer.spec.activation);
        break;
      case LayerKind::Flatten:
        y.data = x.data;
        y.shape = {batch, x.stride0()};
        break;
      case LayerKind::Pool: {
        std::vector<std::uint32_t> argmax;
        y = max_pool(x, layer.spec.window, argmax);
        if (cache) cache->pool_argmax[i] = std::move(argmax);
        break;
      }
    }
    check_finite(std::span<const T>(y.data), i, "activation");
    if (cache) {
      cache->inputs[i] = std::move(x);
      cache->outputs[i] = y;
    }
    x = std::move(y);
  }
  return x;
}

template <typename T>
double evaluate_loss(const Model<T>& model, const Tensor<T>& input, std::span<const int> labels, Mode mode) {
  return loss(forward(model, input, mode), labels);
}

template <typename T>
BatchGradients<T> backward(const Model<T>& model, const Tensor<T>& input, std::span<const int> labels, Mode mode) {
  if (input.rank() == 0 || input.dim(0) == 0) throw InputError("backward needs a non-empty batch");
  BatchGradients<T> grads;
  LayerActivations<T>& acts = grads.activations;
  const Tensor<T> logits = forward(model, input, mode, &acts);
  grads.loss = loss(logits, labels);
  Tensor<T> g = loss_gradient(logits, labels);
  const std::size_t batch = input.dim(0);
  grads.layers.resize(model.layers.size());
  for (std::size_t i = model.layers.size(); i-- > 0;) {
    const Layer<T>& layer = model.layers[i];
    const Tensor<T>& x = acts.inputs[i];
    const Tensor<T>& y = acts.outputs[i];
    LayerGradients<T>& lg = grads.layers[i];
    lg.d_output = g;
    const bool need_input = i > 0;
    switch (layer.spec.kind) {
      case LayerKind::FullyConnected: {
        const std::size_t out = layer.weights.dim(0), in = layer.weights.dim(1);
        lg.d_weights = Tensor<T>({out, in});
        Eigen::Map<const RowMatrix<T>> gy(g.data.data(), batch, out);
        Eigen::Map<const RowMatrix<T>> xin(x.data.data(), batch, in);
        Eigen::Map<RowMatrix<T>> dw(lg.d_weights.data.data(), out, in);
        dw.noalias() = gy.transpose() * xin;
        // Plain loop: Eigen's vectorized column sums change summation order
        // with the destination address.
        lg.d_bias.assign(out, T{0});
        for (std::size_t b = 0; b < batch; ++b) {
          const T* row = g.data.data() + b * out;
          for (std::size_t o = 0; o < out; ++o) lg.d_bias[o] += row[o];
        }
        if (need_input) {
          Tensor<T> gx({batch, in});
          Eigen::Map<const RowMatrix<T>> w(layer.weights.values().data(), out, in);
          Eigen::Map<RowMatrix<T>> dx(gx.data.data(), batch, in);
          dx.noalias() = gy * w;
          g = std::move(gx);
        }
        break;
      }
      case LayerKind::Conv: {
        ConvGrads<T> cg = conv_backward(layer.weights, x, std::span<const std::uint8_t>(layer.area_mask),
                                        layer.spec.padding, g, need_input);
        lg.d_weights = std::move(cg.d_kernels);
        const std::size_t maps = layer.spec.units, plane = g.dim(2) * g.dim(3);
        lg.d_bias.assign(maps, T{0});
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t n = 0; n < maps; ++n) {
            const T* go = g.data.data() + (b * maps + n) * plane;
            T s{0};
            for (std::size_t t = 0; t < plane; ++t) s += go[t];
            lg.d_bias[n] += s;
          }
        }
        if (need_input) g = std::move(cg.d_input);
        break;
      }
      case LayerKind::BatchNorm: {
        const std::size_t units = x.dim(1);
        Tensor<T> gx(x.shape);
        if (mode == Mode::Train) {
          for (std::size_t u = 0; u < units; ++u) {
            const double v = std::sqrt(static_cast<double>(acts.bn_batch_var[i][u]) + model.bn_epsilon);
            double mean_g = 0.0, mean_gy = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              mean_g += g[b * units + u];
              mean_gy += static_cast<double>(g[b * units + u]) * y[b * units + u];
            }
            mean_g /= static_cast<double>(batch);
            mean_gy /= static_cast<double>(batch);
            for (std::size_t b = 0; b < batch; ++b) {
              const double d = g[b * units + u] - mean_g - y[b * units + u] * mean_gy;
              gx[b * units + u] = static_cast<T>(d / v);
            }
          }
        } else {
          const BatchNormParams<T> p = model.batchnorm_params(i);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t u = 0; u < units; ++u) gx[b * units + u] = g[b * units + u] / p.divisor[u];
          }
        }
        g = std::move(gx);
        break;
      }
      case LayerKind::Activation: {
        const std::size_t n = g.size();
        switch (layer.spec.activation) {
          case ActivationKind::Relu:
            for (std::size_t t = 0; t < n; ++t) g[t] = x[t] > T{0} ? g[t] : T{0};
            break;
          case ActivationKind::Tanh:
            for (std::size_t t = 0; t < n; ++t) g[t] *= T{1} - y[t] * y[t];
            break;
          case ActivationKind::LeakyRelu:
            for (std::size_t t = 0; t < n; ++t) g[t] = x[t] > T{0} ? g[t] : static_cast<T>(kLeakySlope) * g[t];
            break;
          case ActivationKind::Identity:
            break;
        }
        break;
      }
      case LayerKind::Flatten:
        g.shape = x.shape;
        break;
      case LayerKind::Pool: {
        Tensor<T> gx(x.shape);
        const auto& argmax = acts.pool_argmax[i];
        for (std::size_t t = 0; t < g.size(); ++t) gx[argmax[t]] += g[t];
        g = std::move(gx);
        break;
      }
    }
    if (layer.spec.parametric()) check_finite(std::span<const T>(lg.d_weights.data), i, "gradient");
  }
  return grads;
}

template <typename T>
void sgd_step(Model<T>& model, const BatchGradients<T>& grads, double lr) {
  if (lr < 0.0) throw InvalidParameterError("learning rate must be >= 0");
  for (std::size_t i : model.parametric_layers()) {
    Layer<T>& layer = model.layers[i];
    const LayerGradients<T>& lg = grads.layers.at(i);
    if (lg.d_weights.size() != layer.weights.size()) throw DimensionError("gradient does not match layer");
    const T rate = static_cast<T>(lr);
    for (std::size_t p = 0; p < layer.weights.size(); ++p) {
      if (layer.weights.active(p)) layer.weights.set(p, layer.weights.value(p) - rate * lg.d_weights[p]);
    }
    for (std::size_t b = 0; b < layer.bias.size(); ++b) layer.bias[b] -= rate * lg.d_bias[b];
  }
}

template <typename T>
void update_running_stats(Model<T>& model, const BatchGradients<T>& grads) {
  const T mom = static_cast<T>(model.bn_momentum);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Layer<T>& layer = model.layers[i];
    if (layer.spec.kind != LayerKind::BatchNorm) continue;
    const auto& mean = grads.activations.bn_batch_mean.at(i);
    const auto& var = grads.activations.bn_batch_var.at(i);
    if (mean.size() != layer.running_mean.size()) continue;
    for (std::size_t u = 0; u < mean.size(); ++u) {
      layer.running_mean[u] = (T{1} - mom) * layer.running_mean[u] + mom * mean[u];
      layer.running_var[u] = (T{1} - mom) * layer.running_var[u] + mom * var[u];
    }
  }
}

template <typename T>
void Sgd<T>::step(Model<T>& model, const BatchGradients<T>& grads, double lr) {
  if (momentum_ == 0.0) {
    sgd_step(model, grads, lr);
    return;
  }
  if (lr < 0.0) throw InvalidParameterError("learning rate must be >= 0");
  velocity_.resize(model.layers.size());
  bias_velocity_.resize(model.layers.size());
  const T mu = static_cast<T>(momentum_), rate = static_cast<T>(lr);
  for (std::size_t i : model.parametric_layers()) {
    Layer<T>& layer = model.layers[i];
    const LayerGradients<T>& lg = grads.layers.at(i);
    auto& v = velocity_[i];
    auto& bv = bias_velocity_[i];
    if (v.size() != layer.weights.size()) v.assign(layer.weights.size(), T{0});
    if (bv.size() != layer.bias.size()) bv.assign(layer.bias.size(), T{0});
    for (std::size_t p = 0; p < layer.weights.size(); ++p) {
      if (!layer.weights.active(p)) {
        v[p] = T{0};
        continue;
      }
      v[p] = mu * v[p] + lg.d_weights[p];
      layer.weights.set(p, layer.weights.value(p) - rate * v[p]);
    }
    for (std::size_t b = 0; b < layer.bias.size(); ++b) {
      bv[b] = mu * bv[b] + lg.d_bias[b];
      layer.bias[b] -= rate * bv[b];
    }
  }
}

template <typename To, typename From>
Model<To> model_cast(const Model<From>& model) {
  Model<To> out;
  out.input = model.input;
  out.seed = model.seed;
  out.rng = model.rng;
  out.bn_epsilon = model.bn_epsilon;
  out.bn_momentum = model.bn_momentum;
  for (const auto& l : model.layers) {
    Layer<To> c;
    c.spec = l.spec;
    if (l.spec.parametric()) c.weights = masked_cast<To>(l.weights);
    c.bias.assign(l.bias.begin(), l.bias.end());
    c.area_mask = l.area_mask;
    c.running_mean.assign(l.running_mean.begin(), l.running_mean.end());
    c.running_var.assign(l.running_var.begin(), l.running_var.end());
    out.layers.push_back(std::move(c));
  }
  return out;
}

#define NEST_INSTANTIATE(T)                                                                              \
  template Tensor<T> shape_input(const Model<T>&, const Tensor<T>&);                                     \
  template Tensor<T> forward(const Model<T>&, const Tensor<T>&, Mode, LayerActivations<T>*);             \
  template double evaluate_loss(const Model<T>&, const Tensor<T>&, std::span<const int>, Mode);          \
  template BatchGradients<T> backward(const Model<T>&, const Tensor<T>&, std::span<const int>, Mode);    \
  template void sgd_step(Model<T>&, const BatchGradients<T>&, double);                                   \
  template void update_running_stats(Model<T>&, const BatchGradients<T>&);                               \
  template class Sgd<T>;

NEST_INSTANTIATE(float)
NEST_INSTANTIATE(double)

template Model<double> model_cast<double, float>(const Model<float>&);
template Model<float> model_cast<float, double>(const Model<double>&);
template Model<double> model_cast<double, double>(const Model<double>&);
template Model<float> model_cast<float, float>(const Model<float>&);

}  // namespace nest

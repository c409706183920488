#include "nest/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace nest {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t batch, in_maps, out_maps, kernel, height, width, padding;
  std::size_t padded_h, padded_w, out_h, out_w;
};

template <typename T>
ConvGeometry conv_geometry(const MaskedTensor<T>& kernels, const Tensor<T>& input, std::size_t padding) {
  if (kernels.shape().size() != 4 || kernels.dim(2) != kernels.dim(3)) {
    throw DimensionError("conv kernels must be [M x N x k x k], got " + shape_string(kernels.shape()));
  }
  if (input.rank() != 4 || input.dim(1) != kernels.dim(0)) {
    throw DimensionError("conv input " + shape_string(input.shape) + " does not match kernels " +
                         shape_string(kernels.shape()));
  }
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_maps = kernels.dim(0);
  g.out_maps = kernels.dim(1);
  g.kernel = kernels.dim(2);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.padding = padding;
  g.padded_h = g.height + 2 * padding;
  g.padded_w = g.width + 2 * padding;
  g.out_h = conv_output_extent(g.height, g.kernel, padding);
  g.out_w = conv_output_extent(g.width, g.kernel, padding);
  return g;
}

template <typename T>
void pad_channel(const T* src, const ConvGeometry& g, std::vector<T>& dst) {
  std::fill(dst.begin(), dst.end(), T{0});
  for (std::size_t y = 0; y < g.height; ++y) {
    std::copy_n(src + y * g.width, g.width, dst.data() + (y + g.padding) * g.padded_w + g.padding);
  }
}

// tmp = xcorr(padded, kernel), P x Q. Returns false when the kernel is all zero.
template <typename T>
bool correlate(const T* kernel, const std::vector<T>& padded, const ConvGeometry& g, std::vector<T>& tmp) {
  std::fill(tmp.begin(), tmp.end(), T{0});
  bool any = false;
  for (std::size_t i = 0; i < g.kernel; ++i) {
    for (std::size_t j = 0; j < g.kernel; ++j) {
      const T kv = kernel[i * g.kernel + j];
      if (kv == T{0}) continue;
      any = true;
      for (std::size_t p = 0; p < g.out_h; ++p) {
        const T* row = padded.data() + (p + i) * g.padded_w + j;
        T* t = tmp.data() + p * g.out_w;
        for (std::size_t q = 0; q < g.out_w; ++q) t[q] += kv * row[q];
      }
    }
  }
  return any;
}

}  // namespace

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t padding) {
  if (kernel == 0 || kernel > input + 2 * padding) {
    throw DimensionError("kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(input + 2 * padding));
  }
  return input + 2 * padding - kernel + 1;
}

template <typename T>
Tensor<T> fc_forward(const MaskedTensor<T>& weights, std::span<const T> bias, const Tensor<T>& input) {
  if (weights.shape().size() != 2) throw DimensionError("fc weights must be rank 2");
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  if (input.rank() != 2 || input.dim(1) != in) {
    throw DimensionError("fc input " + shape_string(input.shape) + " does not match weights " +
                         shape_string(weights.shape()));
  }
  if (bias.size() != out) throw DimensionError("fc bias length does not match weight rows");
  const std::size_t batch = input.dim(0);
  Tensor<T> result({batch, out});
  Eigen::Map<const RowMatrix<T>> x(input.data.data(), batch, in);
  Eigen::Map<const RowMatrix<T>> w(weights.values().data(), out, in);
  Eigen::Map<RowMatrix<T>> y(result.data.data(), batch, out);
  y.noalias() = x * w.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), out);
  y.rowwise() += b;
  return result;
}

template <typename T>
Tensor<T> conv_forward(const MaskedTensor<T>& kernels, const Tensor<T>& input,
                       std::span<const std::uint8_t> area_mask, std::size_t padding) {
  const ConvGeometry g = conv_geometry(kernels, input, padding);
  const std::size_t plane = g.out_h * g.out_w;
  if (area_mask.size() != g.in_maps * g.out_maps * plane) {
    throw DimensionError("area mask size " + std::to_string(area_mask.size()) + " does not match [" +
                         std::to_string(g.in_maps) + "x" + std::to_string(g.out_maps) + "x" +
                         std::to_string(g.out_h) + "x" + std::to_string(g.out_w) + "]");
  }
  Tensor<T> out({g.batch, g.out_maps, g.out_h, g.out_w});
  std::vector<T> padded(g.padded_h * g.padded_w), tmp(plane);
  const std::size_t kk = g.kernel * g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t m = 0; m < g.in_maps; ++m) {
      pad_channel(input.data.data() + (b * g.in_maps + m) * g.height * g.width, g, padded);
      for (std::size_t n = 0; n < g.out_maps; ++n) {
        if (!correlate(kernels.values().data() + (m * g.out_maps + n) * kk, padded, g, tmp)) continue;
        const std::uint8_t* msk = area_mask.data() + (m * g.out_maps + n) * plane;
        T* o = out.data.data() + (b * g.out_maps + n) * plane;
        for (std::size_t i = 0; i < plane; ++i) o[i] += tmp[i] * static_cast<T>(msk[i]);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> depthwise_feature_maps(const MaskedTensor<T>& kernels, const Tensor<T>& input, std::size_t padding) {
  const ConvGeometry g = conv_geometry(kernels, input, padding);
  const std::size_t plane = g.out_h * g.out_w;
  Tensor<T> maps({g.batch, g.in_maps, g.out_maps, g.out_h, g.out_w});
  std::vector<T> padded(g.padded_h * g.padded_w), tmp(plane);
  const std::size_t kk = g.kernel * g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t m = 0; m < g.in_maps; ++m) {
      pad_channel(input.data.data() + (b * g.in_maps + m) * g.height * g.width, g, padded);
      for (std::size_t n = 0; n < g.out_maps; ++n) {
        correlate(kernels.values().data() + (m * g.out_maps + n) * kk, padded, g, tmp);
        std::copy(tmp.begin(), tmp.end(), maps.data.begin() + ((b * g.in_maps + m) * g.out_maps + n) * plane);
      }
    }
  }
  return maps;
}

template <typename T>
std::vector<double> mean_abs_depthwise(const MaskedTensor<T>& kernels, const Tensor<T>& input, std::size_t padding) {
  const ConvGeometry g = conv_geometry(kernels, input, padding);
  if (g.batch == 0) throw InputError("mean_abs_depthwise needs a non-empty batch");
  const std::size_t plane = g.out_h * g.out_w;
  std::vector<double> acc(g.in_maps * g.out_maps * plane, 0.0);
  std::vector<T> padded(g.padded_h * g.padded_w), tmp(plane);
  const std::size_t kk = g.kernel * g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t m = 0; m < g.in_maps; ++m) {
      pad_channel(input.data.data() + (b * g.in_maps + m) * g.height * g.width, g, padded);
      for (std::size_t n = 0; n < g.out_maps; ++n) {
        if (!correlate(kernels.values().data() + (m * g.out_maps + n) * kk, padded, g, tmp)) continue;
        double* a = acc.data() + (m * g.out_maps + n) * plane;
        for (std::size_t i = 0; i < plane; ++i) a[i] += std::abs(static_cast<double>(tmp[i]));
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(g.batch);
  for (double& v : acc) v *= scale;
  return acc;
}

template <typename T>
ConvGrads<T> conv_backward(const MaskedTensor<T>& kernels, const Tensor<T>& input,
                           std::span<const std::uint8_t> area_mask, std::size_t padding,
                           const Tensor<T>& d_output, bool want_input_grad) {
  const ConvGeometry g = conv_geometry(kernels, input, padding);
  const std::size_t plane = g.out_h * g.out_w;
  if (d_output.shape != Shape{g.batch, g.out_maps, g.out_h, g.out_w}) {
    throw DimensionError("conv output gradient has shape " + shape_string(d_output.shape));
  }
  if (area_mask.size() != g.in_maps * g.out_maps * plane) throw DimensionError("area mask size mismatch");
  const std::size_t kk = g.kernel * g.kernel;
  ConvGrads<T> grads{Tensor<T>(kernels.shape()),
                     want_input_grad ? Tensor<T>(input.shape) : Tensor<T>()};
  std::vector<T> padded(g.padded_h * g.padded_w), d_padded(g.padded_h * g.padded_w), d_c(plane);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t m = 0; m < g.in_maps; ++m) {
      pad_channel(input.data.data() + (b * g.in_maps + m) * g.height * g.width, g, padded);
      std::fill(d_padded.begin(), d_padded.end(), T{0});
      for (std::size_t n = 0; n < g.out_maps; ++n) {
        const T* go = d_output.data.data() + (b * g.out_maps + n) * plane;
        const std::uint8_t* msk = area_mask.data() + (m * g.out_maps + n) * plane;
        bool any = false;
        for (std::size_t i = 0; i < plane; ++i) {
          d_c[i] = go[i] * static_cast<T>(msk[i]);
          any = any || d_c[i] != T{0};
        }
        if (!any) continue;
        const T* kern = kernels.values().data() + (m * g.out_maps + n) * kk;
        T* dk = grads.d_kernels.data.data() + (m * g.out_maps + n) * kk;
        for (std::size_t i = 0; i < g.kernel; ++i) {
          for (std::size_t j = 0; j < g.kernel; ++j) {
            T acc{0};
            const T kv = kern[i * g.kernel + j];
            for (std::size_t p = 0; p < g.out_h; ++p) {
              const T* row = padded.data() + (p + i) * g.padded_w + j;
              const T* dc = d_c.data() + p * g.out_w;
              for (std::size_t q = 0; q < g.out_w; ++q) acc += dc[q] * row[q];
              if (want_input_grad && kv != T{0}) {
                T* drow = d_padded.data() + (p + i) * g.padded_w + j;
                for (std::size_t q = 0; q < g.out_w; ++q) drow[q] += kv * dc[q];
              }
            }
            dk[i * g.kernel + j] += acc;
          }
        }
      }
      if (want_input_grad) {
        T* di = grads.d_input.data.data() + (b * g.in_maps + m) * g.height * g.width;
        for (std::size_t y = 0; y < g.height; ++y) {
          std::copy_n(d_padded.data() + (y + g.padding) * g.padded_w + g.padding, g.width, di + y * g.width);
        }
      }
    }
  }
  return grads;
}

template <typename T>
static void check_divisor(const BatchNormParams<T>& params, std::size_t units) {
  if (params.mean.size() != units || params.divisor.size() != units) {
    throw DimensionError("batch-norm terms have length " + std::to_string(params.divisor.size()) +
                         ", expected " + std::to_string(units));
  }
  for (std::size_t i = 0; i < units; ++i) {
    if (!(params.divisor[i] > T{0})) {
      throw InvalidParameterError("batch-norm divisor V[" + std::to_string(i) + "] must be > 0");
    }
  }
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& pre, const BatchNormParams<T>& params) {
  if (pre.rank() != 2) throw DimensionError("batch-norm input must be [batch x units]");
  const std::size_t units = pre.dim(1);
  check_divisor(params, units);
  Tensor<T> out(pre.shape);
  for (std::size_t b = 0; b < pre.dim(0); ++b) {
    for (std::size_t u = 0; u < units; ++u) {
      out[b * units + u] = (pre[b * units + u] - params.mean[u]) / params.divisor[u];
    }
  }
  return out;
}

template <typename T>
std::pair<MaskedTensor<T>, std::vector<T>> fold_effective_params(const MaskedTensor<T>& weights,
                                                                 std::span<const T> bias,
                                                                 const BatchNormParams<T>& params) {
  if (weights.shape().size() != 2) throw DimensionError("folding expects fc weights [out x in]");
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  if (bias.size() != out) throw DimensionError("bias length does not match weight rows");
  check_divisor(params, out);
  std::vector<T> values(weights.values().begin(), weights.values().end());
  std::vector<T> folded_bias(out);
  for (std::size_t m = 0; m < out; ++m) {
    for (std::size_t n = 0; n < in; ++n) values[m * in + n] /= params.divisor[m];
    folded_bias[m] = (bias[m] - params.mean[m]) / params.divisor[m];
  }
  std::vector<std::uint8_t> mask(weights.mask().begin(), weights.mask().end());
  return {MaskedTensor<T>(weights.shape(), std::move(values), std::move(mask)), std::move(folded_bias)};
}

template <typename T>
static void check_labels(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("logits " + shape_string(logits.shape) + " do not match " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw InputError("loss needs a non-empty batch");
  const int classes = static_cast<int>(logits.dim(1));
  for (int label : labels) {
    if (label < 0 || label >= classes) {
      throw InputError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

template <typename T>
double loss(const Tensor<T>& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t classes = logits.dim(1);
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const T* row = logits.data.data() + b * classes;
    const double peak = static_cast<double>(*std::max_element(row, row + classes));
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c]) - peak);
    total += peak + std::log(sum) - static_cast<double>(row[labels[b]]);
  }
  return total / static_cast<double>(labels.size());
}

template <typename T>
Tensor<T> loss_gradient(const Tensor<T>& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t classes = logits.dim(1);
  const double inv_batch = 1.0 / static_cast<double>(labels.size());
  Tensor<T> grad(logits.shape);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const T* row = logits.data.data() + b * classes;
    const double peak = static_cast<double>(*std::max_element(row, row + classes));
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c]) - peak);
    for (std::size_t c = 0; c < classes; ++c) {
      double p = std::exp(static_cast<double>(row[c]) - peak) / sum;
      if (static_cast<int>(c) == labels[b]) p -= 1.0;
      grad[b * classes + c] = static_cast<T>(p * inv_batch);
    }
  }
  return grad;
}

#define NEST_INSTANTIATE(T)                                                                          \
  template Tensor<T> fc_forward(const MaskedTensor<T>&, std::span<const T>, const Tensor<T>&);       \
  template Tensor<T> conv_forward(const MaskedTensor<T>&, const Tensor<T>&,                          \
                                  std::span<const std::uint8_t>, std::size_t);                       \
  template Tensor<T> depthwise_feature_maps(const MaskedTensor<T>&, const Tensor<T>&, std::size_t);  \
  template std::vector<double> mean_abs_depthwise(const MaskedTensor<T>&, const Tensor<T>&,          \
                                                  std::size_t);                                      \
  template ConvGrads<T> conv_backward(const MaskedTensor<T>&, const Tensor<T>&,                      \
                                      std::span<const std::uint8_t>, std::size_t, const Tensor<T>&,  \
                                      bool);                                                         \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, const BatchNormParams<T>&);                 \
  template std::pair<MaskedTensor<T>, std::vector<T>> fold_effective_params(                         \
      const MaskedTensor<T>&, std::span<const T>, const BatchNormParams<T>&);                        \
  template double loss(const Tensor<T>&, std::span<const int>);                                      \
  template Tensor<T> loss_gradient(const Tensor<T>&, std::span<const int>);

NEST_INSTANTIATE(float)
NEST_INSTANTIATE(double)

}  // namespace nest

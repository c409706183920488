#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nest/tensor.hpp"

namespace nest {

// Normalization terms E and V: u = (pre - E) / V, every V > 0.
template <typename T>
struct BatchNormParams {
  std::vector<T> mean;     // E
  std::vector<T> divisor;  // V
};

// weights [out x in], input [batch x in] -> [batch x out].
template <typename T>
Tensor<T> fc_forward(const MaskedTensor<T>& weights, std::span<const T> bias, const Tensor<T>& input);

// Output spatial extent of a stride-1 cross-correlation with zero padding.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t padding);

// Partial-area convolution.
//   kernels   [M x N x k x k]
//   input     [batch x M x H x W]
//   area_mask [M x N x P x Q]
// Each depthwise map C[m,n] = xcorr(I_m, K_{m,n}) is multiplied by its area
// mask and the masked maps are summed over m. Result is [batch x N x P x Q].
template <typename T>
Tensor<T> conv_forward(const MaskedTensor<T>& kernels, const Tensor<T>& input,
                       std::span<const std::uint8_t> area_mask, std::size_t padding);

// Unmasked depthwise maps C, [batch x M x N x P x Q].
template <typename T>
Tensor<T> depthwise_feature_maps(const MaskedTensor<T>& kernels, const Tensor<T>& input,
                                 std::size_t padding);

// Batch mean of |C|, [M x N x P x Q], accumulated without materializing C.
template <typename T>
std::vector<double> mean_abs_depthwise(const MaskedTensor<T>& kernels, const Tensor<T>& input,
                                       std::size_t padding);

// Gradients of conv_forward given dL/d(output).
template <typename T>
struct ConvGrads {
  Tensor<T> d_kernels;  // every position, dormant included
  Tensor<T> d_input;
};

template <typename T>
ConvGrads<T> conv_backward(const MaskedTensor<T>& kernels, const Tensor<T>& input,
                           std::span<const std::uint8_t> area_mask, std::size_t padding,
                           const Tensor<T>& d_output, bool want_input_grad = true);

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& pre, const BatchNormParams<T>& params);

// W* = W / V (row-wise), b* = (b - E) / V. W* keeps W's mask.
template <typename T>
std::pair<MaskedTensor<T>, std::vector<T>> fold_effective_params(const MaskedTensor<T>& weights,
                                                                 std::span<const T> bias,
                                                                 const BatchNormParams<T>& params);

// Mean softmax cross-entropy over the batch. logits [batch x classes].
template <typename T>
double loss(const Tensor<T>& logits, std::span<const int> labels);

// dL/dlogits for the mean softmax cross-entropy.
template <typename T>
Tensor<T> loss_gradient(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace nest

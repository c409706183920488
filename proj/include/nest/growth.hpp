#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nest/model.hpp"
#include "nest/network.hpp"
#include "nest/tensor.hpp"

namespace nest {

struct GrowthParams {
  double alpha = 0.3;          // birth strength
  double beta = 0.2;           // growth ratio
  double conn_fraction = 0.1;  // fraction of dormant positions activated per step
  std::size_t candidates = 8;  // kernel sets sampled per new feature map
  std::size_t growth_batch = 1024;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Activates, per parametric layer, the ceil(conn_fraction * dormant)
// dormant positions with the largest |dW| (lowest flat index first on
// ties) and initializes each to -lr * dW. Returns the number activated.
template <typename T>
std::size_t grow_connections(Model<T>& model, const BatchGradients<T>& grads, const GrowthParams& params,
                             double lr);

// G[m, n] = sum over the batch of dU_next[b, m] * x_prev[b, n] for hidden fc
// layer `index`, i.e. the weight gradient a direct connection from the
// layer's input n to the next parametric layer's unit m would receive.
template <typename T>
Tensor<T> bridging_gradients(const Model<T>& model, std::size_t index, const BatchGradients<T>& grads);

template <typename T>
Tensor<T> bridging_gradients(const Model<T>& model, std::size_t index, const Tensor<T>& input,
                             std::span<const int> labels);

template <typename T>
struct NeuronGrowth {
  std::size_t unit = 0;
  std::vector<std::size_t> pairs;  // flat indices m * N + n into G, ascending
  std::vector<T> signs;            // rand{1,-1} drawn per pair, in pair order
  std::vector<T> w_in;             // [N], after birth-strength scaling
  std::vector<T> w_out;            // [M], after birth-strength scaling
  std::vector<T> raw_in;           // before scaling
  std::vector<T> raw_out;
};

// Adds one neuron to hidden fc layer `index`, bridging the floor(beta*M*N)
// input/output pairs with the largest |G|. Throws ConfigError when
// beta*M*N < 1 and GrowthDegenerateError (model untouched) when no pair
// yields a non-zero weight.
template <typename T>
NeuronGrowth<T> grow_neuron(Model<T>& model, std::size_t index, const Tensor<T>& input,
                            std::span<const int> labels, const GrowthParams& params);

struct FeatureMapGrowth {
  std::size_t map = 0;
  double loss_before = 0.0;
  std::vector<double> candidate_losses;
  std::size_t chosen = 0;
};

// Adds one feature map to conv layer `index`, trying `candidates` random
// kernel sets and keeping the one with the lowest loss on the batch.
template <typename T>
FeatureMapGrowth grow_feature_map(Model<T>& model, std::size_t index, const Tensor<T>& input,
                                  std::span<const int> labels, const GrowthParams& params);

}  // namespace nest

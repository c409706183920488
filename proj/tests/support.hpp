#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nest/data.hpp"
#include "nest/model.hpp"
#include "nest/network.hpp"
#include "nest/rng.hpp"

namespace nest::testing {

// Fully connected stack in -> hidden... -> classes with an activation after
// every hidden layer and an optional batchnorm before it.
inline Architecture mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t classes,
                        ActivationKind act = ActivationKind::Relu, bool batchnorm = false) {
  Architecture a;
  a.name = "test-mlp";
  a.input = {in, 1, 1};
  for (std::size_t h : hidden) {
    a.layers.push_back(LayerSpec::fully_connected(h));
    if (batchnorm) a.layers.push_back(LayerSpec::batchnorm());
    a.layers.push_back(LayerSpec::activation_layer(act));
  }
  a.layers.push_back(LayerSpec::fully_connected(classes));
  return a;
}

// Small conv net on 1 x size x size inputs.
inline Architecture small_cnn(std::size_t size, std::size_t maps1, std::size_t maps2, std::size_t classes) {
  Architecture a;
  a.name = "test-cnn";
  a.input = {1, size, size};
  a.layers = {LayerSpec::conv(maps1, 3, 1), LayerSpec::activation_layer(ActivationKind::Relu), LayerSpec::pool(2),
              LayerSpec::conv(maps2, 3, 0), LayerSpec::activation_layer(ActivationKind::Tanh), LayerSpec::flatten(),
              LayerSpec::fully_connected(classes)};
  return a;
}

template <typename T>
Tensor<T> random_input(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(rng.below(classes));
  return out;
}

// Gives batchnorm layers non-trivial running statistics.
template <typename T>
void randomize_batchnorm(Model<T>& model, Rng& rng) {
  for (auto& l : model.layers) {
    if (l.spec.kind != LayerKind::BatchNorm) continue;
    for (auto& v : l.running_mean) v = static_cast<T>(rng.uniform(-0.5, 0.5));
    for (auto& v : l.running_var) v = static_cast<T>(rng.uniform(0.5, 2.0));
  }
}

// Non-zero biases keep ReLU pre-activations away from the kink at 0,
// where finite differences are meaningless.
template <typename T>
void randomize_biases(Model<T>& model, Rng& rng) {
  for (auto& l : model.layers) {
    for (auto& b : l.bias) b = static_cast<T>(rng.uniform(-0.5, 0.5));
  }
}

// Learnable stand-in for MNIST: each class is a fixed random 28x28
// prototype; samples add uniform noise and are clamped to [0, 1].
inline Dataset toy_digits(std::size_t count, std::uint64_t seed, double noise = 0.3) {
  Rng proto_rng(12345);
  std::vector<std::vector<float>> prototypes(10, std::vector<float>(784));
  for (auto& p : prototypes) {
    for (auto& v : p) v = proto_rng.uniform() < 0.2 ? 1.0f : 0.0f;
  }
  Rng rng(seed);
  Dataset d;
  d.images.resize(count * 784);
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng.below(10));
    d.labels[i] = label;
    for (std::size_t k = 0; k < 784; ++k) {
      const double v = prototypes[label][k] + rng.uniform(-noise, noise);
      d.images[i * 784 + k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return d;
}

inline bool rel_close(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

}  // namespace nest::testing

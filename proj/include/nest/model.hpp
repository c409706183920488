#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nest/kernels.hpp"
#include "nest/rng.hpp"
#include "nest/tensor.hpp"

namespace nest {

enum class LayerKind { FullyConnected, Conv, BatchNorm, Activation, Flatten, Pool };
enum class ActivationKind { Relu, Tanh, LeakyRelu, Identity };

const char* to_string(LayerKind kind);
const char* to_string(ActivationKind kind);
LayerKind layer_kind_from_string(const std::string& name);
ActivationKind activation_from_string(const std::string& name);

// Per-sample feature shape: channels x height x width. Flat vectors use
// height = width = 1.
struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  bool flat() const { return height == 1 && width == 1; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::Activation;
  std::size_t units = 0;    // fully-connected: output units, conv: output maps
  std::size_t kernel = 0;   // conv
  std::size_t padding = 0;  // conv
  std::size_t window = 2;   // pool window and stride
  ActivationKind activation = ActivationKind::Relu;
  FeatureShape in;   // derived by shape inference
  FeatureShape out;  // derived by shape inference

  static LayerSpec fully_connected(std::size_t units);
  static LayerSpec conv(std::size_t maps, std::size_t kernel, std::size_t padding);
  static LayerSpec batchnorm();
  static LayerSpec activation_layer(ActivationKind kind);
  static LayerSpec flatten();
  static LayerSpec pool(std::size_t window);

  bool parametric() const { return kind == LayerKind::FullyConnected || kind == LayerKind::Conv; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Architecture {
  std::string name;
  FeatureShape input;
  std::vector<LayerSpec> layers;
};

// 784-300-100-10 multilayer perceptron.
Architecture lenet_300_100();
// conv 6@5x5 (same) - pool - conv 16@5x5 (valid) - pool - fc 400-120-84-10.
Architecture lenet5();
Architecture architecture_by_name(const std::string& name);

struct ArchRatio {
  double r = 1.0;
  double density = 1.0;
};

template <typename T>
struct Layer {
  LayerSpec spec;
  MaskedTensor<T> weights;               // fc [out x in], conv [M x N x k x k]
  std::vector<T> bias;                   // fc: per unit, conv: per output map
  std::vector<std::uint8_t> area_mask;   // conv only, [M x N x P x Q]
  std::vector<T> running_mean;           // batchnorm only
  std::vector<T> running_var;            // batchnorm only

  friend bool operator==(const Layer&, const Layer&) = default;
};

template <typename T>
class Model {
 public:
  FeatureShape input;
  std::vector<Layer<T>> layers;
  std::uint64_t seed = 0;
  Rng rng;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  std::vector<std::size_t> parametric_layers() const;
  std::optional<std::size_t> next_parametric(std::size_t index) const;
  std::size_t classes() const;
  // Active weight positions across all parametric layers.
  std::size_t active_connections() const;
  // Units (fc) and maps (conv) in every parametric layer except the output layer.
  std::size_t hidden_units() const;
  // Output widths of the hidden parametric layers.
  std::vector<std::size_t> hidden_widths() const;
  // True for a fully-connected layer whose outputs feed another
  // fully-connected layer through batchnorm/activation layers only.
  bool is_hidden_fc(std::size_t index) const;

  // Running normalization terms of a batchnorm layer: E = mean, V = sqrt(var + eps).
  BatchNormParams<T> batchnorm_params(std::size_t index) const;
  // Index of a batchnorm layer directly fed by parametric layer `index`, if any.
  std::optional<std::size_t> following_batchnorm(std::size_t index) const;

  // Recomputes every layer's in/out shape and checks parameter arrays against them.
  void infer_shapes();

  friend bool operator==(const Model&, const Model&) = default;
};

// Model with every weight position dormant, zero biases and all-ones area masks.
template <typename T>
Model<T> build_model(const Architecture& arch, std::uint64_t seed);

// Scaled, sparsely connected, fully initialized seed network.
template <typename T>
Model<T> make_seed(const Architecture& base, const ArchRatio& ratio, std::uint64_t seed);

// Architecture with hidden widths scaled by r (output layer untouched).
Architecture scale_architecture(const Architecture& base, double r);

// Uniform init bound sqrt(6 / (fan_in + fan_out)) from the layer's active fan counts.
template <typename T>
double init_scale(const Layer<T>& layer);

// Adds the minimum number of connections so that every output unit of each
// parametric layer has an active incoming weight and every input unit an
// active outgoing weight. New weights are drawn from the init distribution.
// Returns the number of connections added.
template <typename T>
std::size_t ensure_connected(Model<T>& model);

// Per parametric layer: output units with no active incoming weight and
// input units with no active outgoing weight.
struct Disconnected {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
};
template <typename T>
Disconnected disconnected_units(const Layer<T>& layer);

template <typename T>
bool all_connected(const Model<T>& model);

// Appends one zero, fully dormant unit to hidden fc layer `index`.
template <typename T>
std::size_t add_neuron_slot(Model<T>& model, std::size_t index);

// Appends one zero, fully dormant feature map to conv layer `index`.
template <typename T>
std::size_t add_feature_map_slot(Model<T>& model, std::size_t index);

// Deletes the listed units of hidden fc layer `index` together with their
// outgoing weights.
template <typename T>
void remove_units(Model<T>& model, std::size_t index, const std::vector<std::size_t>& units);

}  // namespace nest

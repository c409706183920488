#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nest/model.hpp"
#include "nest/tensor.hpp"

namespace nest {

// Train: batch-norm layers normalize with batch statistics.
// Eval: batch-norm layers use running statistics.
enum class Mode { Train, Eval };

template <typename T>
struct LayerGradients {
  Tensor<T> d_weights;       // dL/dW at every position, dormant ones included
  std::vector<T> d_bias;
  Tensor<T> d_output;        // dL/du for the layer's output u
};

// Per-layer cached values of one forward pass. inputs[i] is the input of
// layer i (the x feeding it), outputs[i] its output (u for fc/conv layers).
template <typename T>
struct LayerActivations {
  std::vector<Tensor<T>> inputs;
  std::vector<Tensor<T>> outputs;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<std::vector<T>> bn_batch_mean;
  std::vector<std::vector<T>> bn_batch_var;
};

template <typename T>
struct BatchGradients {
  double loss = 0.0;
  std::vector<LayerGradients<T>> layers;  // indexed like Model::layers
  LayerActivations<T> activations;
};

// Reshapes a [batch x ...] tensor to the model's per-sample input shape.
template <typename T>
Tensor<T> shape_input(const Model<T>& model, const Tensor<T>& input);

template <typename T>
Tensor<T> forward(const Model<T>& model, const Tensor<T>& input, Mode mode = Mode::Eval,
                  LayerActivations<T>* cache = nullptr);

template <typename T>
double evaluate_loss(const Model<T>& model, const Tensor<T>& input, std::span<const int> labels,
                     Mode mode = Mode::Train);

template <typename T>
BatchGradients<T> backward(const Model<T>& model, const Tensor<T>& input, std::span<const int> labels,
                           Mode mode = Mode::Train);

// w <- w - lr * dW on active positions; biases updated; dormant positions stay 0.
template <typename T>
void sgd_step(Model<T>& model, const BatchGradients<T>& grads, double lr);

// Moves running batch-norm statistics toward the batch statistics in `grads`.
template <typename T>
void update_running_stats(Model<T>& model, const BatchGradients<T>& grads);

// SGD with optional classical momentum; velocity is tracked on active
// positions only.
template <typename T>
class Sgd {
 public:
  explicit Sgd(double momentum = 0.0) : momentum_(momentum) {}
  void step(Model<T>& model, const BatchGradients<T>& grads, double lr);
  void reset() { velocity_.clear(); }

 private:
  double momentum_;
  std::vector<std::vector<T>> velocity_;
  std::vector<std::vector<T>> bias_velocity_;
};

template <typename To, typename From>
Model<To> model_cast(const Model<From>& model);

}  // namespace nest

#include "nest/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nest/errors.hpp"
#include "nest/kernels.hpp"
#include "nest/network.hpp"
#include "nest/selection.hpp"

namespace nest {

void PruneParams::validate() const {
  if (!(weight_ratio > 0.0 && weight_ratio < 1.0)) throw ConfigError("prune.weight_ratio", "must be in (0, 1)");
  for (double r : layer_ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("prune.layer_ratios", "every ratio must be in [0, 1)");
  }
  if (!(area_ratio > 0.0 && area_ratio < 1.0)) throw ConfigError("prune.area_ratio", "must be in (0, 1)");
  if (!(neuron_out_threshold >= 0.0)) throw ConfigError("prune.neuron_out_threshold", "must be non-negative");
  if (retrain_epochs < 1) throw ConfigError("prune.retrain_epochs", "must be at least 1");
  if (!(accuracy_floor >= 0.0 && accuracy_floor < 1.0)) {
    throw ConfigError("prune.accuracy_floor", "must be in [0, 1)");
  }
}

template <typename T>
std::vector<double> effective_magnitudes(const Model<T>& model, std::size_t index) {
  const Layer<T>& layer = model.layers.at(index);
  if (!layer.spec.parametric()) throw StructuralError("layer " + std::to_string(index) + " has no weights");
  std::vector<double> score(layer.weights.size());
  if (auto bn = model.following_batchnorm(index)) {
    const auto [folded, bias] = fold_effective_params(layer.weights, std::span<const T>(layer.bias), model.batchnorm_params(*bn));
    for (std::size_t i = 0; i < score.size(); ++i) score[i] = std::abs(static_cast<double>(folded.value(i)));
  } else {
    for (std::size_t i = 0; i < score.size(); ++i) score[i] = std::abs(static_cast<double>(layer.weights.value(i)));
  }
  return score;
}

template <typename T>
std::size_t prune_weights_step(Model<T>& model, const PruneParams& params) {
  struct Plan {
    std::size_t layer;
    std::vector<std::size_t> positions;
  };
  std::vector<Plan> plans;
  const std::vector<std::size_t> parametric = model.parametric_layers();
  if (!params.layer_ratios.empty() && params.layer_ratios.size() != parametric.size()) {
    throw ConfigError("prune.layer_ratios", "expected " + std::to_string(parametric.size()) + " entries, got " +
                                                std::to_string(params.layer_ratios.size()));
  }
  for (std::size_t j = 0; j < parametric.size(); ++j) {
    const std::size_t li = parametric[j];
    const Layer<T>& layer = model.layers[li];
    if (layer.spec.kind == LayerKind::Conv && !params.prune_conv_weights) continue;
    const double ratio = params.layer_ratios.empty() ? params.weight_ratio : params.layer_ratios[j];
    if (ratio == 0.0) continue;
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      if (layer.weights.active(i)) active.push_back(i);
    }
    const std::size_t k = ceil_fraction(ratio, active.size());
    if (k >= active.size()) {
      throw PruneExhaustedError("layer " + std::to_string(li) + " would lose all of its weights");
    }
    const std::vector<double> score = effective_magnitudes(model, li);
    plans.push_back({li, select_smallest<double>(score, std::move(active), k)});
  }
  std::size_t pruned = 0;
  for (const Plan& plan : plans) {
    for (std::size_t i : plan.positions) model.layers[plan.layer].weights.deactivate(i);
    pruned += plan.positions.size();
  }
  return pruned;
}

template <typename T>
std::size_t prune_neurons(Model<T>& model, const Tensor<T>& input, const PruneParams& params) {
  LayerActivations<T> cache;
  forward(model, input, Mode::Eval, &cache);
  struct Plan {
    std::size_t layer;
    std::vector<std::size_t> units;
    std::vector<double> mean_out;
  };
  std::vector<Plan> plans;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    if (!model.is_hidden_fc(li)) continue;
    const std::size_t next = *model.next_parametric(li);
    const Tensor<T>& x = cache.outputs[next - 1];
    const std::size_t batch = x.dim(0), width = x.size() / batch;
    const Disconnected dead_in = disconnected_units(model.layers[li]);
    const Disconnected dead_out = disconnected_units(model.layers[next]);
    std::vector<std::uint8_t> remove(width, 0);
    for (std::size_t u : dead_in.rows) remove[u] = 1;
    for (std::size_t u : dead_out.cols) remove[u] = 1;
    Plan plan{li, {}, std::vector<double>(width, 0.0)};
    std::vector<double> mean_abs(width, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t u = 0; u < width; ++u) {
        const double v = static_cast<double>(x.data[b * width + u]);
        plan.mean_out[u] += v;
        mean_abs[u] += std::abs(v);
      }
    }
    for (std::size_t u = 0; u < width; ++u) {
      plan.mean_out[u] /= static_cast<double>(batch);
      if (mean_abs[u] / static_cast<double>(batch) <= params.neuron_out_threshold) remove[u] = 1;
      if (remove[u]) plan.units.push_back(u);
    }
    if (plan.units.size() == width) {
      throw StructuralError("neuron pruning would empty layer " + std::to_string(li));
    }
    if (!plan.units.empty()) plans.push_back(std::move(plan));
  }
  std::size_t removed = 0;
  for (const Plan& plan : plans) {
    Layer<T>& nl = model.layers[*model.next_parametric(plan.layer)];
    const std::size_t rows = nl.weights.dim(0), cols = nl.weights.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      double shift = 0.0;
      for (std::size_t u : plan.units) {
        shift += static_cast<double>(nl.weights.value(r * cols + u)) * plan.mean_out[u];
      }
      nl.bias[r] = static_cast<T>(static_cast<double>(nl.bias[r]) + shift);
    }
    remove_units(model, plan.layer, plan.units);
    removed += plan.units.size();
  }
  return removed;
}

template <typename T>
AreaPruneResult partial_area_prune_step(Model<T>& model, std::size_t index, const Tensor<T>& input, double gamma) {
  if (index >= model.layers.size() || model.layers[index].spec.kind != LayerKind::Conv) {
    throw StructuralError("layer " + std::to_string(index) + " is not convolutional");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidParameterError("area pruning ratio must be in (0, 1)");
  LayerActivations<T> cache;
  forward(model, input, Mode::Eval, &cache);
  Layer<T>& layer = model.layers[index];
  const std::vector<double> score = mean_abs_depthwise(layer.weights, cache.inputs[index], layer.spec.padding);

  AreaPruneResult result;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < layer.area_mask.size(); ++i) {
    if (layer.area_mask[i]) active.push_back(i);
  }
  const std::size_t k = ceil_fraction(gamma, layer.area_mask.size());
  if (k >= active.size()) {
    result.exhausted = true;
    return result;
  }
  // The k + 1 smallest; the largest of them is the threshold.
  const auto lowest = select_smallest<double>(score, active, k + 1);
  double thres = 0.0;
  for (std::size_t i : lowest) thres = std::max(thres, score[i]);
  result.threshold = thres;
  for (std::size_t i : active) {
    if (score[i] < thres) {
      layer.area_mask[i] = 0;
      ++result.pruned;
    }
  }
  return result;
}

template <typename T>
std::uint64_t retrain(Model<T>& model, const Dataset& train, std::size_t epochs, const LrSchedule& schedule,
                      const TrainOptions& options, std::size_t epoch_offset) {
  if (epochs < 1) throw InvalidParameterError("retraining needs at least one epoch");
  std::uint64_t samples = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    samples += train_epoch(model, train, schedule.at(epoch_offset + e), options).samples;
  }
  return samples;
}

#define NEST_INSTANTIATE(T)                                                                          \
  template std::vector<double> effective_magnitudes(const Model<T>&, std::size_t);                   \
  template std::size_t prune_weights_step(Model<T>&, const PruneParams&);                            \
  template std::size_t prune_neurons(Model<T>&, const Tensor<T>&, const PruneParams&);               \
  template AreaPruneResult partial_area_prune_step(Model<T>&, std::size_t, const Tensor<T>&, double); \
  template std::uint64_t retrain(Model<T>&, const Dataset&, std::size_t, const LrSchedule&,          \
                                 const TrainOptions&, std::size_t);

NEST_INSTANTIATE(float)
NEST_INSTANTIATE(double)

}  // namespace nest

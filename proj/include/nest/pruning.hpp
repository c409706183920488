#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "nest/data.hpp"
#include "nest/model.hpp"
#include "nest/tensor.hpp"
#include "nest/trainer.hpp"

namespace nest {

struct PruneParams {
  double weight_ratio = 0.01;        // fraction of active weights pruned per layer and step
  std::vector<double> layer_ratios;  // optional per parametric layer override of weight_ratio; 0 skips a layer
  double area_ratio = 0.01;          // fraction of area-mask positions pruned per conv layer and step
  double neuron_out_threshold = 0.0; // units with batch-mean |x| <= this are removed
  std::size_t retrain_epochs = 3;
  double accuracy_floor = 0.98;
  bool prune_weights = true;
  bool prune_conv_weights = true;
  bool prune_areas = true;

  void validate() const;
};

// |W*| per position of parametric layer `index`, with W* = W / V when a
// batchnorm layer directly follows (running statistics), else |W|.
template <typename T>
std::vector<double> effective_magnitudes(const Model<T>& model, std::size_t index);

// Deactivates, in every parametric layer, the ceil(weight_ratio * active)
// active positions with the smallest effective magnitude. Throws
// PruneExhaustedError without touching the model when any layer would be
// left with no active weight. Returns the number of positions pruned.
template <typename T>
std::size_t prune_weights_step(Model<T>& model, const PruneParams& params);

// Removes hidden fc units with no active incoming or outgoing weight, and
// units whose batch-mean |output| is at most neuron_out_threshold. The
// mean output of each removed unit is folded into the next layer's bias.
// Throws StructuralError (model untouched) if a layer would become empty.
template <typename T>
std::size_t prune_neurons(Model<T>& model, const Tensor<T>& input, const PruneParams& params);

struct AreaPruneResult {
  std::size_t pruned = 0;
  double threshold = 0.0;
  bool exhausted = false;  // nothing left to prune at this ratio
};

// One partial-area step on conv layer `index`: with k = ceil(gamma*M*N*P*Q),
// the threshold is the (k+1)-th smallest batch-mean |C| among positions
// still in the area mask, and positions strictly below it leave the mask.
template <typename T>
AreaPruneResult partial_area_prune_step(Model<T>& model, std::size_t index, const Tensor<T>& input, double gamma);

// Fine-tunes active weights for `epochs` epochs; masks stay fixed.
// Returns the number of samples trained.
template <typename T>
std::uint64_t retrain(Model<T>& model, const Dataset& train, std::size_t epochs, const LrSchedule& schedule,
                      const TrainOptions& options, std::size_t epoch_offset = 0);

}  // namespace nest

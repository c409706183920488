#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nest/data.hpp"
#include "nest/model.hpp"

namespace nest {

// Per parametric layer accounting.
struct LayerStats {
  std::size_t layer = 0;           // index into Model::layers
  std::size_t weights_active = 0;
  double act_pct = 1.0;            // mean fraction of non-zero outputs after the activation
  double conv_pct = 1.0;           // conv: area-of-interest fraction, weighted by active kernels
  double flops = 0.0;

  friend bool operator==(const LayerStats&, const LayerStats&) = default;
};

// Active weights plus the biases of every retained unit and map.
template <typename T>
std::size_t count_params(const Model<T>& model);

// Two operations per multiply-accumulate; biases are not counted.
double fc_flops(std::size_t active_weights, double input_act_pct);
double conv_flops(std::size_t active_weights, std::size_t output_positions, double conv_pct);

struct Measurement {
  double accuracy = 0.0;
  double loss = 0.0;
  std::vector<double> act_pct;  // per parametric layer
};

// One eval-mode pass over `data`: accuracy, mean loss, and the fraction of
// non-zero post-activation outputs of every parametric layer.
template <typename T>
Measurement measure(const Model<T>& model, const Dataset& data, std::size_t chunk = 1000);

template <typename T>
std::vector<double> measure_act_pct(const Model<T>& model, const Dataset& data);

// Fraction of retained area-mask positions of conv layer `index`, each
// (input map, output map) pair weighted by its active kernel taps.
template <typename T>
double conv_area_fraction(const Model<T>& model, std::size_t index);

// Stats for every parametric layer from measured Act%.
template <typename T>
std::vector<LayerStats> layer_stats(const Model<T>& model, std::span<const double> act_pct);

// Sum of per-layer FLOPs. FC layers are discounted by the Act% of the
// preceding parametric layer (1 for the first), conv layers by Conv%.
// Throws AccountingError unless `stats` covers every parametric layer.
template <typename T>
std::uint64_t count_flops(const Model<T>& model, std::span<const LayerStats> stats);

}  // namespace nest

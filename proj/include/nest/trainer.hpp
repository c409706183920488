#pragma once

#include <cstddef>
#include <cstdint>

#include "nest/data.hpp"
#include "nest/model.hpp"

namespace nest {

// Step decay: lr(epoch) = initial * decay^floor(epoch / step_epochs).
struct LrSchedule {
  double initial = 0.1;
  double decay = 0.5;
  std::size_t step_epochs = 10;

  double at(std::size_t epoch) const;
};

struct TrainOptions {
  std::size_t batch_size = 64;
  double momentum = 0.9;
  bool augment = false;
  AffineBounds distortion;
};

struct EpochResult {
  double mean_loss = 0.0;
  std::uint64_t samples = 0;
};

// One pass over `data` in a permutation drawn from model.rng. Momentum
// state starts from zero for every epoch.
template <typename T>
EpochResult train_epoch(Model<T>& model, const Dataset& data, double lr, const TrainOptions& options);

// Fraction of correctly classified samples (eval mode).
template <typename T>
double accuracy(const Model<T>& model, const Dataset& data, std::size_t chunk = 1000);

}  // namespace nest

#include "nest/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "nest/kernels.hpp"
#include "nest/network.hpp"

namespace nest {

double LrSchedule::at(std::size_t epoch) const {
  const std::size_t steps = step_epochs == 0 ? 0 : epoch / step_epochs;
  return initial * std::pow(decay, static_cast<double>(steps));
}

template <typename T>
EpochResult train_epoch(Model<T>& model, const Dataset& data, double lr, const TrainOptions& options) {
  Sgd<T> optimizer(options.momentum);
  EpochResult result;
  double total = 0.0;
  std::size_t iteration = 0;
  for (const auto& batch : batches(data.size(), options.batch_size, model.rng)) {
    auto [x, labels] = make_batch<T>(data, batch);
    if (options.augment) {
      std::vector<float> pixels(x.data.begin(), x.data.end());
      affine_distort(pixels, data.rows, data.cols, model.rng, options.distortion);
      std::copy(pixels.begin(), pixels.end(), x.data.begin());
    }
    BatchGradients<T> grads = backward(model, x, labels, Mode::Train);
    if (!std::isfinite(grads.loss)) {
      throw NumericError(model.layers.size() - 1, "loss diverged at iteration " + std::to_string(iteration));
    }
    optimizer.step(model, grads, lr);
    update_running_stats(model, grads);
    total += grads.loss * static_cast<double>(batch.size());
    result.samples += batch.size();
    ++iteration;
  }
  result.mean_loss = total / static_cast<double>(result.samples);
  return result;
}

template <typename T>
double accuracy(const Model<T>& model, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw InputError("accuracy needs a non-empty dataset");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    auto [x, labels] = make_batch<T>(data, idx);
    const Tensor<T> logits = forward(model, x, Mode::Eval);
    const std::size_t classes = logits.dim(1);
    for (std::size_t b = 0; b < labels.size(); ++b) {
      const T* row = logits.data.data() + b * classes;
      const auto pred = static_cast<int>(std::max_element(row, row + classes) - row);
      if (pred == labels[b]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template EpochResult train_epoch(Model<float>&, const Dataset&, double, const TrainOptions&);
template EpochResult train_epoch(Model<double>&, const Dataset&, double, const TrainOptions&);
template double accuracy(const Model<float>&, const Dataset&, std::size_t);
template double accuracy(const Model<double>&, const Dataset&, std::size_t);

}  // namespace nest

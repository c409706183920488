#pragma once

#include "nest/network.hpp"

namespace nest::testing {

// Central difference of the loss w.r.t. the value at weight position `pos`
// of layer `layer`, dormant positions included (evaluated around 0).
inline double numeric_weight_gradient(Model<double> model, std::size_t layer, std::size_t pos,
                                      const Tensor<double>& x, std::span<const int> labels, Mode mode,
                                      double step = 1e-5) {
  auto& w = model.layers[layer].weights;
  const double base = w.value(pos);
  w.activate(pos, base + step);
  const double up = evaluate_loss(model, x, labels, mode);
  w.activate(pos, base - step);
  const double down = evaluate_loss(model, x, labels, mode);
  return (up - down) / (2 * step);
}

inline double numeric_bias_gradient(Model<double> model, std::size_t layer, std::size_t unit,
                                    const Tensor<double>& x, std::span<const int> labels, Mode mode,
                                    double step = 1e-5) {
  auto& b = model.layers[layer].bias;
  const double base = b[unit];
  b[unit] = base + step;
  const double up = evaluate_loss(model, x, labels, mode);
  b[unit] = base - step;
  const double down = evaluate_loss(model, x, labels, mode);
  return (up - down) / (2 * step);
}

}  // namespace nest::testing

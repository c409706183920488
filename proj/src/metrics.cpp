#include "nest/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "nest/errors.hpp"
#include "nest/kernels.hpp"
#include "nest/network.hpp"

namespace nest {

template <typename T>
std::size_t count_params(const Model<T>& model) {
  std::size_t total = 0;
  for (std::size_t li : model.parametric_layers()) {
    total += model.layers[li].weights.active_count() + model.layers[li].bias.size();
  }
  return total;
}

double fc_flops(std::size_t active_weights, double input_act_pct) {
  return 2.0 * static_cast<double>(active_weights) * input_act_pct;
}

double conv_flops(std::size_t active_weights, std::size_t output_positions, double conv_pct) {
  return 2.0 * static_cast<double>(active_weights) * static_cast<double>(output_positions) * conv_pct;
}

namespace {

// Index of the layer whose output is parametric layer `li`'s activated output.
template <typename T>
std::size_t activated_output(const Model<T>& model, std::size_t li) {
  std::size_t j = li;
  while (j + 1 < model.layers.size()) {
    const LayerKind k = model.layers[j + 1].spec.kind;
    if (k != LayerKind::BatchNorm && k != LayerKind::Activation) break;
    ++j;
  }
  return j;
}

}  // namespace

template <typename T>
Measurement measure(const Model<T>& model, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw InputError("measurement needs a non-empty dataset");
  const auto params = model.parametric_layers();
  std::vector<std::size_t> taps;
  for (std::size_t li : params) taps.push_back(activated_output(model, li));
  std::vector<double> nonzero(params.size(), 0.0);
  std::vector<std::size_t> width(params.size(), 0);
  std::size_t correct = 0;
  double loss_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    auto [x, labels] = make_batch<T>(data, idx);
    LayerActivations<T> cache;
    const Tensor<T> logits = forward(model, x, Mode::Eval, &cache);
    loss_sum += loss(logits, labels) * static_cast<double>(labels.size());
    const std::size_t classes = logits.dim(1);
    for (std::size_t b = 0; b < labels.size(); ++b) {
      const T* row = logits.data.data() + b * classes;
      if (static_cast<int>(std::max_element(row, row + classes) - row) == labels[b]) ++correct;
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Tensor<T>& out = cache.outputs[taps[p]];
      width[p] = out.size() / out.dim(0);
      nonzero[p] += static_cast<double>(std::count_if(out.data.begin(), out.data.end(), [](T v) { return v != T{0}; }));
    }
  }
  Measurement m;
  const double n = static_cast<double>(data.size());
  m.accuracy = static_cast<double>(correct) / n;
  m.loss = loss_sum / n;
  for (std::size_t p = 0; p < params.size(); ++p) {
    m.act_pct.push_back(nonzero[p] / (n * static_cast<double>(width[p])));
  }
  return m;
}

template <typename T>
std::vector<double> measure_act_pct(const Model<T>& model, const Dataset& data) {
  return measure(model, data).act_pct;
}

template <typename T>
double conv_area_fraction(const Model<T>& model, std::size_t index) {
  const Layer<T>& layer = model.layers.at(index);
  if (layer.spec.kind != LayerKind::Conv) throw StructuralError("layer " + std::to_string(index) + " is not convolutional");
  const std::size_t pairs = layer.spec.in.channels * layer.spec.units;
  const std::size_t kk = layer.spec.kernel * layer.spec.kernel;
  const std::size_t plane = layer.spec.out.height * layer.spec.out.width;
  double kept = 0.0, total = 0.0;
  std::size_t kept_all = 0;
  for (std::size_t p = 0; p < pairs; ++p) {
    std::size_t taps = 0;
    for (std::size_t t = 0; t < kk; ++t) taps += layer.weights.active(p * kk + t) ? 1 : 0;
    const auto* a = layer.area_mask.data() + p * plane;
    const auto area = static_cast<std::size_t>(std::count(a, a + plane, std::uint8_t{1}));
    kept += static_cast<double>(taps * area);
    total += static_cast<double>(taps * plane);
    kept_all += area;
  }
  if (total == 0.0) return static_cast<double>(kept_all) / static_cast<double>(pairs * plane);
  return kept / total;
}

template <typename T>
std::vector<LayerStats> layer_stats(const Model<T>& model, std::span<const double> act_pct) {
  const auto params = model.parametric_layers();
  if (act_pct.size() != params.size()) throw AccountingError("Act% missing for some parametric layer");
  std::vector<LayerStats> stats;
  for (std::size_t p = 0; p < params.size(); ++p) {
    LayerStats s;
    s.layer = params[p];
    s.weights_active = model.layers[params[p]].weights.active_count();
    s.act_pct = act_pct[p];
    if (model.layers[params[p]].spec.kind == LayerKind::Conv) s.conv_pct = conv_area_fraction(model, params[p]);
    stats.push_back(s);
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Layer<T>& layer = model.layers[params[p]];
    if (layer.spec.kind == LayerKind::Conv) {
      stats[p].flops = conv_flops(stats[p].weights_active, layer.spec.out.height * layer.spec.out.width,
                                  stats[p].conv_pct);
    } else {
      stats[p].flops = fc_flops(stats[p].weights_active, p == 0 ? 1.0 : stats[p - 1].act_pct);
    }
  }
  return stats;
}

template <typename T>
std::uint64_t count_flops(const Model<T>& model, std::span<const LayerStats> stats) {
  const auto params = model.parametric_layers();
  if (stats.size() != params.size()) {
    throw AccountingError("stats cover " + std::to_string(stats.size()) + " of " + std::to_string(params.size()) +
                          " parametric layers");
  }
  std::vector<double> act;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (stats[p].layer != params[p]) throw AccountingError("stats do not match layer " + std::to_string(params[p]));
    act.push_back(stats[p].act_pct);
  }
  double total = 0.0;
  for (const LayerStats& s : layer_stats(model, act)) total += s.flops;
  return static_cast<std::uint64_t>(std::llround(total));
}

#define NEST_INSTANTIATE(T)                                                                  \
  template std::size_t count_params(const Model<T>&);                                        \
  template Measurement measure(const Model<T>&, const Dataset&, std::size_t);               \
  template std::vector<double> measure_act_pct(const Model<T>&, const Dataset&);            \
  template double conv_area_fraction(const Model<T>&, std::size_t);                         \
  template std::vector<LayerStats> layer_stats(const Model<T>&, std::span<const double>);    \
  template std::uint64_t count_flops(const Model<T>&, std::span<const LayerStats>);

NEST_INSTANTIATE(float)
NEST_INSTANTIATE(double)

}  // namespace nest

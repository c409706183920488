#include "nest/growth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "nest/errors.hpp"
#include "nest/selection.hpp"

namespace nest {

void GrowthParams::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("growth.alpha", "birth strength must be positive");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("growth.beta", "growth ratio must be in (0, 1]");
  if (!(conn_fraction > 0.0 && conn_fraction <= 1.0)) {
    throw ConfigError("growth.conn_fraction", "must be in (0, 1]");
  }
  if (candidates < 1) throw ConfigError("growth.candidates", "need at least one candidate");
  if (growth_batch < 1) throw ConfigError("growth.growth_batch", "must be positive");
}

template <typename T>
std::size_t grow_connections(Model<T>& model, const BatchGradients<T>& grads, const GrowthParams& params,
                             double lr) {
  std::size_t activated = 0;
  for (std::size_t li : model.parametric_layers()) {
    auto& weights = model.layers[li].weights;
    const auto& dw = grads.layers[li].d_weights;
    if (dw.size() != weights.size()) throw DimensionError("gradient shape does not match layer weights");
    std::vector<std::size_t> dormant;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!weights.active(i)) dormant.push_back(i);
    }
    if (dormant.empty()) continue;
    std::vector<double> score(weights.size());
    for (std::size_t i : dormant) score[i] = std::abs(static_cast<double>(dw.data[i]));
    const std::size_t k = ceil_fraction(params.conn_fraction, dormant.size());
    for (std::size_t i : select_largest<double>(score, std::move(dormant), k)) {
      weights.activate(i, static_cast<T>(-lr * static_cast<double>(dw.data[i])));
      ++activated;
    }
  }
  return activated;
}

namespace {

template <typename T>
std::size_t bridged_layer(const Model<T>& model, std::size_t index) {
  if (!model.is_hidden_fc(index)) {
    throw StructuralError("layer " + std::to_string(index) + " is not a hidden fully-connected layer");
  }
  return *model.next_parametric(index);
}

template <typename T>
double mean_abs_active(const MaskedTensor<T>& w) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w.active(i)) {
      sum += std::abs(static_cast<double>(w.value(i)));
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace

template <typename T>
Tensor<T> bridging_gradients(const Model<T>& model, std::size_t index, const BatchGradients<T>& grads) {
  const std::size_t next = bridged_layer(model, index);
  const Tensor<T>& x = grads.activations.inputs.at(index);
  const Tensor<T>& du = grads.layers.at(next).d_output;
  const std::size_t batch = x.dim(0);
  const std::size_t n = x.size() / batch, m = du.size() / batch;
  if (du.dim(0) != batch || n != model.layers[index].spec.in.channels) {
    throw StructuralError("bridging gradient shapes do not match layer " + std::to_string(index));
  }
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Tensor<T> g{{m, n}, std::vector<T>(m * n)};
  Eigen::Map<const Mat> xm(x.data.data(), batch, n);
  Eigen::Map<const Mat> dum(du.data.data(), batch, m);
  Eigen::Map<Mat>(g.data.data(), m, n).noalias() = dum.transpose() * xm;
  return g;
}

template <typename T>
Tensor<T> bridging_gradients(const Model<T>& model, std::size_t index, const Tensor<T>& input,
                             std::span<const int> labels) {
  bridged_layer(model, index);
  return bridging_gradients(model, index, backward(model, input, labels, Mode::Train));
}

template <typename T>
NeuronGrowth<T> grow_neuron(Model<T>& model, std::size_t index, const Tensor<T>& input,
                            std::span<const int> labels, const GrowthParams& params) {
  const std::size_t next = bridged_layer(model, index);
  const Tensor<T> g = bridging_gradients(model, index, input, labels);
  const std::size_t m_count = g.dim(0), n_count = g.dim(1);
  const std::size_t pairs = floor_fraction(params.beta, m_count * n_count);
  if (pairs < 1) throw ConfigError("growth.beta", "beta * M * N must be at least 1");

  std::vector<double> score(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) score[i] = std::abs(static_cast<double>(g.data[i]));
  std::vector<std::size_t> all(g.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  NeuronGrowth<T> out;
  out.pairs = select_largest<double>(score, std::move(all), pairs);
  out.raw_in.assign(n_count, T{0});
  out.raw_out.assign(m_count, T{0});
  std::vector<std::uint8_t> touched_in(n_count, 0), touched_out(m_count, 0);
  const Rng rng_before = model.rng;
  for (std::size_t flat : out.pairs) {
    const std::size_t m = flat / n_count, n = flat % n_count;
    const T gv = g.data[flat];
    const T sign = static_cast<T>(model.rng.sign());
    const T dw = std::sqrt(std::abs(gv)) * sign;
    const T sgn = static_cast<T>((gv > T{0}) - (gv < T{0}));
    out.signs.push_back(sign);
    out.raw_out[m] += dw;
    // Descent direction: the pair's product -dw^2 * sgn(G) opposes the bridging gradient.
    out.raw_in[n] += -dw * sgn;
    touched_out[m] = touched_in[n] = 1;
  }

  auto touched_mean = [](const std::vector<T>& w, const std::vector<std::uint8_t>& touched) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (touched[i]) {
        sum += std::abs(static_cast<double>(w[i]));
        ++count;
      }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  };
  const double avg_in = touched_mean(out.raw_in, touched_in);
  const double avg_out = touched_mean(out.raw_out, touched_out);
  const double ref_in = mean_abs_active(model.layers[index].weights);
  const double ref_out = mean_abs_active(model.layers[next].weights);
  if (avg_in == 0.0 || avg_out == 0.0 || ref_in == 0.0 || ref_out == 0.0) {
    model.rng = rng_before;
    throw GrowthDegenerateError("no non-zero weight to grow in layer " + std::to_string(index));
  }
  const double scale_in = params.alpha * ref_in / avg_in;
  const double scale_out = params.alpha * ref_out / avg_out;
  out.w_in.resize(n_count);
  out.w_out.resize(m_count);
  for (std::size_t n = 0; n < n_count; ++n) out.w_in[n] = static_cast<T>(out.raw_in[n] * scale_in);
  for (std::size_t m = 0; m < m_count; ++m) out.w_out[m] = static_cast<T>(out.raw_out[m] * scale_out);

  out.unit = add_neuron_slot(model, index);
  auto& win = model.layers[index].weights;
  for (std::size_t n = 0; n < n_count; ++n) {
    if (touched_in[n]) win.activate(out.unit * n_count + n, out.w_in[n]);
  }
  auto& wout = model.layers[next].weights;
  const std::size_t width = wout.dim(1);
  for (std::size_t m = 0; m < m_count; ++m) {
    if (touched_out[m]) wout.activate(m * width + out.unit, out.w_out[m]);
  }
  return out;
}

template <typename T>
FeatureMapGrowth grow_feature_map(Model<T>& model, std::size_t index, const Tensor<T>& input,
                                  std::span<const int> labels, const GrowthParams& params) {
  if (params.candidates < 1) throw ConfigError("growth.candidates", "need at least one candidate");
  FeatureMapGrowth out;
  out.map = add_feature_map_slot(model, index);
  out.loss_before = evaluate_loss(model, input, labels, Mode::Train);

  Layer<T>& layer = model.layers[index];
  const std::size_t in_maps = layer.spec.in.channels, maps = layer.spec.units;
  const std::size_t kk = layer.spec.kernel * layer.spec.kernel;
  std::vector<std::size_t> in_pos;
  for (std::size_t m = 0; m < in_maps; ++m) {
    for (std::size_t t = 0; t < kk; ++t) in_pos.push_back((m * maps + out.map) * kk + t);
  }
  std::vector<std::size_t> out_pos;
  const auto next = model.next_parametric(index);
  if (next) {
    const Layer<T>& nl = model.layers[*next];
    if (nl.spec.kind == LayerKind::Conv) {
      const std::size_t per_map = nl.weights.size() / maps;
      for (std::size_t i = 0; i < per_map; ++i) out_pos.push_back(out.map * per_map + i);
    } else {
      const std::size_t rows = nl.weights.dim(0), cols = nl.weights.dim(1);
      const std::size_t plane = cols / maps;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t s = 0; s < plane; ++s) out_pos.push_back(r * cols + out.map * plane + s);
      }
    }
  }
  const double s_in = init_scale(model.layers[index]);
  const double s_out = next ? init_scale(model.layers[*next]) : 0.0;

  auto write = [&](const std::vector<T>& vin, const std::vector<T>& vout) {
    auto& w = model.layers[index].weights;
    for (std::size_t i = 0; i < in_pos.size(); ++i) w.activate(in_pos[i], vin[i]);
    if (next) {
      auto& nw = model.layers[*next].weights;
      for (std::size_t i = 0; i < out_pos.size(); ++i) nw.activate(out_pos[i], vout[i]);
    }
  };

  std::vector<T> best_in, best_out;
  double best = std::numeric_limits<double>::infinity();
  std::vector<T> vin(in_pos.size()), vout(out_pos.size());
  for (std::size_t c = 0; c < params.candidates; ++c) {
    for (auto& v : vin) v = static_cast<T>(model.rng.uniform(-s_in, s_in));
    for (auto& v : vout) v = static_cast<T>(model.rng.uniform(-s_out, s_out));
    write(vin, vout);
    const double l = evaluate_loss(model, input, labels, Mode::Train);
    out.candidate_losses.push_back(l);
    if (l < best) {
      best = l;
      out.chosen = c;
      best_in = vin;
      best_out = vout;
    }
  }
  if (best_in.empty() && !in_pos.empty()) {
    throw NumericError(index, "every candidate kernel set produced a non-finite loss");
  }
  write(best_in, best_out);
  return out;
}

#define NEST_INSTANTIATE(T)                                                                              \
  template std::size_t grow_connections(Model<T>&, const BatchGradients<T>&, const GrowthParams&, double); \
  template Tensor<T> bridging_gradients(const Model<T>&, std::size_t, const BatchGradients<T>&);          \
  template Tensor<T> bridging_gradients(const Model<T>&, std::size_t, const Tensor<T>&,                   \
                                        std::span<const int>);                                            \
  template NeuronGrowth<T> grow_neuron(Model<T>&, std::size_t, const Tensor<T>&, std::span<const int>,    \
                                       const GrowthParams&);                                              \
  template FeatureMapGrowth grow_feature_map(Model<T>&, std::size_t, const Tensor<T>&, std::span<const int>, \
                                             const GrowthParams&);

NEST_INSTANTIATE(float)
NEST_INSTANTIATE(double)

}  // namespace nest

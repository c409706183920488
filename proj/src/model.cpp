#include "nest/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nest {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Activation: return "activation";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Pool: return "pool";
  }
  return "?";
}

const char* to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::LeakyRelu: return "leaky-relu";
    case ActivationKind::Identity: return "identity";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto k : {LayerKind::FullyConnected, LayerKind::Conv, LayerKind::BatchNorm, LayerKind::Activation,
                 LayerKind::Flatten, LayerKind::Pool}) {
    if (name == to_string(k)) return k;
  }
  throw FormatError("unknown layer kind '" + name + "'");
}

ActivationKind activation_from_string(const std::string& name) {
  for (auto k : {ActivationKind::Relu, ActivationKind::Tanh, ActivationKind::LeakyRelu, ActivationKind::Identity}) {
    if (name == to_string(k)) return k;
  }
  throw FormatError("unknown activation '" + name + "'");
}

LayerSpec LayerSpec::fully_connected(std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::FullyConnected;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::conv(std::size_t maps, std::size_t kernel, std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.units = maps;
  s.kernel = kernel;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::batchnorm() {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm;
  return s;
}

LayerSpec LayerSpec::activation_layer(ActivationKind kind) {
  LayerSpec s;
  s.kind = LayerKind::Activation;
  s.activation = kind;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  return s;
}

LayerSpec LayerSpec::pool(std::size_t window) {
  LayerSpec s;
  s.kind = LayerKind::Pool;
  s.window = window;
  return s;
}

Architecture lenet_300_100() {
  Architecture a;
  a.name = "lenet-300-100";
  a.input = {784, 1, 1};
  a.layers = {LayerSpec::fully_connected(300), LayerSpec::activation_layer(ActivationKind::Relu),
              LayerSpec::fully_connected(100), LayerSpec::activation_layer(ActivationKind::Relu),
              LayerSpec::fully_connected(10)};
  return a;
}

Architecture lenet5() {
  Architecture a;
  a.name = "lenet-5";
  a.input = {1, 28, 28};
  a.layers = {LayerSpec::conv(6, 5, 2),        LayerSpec::activation_layer(ActivationKind::Relu),
              LayerSpec::pool(2),              LayerSpec::conv(16, 5, 0),
              LayerSpec::activation_layer(ActivationKind::Relu), LayerSpec::pool(2),
              LayerSpec::flatten(),            LayerSpec::fully_connected(120),
              LayerSpec::activation_layer(ActivationKind::Relu), LayerSpec::fully_connected(84),
              LayerSpec::activation_layer(ActivationKind::Relu), LayerSpec::fully_connected(10)};
  return a;
}

Architecture architecture_by_name(const std::string& name) {
  if (name == "lenet-300-100") return lenet_300_100();
  if (name == "lenet-5") return lenet5();
  throw ConfigError("arch.name", "unknown architecture '" + name + "'");
}

namespace {

// Propagates shapes through `layers`; returns the final output shape.
FeatureShape propagate_shapes(const FeatureShape& input, std::vector<LayerSpec*> specs) {
  FeatureShape cur = input;
  LayerKind prev = LayerKind::Activation;
  bool first = true;
  for (LayerSpec* s : specs) {
    s->in = cur;
    switch (s->kind) {
      case LayerKind::FullyConnected:
        if (!cur.flat()) throw StructuralError("fully-connected layer needs flat input; insert a flatten layer");
        if (s->units == 0) throw StructuralError("fully-connected layer with zero units");
        s->out = {s->units, 1, 1};
        break;
      case LayerKind::Conv:
        if (s->units == 0) throw StructuralError("conv layer with zero maps");
        s->out = {s->units, conv_output_extent(cur.height, s->kernel, s->padding),
                  conv_output_extent(cur.width, s->kernel, s->padding)};
        break;
      case LayerKind::BatchNorm:
        if (first || prev != LayerKind::FullyConnected) {
          throw StructuralError("batchnorm is supported directly after a fully-connected layer only");
        }
        s->out = cur;
        break;
      case LayerKind::Activation:
        s->out = cur;
        break;
      case LayerKind::Flatten:
        s->out = {cur.size(), 1, 1};
        break;
      case LayerKind::Pool:
        if (s->window == 0 || cur.height < s->window || cur.width < s->window) {
          throw StructuralError("pool window larger than its input");
        }
        s->out = {cur.channels, cur.height / s->window, cur.width / s->window};
        break;
    }
    prev = s->kind;
    first = false;
    cur = s->out;
  }
  return cur;
}

template <typename T>
void allocate(Layer<T>& layer) {
  const LayerSpec& s = layer.spec;
  switch (s.kind) {
    case LayerKind::FullyConnected:
      layer.weights = MaskedTensor<T>({s.units, s.in.channels});
      layer.bias.assign(s.units, T{0});
      break;
    case LayerKind::Conv:
      layer.weights = MaskedTensor<T>({s.in.channels, s.units, s.kernel, s.kernel});
      layer.bias.assign(s.units, T{0});
      layer.area_mask.assign(s.in.channels * s.units * s.out.height * s.out.width, 1);
      break;
    case LayerKind::BatchNorm:
      layer.running_mean.assign(s.in.channels, T{0});
      layer.running_var.assign(s.in.channels, T{1});
      break;
    default:
      break;
  }
}

// Output units ("rows") and input units ("cols") of a parametric layer.
template <typename T>
std::pair<std::size_t, std::size_t> unit_counts(const Layer<T>& layer) {
  if (layer.spec.kind == LayerKind::FullyConnected) return {layer.weights.dim(0), layer.weights.dim(1)};
  return {layer.weights.dim(1), layer.weights.dim(0)};
}

// Activates one connection between output unit `row` and input unit `col`,
// returning its flat position. Conv connections pick a uniform kernel offset.
template <typename T>
std::size_t connect(Layer<T>& layer, std::size_t row, std::size_t col, Rng& rng) {
  std::size_t pos;
  if (layer.spec.kind == LayerKind::FullyConnected) {
    pos = row * layer.weights.dim(1) + col;
  } else {
    const std::size_t kk = layer.spec.kernel * layer.spec.kernel;
    pos = (col * layer.weights.dim(1) + row) * kk + rng.below(kk);
  }
  layer.weights.activate(pos, T{0});
  return pos;
}

template <typename T>
std::vector<std::size_t> repair_layer(Layer<T>& layer, Rng& rng) {
  if (layer.weights.size() == 0) throw StructuralError("parametric layer with zero weight positions");
  Disconnected dead = disconnected_units(layer);
  std::vector<std::size_t> added;
  if (dead.rows.empty() && dead.cols.empty()) return added;
  const auto [rows, cols] = unit_counts(layer);
  rng.shuffle(std::span<std::size_t>(dead.cols));
  const std::size_t paired = std::min(dead.rows.size(), dead.cols.size());
  for (std::size_t t = 0; t < paired; ++t) added.push_back(connect(layer, dead.rows[t], dead.cols[t], rng));
  for (std::size_t t = paired; t < dead.rows.size(); ++t) {
    added.push_back(connect(layer, dead.rows[t], rng.below(cols), rng));
  }
  for (std::size_t t = paired; t < dead.cols.size(); ++t) {
    added.push_back(connect(layer, rng.below(rows), dead.cols[t], rng));
  }
  return added;
}

template <typename T>
MaskedTensor<T> rebuild(const Shape& shape, std::vector<T> values, std::vector<std::uint8_t> mask) {
  return MaskedTensor<T>(shape, std::move(values), std::move(mask));
}

}  // namespace

template <typename T>
std::vector<std::size_t> Model<T>::parametric_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].spec.parametric()) out.push_back(i);
  }
  return out;
}

template <typename T>
std::optional<std::size_t> Model<T>::next_parametric(std::size_t index) const {
  for (std::size_t i = index + 1; i < layers.size(); ++i) {
    if (layers[i].spec.parametric()) return i;
  }
  return std::nullopt;
}

template <typename T>
std::size_t Model<T>::classes() const {
  if (layers.empty()) return 0;
  return layers.back().spec.out.size();
}

template <typename T>
std::size_t Model<T>::active_connections() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    if (l.spec.parametric()) n += l.weights.active_count();
  }
  return n;
}

template <typename T>
std::vector<std::size_t> Model<T>::hidden_widths() const {
  std::vector<std::size_t> widths;
  auto idx = parametric_layers();
  for (std::size_t t = 0; t + 1 < idx.size(); ++t) widths.push_back(layers[idx[t]].spec.units);
  return widths;
}

template <typename T>
std::size_t Model<T>::hidden_units() const {
  auto w = hidden_widths();
  return std::accumulate(w.begin(), w.end(), std::size_t{0});
}

template <typename T>
bool Model<T>::is_hidden_fc(std::size_t index) const {
  if (index >= layers.size() || layers[index].spec.kind != LayerKind::FullyConnected) return false;
  for (std::size_t i = index + 1; i < layers.size(); ++i) {
    const LayerKind k = layers[i].spec.kind;
    if (k == LayerKind::FullyConnected) return true;
    if (k != LayerKind::BatchNorm && k != LayerKind::Activation) return false;
  }
  return false;
}

template <typename T>
BatchNormParams<T> Model<T>::batchnorm_params(std::size_t index) const {
  const Layer<T>& l = layers.at(index);
  if (l.spec.kind != LayerKind::BatchNorm) throw StructuralError("layer is not batchnorm");
  BatchNormParams<T> p;
  p.mean = l.running_mean;
  p.divisor.resize(l.running_var.size());
  for (std::size_t i = 0; i < p.divisor.size(); ++i) {
    p.divisor[i] = static_cast<T>(std::sqrt(static_cast<double>(l.running_var[i]) + bn_epsilon));
  }
  return p;
}

template <typename T>
std::optional<std::size_t> Model<T>::following_batchnorm(std::size_t index) const {
  if (index + 1 < layers.size() && layers[index + 1].spec.kind == LayerKind::BatchNorm) return index + 1;
  return std::nullopt;
}

template <typename T>
void Model<T>::infer_shapes() {
  std::vector<LayerSpec*> specs;
  for (auto& l : layers) specs.push_back(&l.spec);
  propagate_shapes(input, specs);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer<T>& l = layers[i];
    const LayerSpec& s = l.spec;
    auto fail = [i](const std::string& what) {
      throw StructuralError("layer " + std::to_string(i) + ": " + what);
    };
    switch (s.kind) {
      case LayerKind::FullyConnected:
        if (l.weights.shape() != Shape{s.units, s.in.channels}) fail("weights do not match shape");
        if (l.bias.size() != s.units) fail("bias does not match units");
        break;
      case LayerKind::Conv:
        if (l.weights.shape() != Shape{s.in.channels, s.units, s.kernel, s.kernel}) fail("kernels do not match shape");
        if (l.bias.size() != s.units) fail("bias does not match maps");
        if (l.area_mask.size() != s.in.channels * s.units * s.out.height * s.out.width) fail("area mask size");
        break;
      case LayerKind::BatchNorm:
        if (l.running_mean.size() != s.in.channels || l.running_var.size() != s.in.channels) fail("batchnorm terms");
        break;
      default:
        break;
    }
  }
}

template <typename T>
Model<T> build_model(const Architecture& arch, std::uint64_t seed) {
  Model<T> model;
  model.input = arch.input;
  model.seed = seed;
  model.rng = Rng(seed);
  for (const auto& spec : arch.layers) model.layers.push_back(Layer<T>{spec, {}, {}, {}, {}, {}});
  std::vector<LayerSpec*> specs;
  for (auto& l : model.layers) specs.push_back(&l.spec);
  propagate_shapes(model.input, specs);
  if (model.parametric_layers().empty()) throw StructuralError("architecture has no parametric layer");
  for (auto& l : model.layers) allocate(l);
  model.infer_shapes();
  return model;
}

Architecture scale_architecture(const Architecture& base, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw ConfigError("arch.ratio", "r must be in (0, 1]");
  Architecture a = base;
  std::size_t last = a.layers.size();
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].parametric()) last = i;
  }
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (!a.layers[i].parametric() || i == last) continue;
    const auto scaled = static_cast<std::size_t>(std::llround(r * static_cast<double>(a.layers[i].units)));
    if (scaled == 0) {
      throw ConfigError("arch.ratio", "r = " + std::to_string(r) + " gives a zero-width layer " + std::to_string(i));
    }
    a.layers[i].units = scaled;
  }
  return a;
}

template <typename T>
double init_scale(const Layer<T>& layer) {
  const auto [rows, cols] = unit_counts(layer);
  const double active = static_cast<double>(std::max<std::size_t>(layer.weights.active_count(), 1));
  const double fan_in = active / static_cast<double>(rows);
  const double fan_out = active / static_cast<double>(cols);
  return std::sqrt(6.0 / (fan_in + fan_out));
}

template <typename T>
Model<T> make_seed(const Architecture& base, const ArchRatio& ratio, std::uint64_t seed) {
  if (!(ratio.density > 0.0 && ratio.density <= 1.0)) {
    throw ConfigError("arch.density", "density must be in (0, 1]");
  }
  Model<T> model = build_model<T>(scale_architecture(base, ratio.r), seed);
  Rng& rng = model.rng;
  for (std::size_t li : model.parametric_layers()) {
    Layer<T>& layer = model.layers[li];
    const std::size_t total = layer.weights.size();
    const auto count = std::min<std::size_t>(
        total, static_cast<std::size_t>(std::llround(ratio.density * static_cast<double>(total))));
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t t = 0; t < count; ++t) {
      std::swap(order[t], order[t + rng.below(total - t)]);
      layer.weights.activate(order[t], T{0});
    }
  }
  for (std::size_t li : model.parametric_layers()) repair_layer(model.layers[li], rng);
  for (std::size_t li : model.parametric_layers()) {
    Layer<T>& layer = model.layers[li];
    const double s = init_scale(layer);
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      if (layer.weights.active(i)) layer.weights.set(i, static_cast<T>(rng.uniform(-s, s)));
    }
  }
  return model;
}

template <typename T>
Disconnected disconnected_units(const Layer<T>& layer) {
  const auto [rows, cols] = unit_counts(layer);
  std::vector<std::uint8_t> row_has(rows, 0), col_has(cols, 0);
  const auto mask = layer.weights.mask();
  if (layer.spec.kind == LayerKind::FullyConnected) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (mask[r * cols + c]) row_has[r] = col_has[c] = 1;
      }
    }
  } else {
    const std::size_t kk = layer.spec.kernel * layer.spec.kernel;
    for (std::size_t m = 0; m < cols; ++m) {
      for (std::size_t n = 0; n < rows; ++n) {
        const auto* k = mask.data() + (m * rows + n) * kk;
        if (std::any_of(k, k + kk, [](auto v) { return v != 0; })) row_has[n] = col_has[m] = 1;
      }
    }
  }
  Disconnected d;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_has[r]) d.rows.push_back(r);
  }
  for (std::size_t c = 0; c < cols; ++c) {
    if (!col_has[c]) d.cols.push_back(c);
  }
  return d;
}

template <typename T>
bool all_connected(const Model<T>& model) {
  for (std::size_t li : model.parametric_layers()) {
    Disconnected d = disconnected_units(model.layers[li]);
    if (!d.rows.empty() || !d.cols.empty()) return false;
  }
  return true;
}

template <typename T>
std::size_t ensure_connected(Model<T>& model) {
  std::size_t added_total = 0;
  for (std::size_t li : model.parametric_layers()) {
    Layer<T>& layer = model.layers[li];
    const std::vector<std::size_t> added = repair_layer(layer, model.rng);
    if (added.empty()) continue;
    const double s = init_scale(layer);
    for (std::size_t pos : added) layer.weights.set(pos, static_cast<T>(model.rng.uniform(-s, s)));
    added_total += added.size();
  }
  return added_total;
}

template <typename T>
std::size_t add_neuron_slot(Model<T>& model, std::size_t index) {
  if (!model.is_hidden_fc(index)) {
    throw StructuralError("layer " + std::to_string(index) + " is not a hidden fully-connected layer");
  }
  Layer<T>& layer = model.layers[index];
  const std::size_t out = layer.spec.units, in = layer.spec.in.channels;
  {
    std::vector<T> values(layer.weights.values().begin(), layer.weights.values().end());
    std::vector<std::uint8_t> mask(layer.weights.mask().begin(), layer.weights.mask().end());
    values.resize((out + 1) * in, T{0});
    mask.resize((out + 1) * in, 0);
    layer.weights = rebuild<T>({out + 1, in}, std::move(values), std::move(mask));
    layer.bias.push_back(T{0});
    layer.spec.units = out + 1;
  }
  const std::size_t next = *model.next_parametric(index);
  for (std::size_t i = index + 1; i < next; ++i) {
    if (model.layers[i].spec.kind == LayerKind::BatchNorm) {
      model.layers[i].running_mean.push_back(T{0});
      model.layers[i].running_var.push_back(T{1});
    }
  }
  Layer<T>& nl = model.layers[next];
  const std::size_t rows = nl.weights.dim(0);
  std::vector<T> values(rows * (out + 1), T{0});
  std::vector<std::uint8_t> mask(rows * (out + 1), 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < out; ++c) {
      values[r * (out + 1) + c] = nl.weights.value(r * out + c);
      mask[r * (out + 1) + c] = nl.weights.mask()[r * out + c];
    }
  }
  nl.weights = rebuild<T>({rows, out + 1}, std::move(values), std::move(mask));
  model.infer_shapes();
  return out;
}

template <typename T>
std::size_t add_feature_map_slot(Model<T>& model, std::size_t index) {
  if (index >= model.layers.size() || model.layers[index].spec.kind != LayerKind::Conv) {
    throw StructuralError("layer " + std::to_string(index) + " is not convolutional");
  }
  Layer<T>& layer = model.layers[index];
  const std::size_t in_maps = layer.spec.in.channels, maps = layer.spec.units;
  const std::size_t kk = layer.spec.kernel * layer.spec.kernel;
  const std::size_t plane = layer.spec.out.height * layer.spec.out.width;
  {
    std::vector<T> values(in_maps * (maps + 1) * kk, T{0});
    std::vector<std::uint8_t> mask(values.size(), 0);
    std::vector<std::uint8_t> area(in_maps * (maps + 1) * plane, 1);
    for (std::size_t m = 0; m < in_maps; ++m) {
      for (std::size_t n = 0; n < maps; ++n) {
        const std::size_t src = (m * maps + n), dst = (m * (maps + 1) + n);
        for (std::size_t t = 0; t < kk; ++t) {
          values[dst * kk + t] = layer.weights.value(src * kk + t);
          mask[dst * kk + t] = layer.weights.mask()[src * kk + t];
        }
        std::copy_n(layer.area_mask.begin() + src * plane, plane, area.begin() + dst * plane);
      }
    }
    layer.weights = rebuild<T>({in_maps, maps + 1, layer.spec.kernel, layer.spec.kernel}, std::move(values),
                               std::move(mask));
    layer.area_mask = std::move(area);
    layer.bias.push_back(T{0});
    layer.spec.units = maps + 1;
  }
  if (auto next = model.next_parametric(index)) {
    Layer<T>& nl = model.layers[*next];
    for (std::size_t i = index + 1; i < *next; ++i) {
      if (model.layers[i].spec.kind == LayerKind::BatchNorm) throw StructuralError("batchnorm after conv");
    }
    std::vector<T> values(nl.weights.values().begin(), nl.weights.values().end());
    std::vector<std::uint8_t> mask(nl.weights.mask().begin(), nl.weights.mask().end());
    Shape shape = nl.weights.shape();
    if (nl.spec.kind == LayerKind::Conv) {
      const std::size_t per_map = nl.weights.size() / maps;
      values.resize(values.size() + per_map, T{0});
      mask.resize(mask.size() + per_map, 0);
      shape[0] = maps + 1;
      const std::size_t area_per_map = nl.area_mask.size() / maps;
      nl.area_mask.resize(nl.area_mask.size() + area_per_map, 1);
    } else {
      const std::size_t rows = nl.weights.dim(0), cols = nl.weights.dim(1);
      const std::size_t per_map = cols / maps;
      const std::size_t new_cols = cols + per_map;
      std::vector<T> v(rows * new_cols, T{0});
      std::vector<std::uint8_t> mk(rows * new_cols, 0);
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(values.begin() + r * cols, cols, v.begin() + r * new_cols);
        std::copy_n(mask.begin() + r * cols, cols, mk.begin() + r * new_cols);
      }
      values = std::move(v);
      mask = std::move(mk);
      shape[1] = new_cols;
    }
    nl.weights = rebuild<T>(shape, std::move(values), std::move(mask));
  }
  model.infer_shapes();
  return maps;
}

template <typename T>
void remove_units(Model<T>& model, std::size_t index, const std::vector<std::size_t>& units) {
  if (!model.is_hidden_fc(index)) {
    throw StructuralError("layer " + std::to_string(index) + " is not a hidden fully-connected layer");
  }
  if (units.empty()) return;
  Layer<T>& layer = model.layers[index];
  const std::size_t out = layer.spec.units, in = layer.spec.in.channels;
  std::vector<std::uint8_t> drop(out, 0);
  for (std::size_t u : units) {
    if (u >= out) throw StructuralError("unit index out of range");
    drop[u] = 1;
  }
  std::vector<std::size_t> keep;
  for (std::size_t u = 0; u < out; ++u) {
    if (!drop[u]) keep.push_back(u);
  }
  if (keep.empty()) throw StructuralError("removal would empty layer " + std::to_string(index));
  const std::size_t kept = keep.size();
  {
    std::vector<T> values(kept * in);
    std::vector<std::uint8_t> mask(kept * in);
    std::vector<T> bias(kept);
    for (std::size_t r = 0; r < kept; ++r) {
      std::copy_n(layer.weights.values().begin() + keep[r] * in, in, values.begin() + r * in);
      std::copy_n(layer.weights.mask().begin() + keep[r] * in, in, mask.begin() + r * in);
      bias[r] = layer.bias[keep[r]];
    }
    layer.weights = rebuild<T>({kept, in}, std::move(values), std::move(mask));
    layer.bias = std::move(bias);
    layer.spec.units = kept;
  }
  const std::size_t next = *model.next_parametric(index);
  for (std::size_t i = index + 1; i < next; ++i) {
    Layer<T>& bn = model.layers[i];
    if (bn.spec.kind != LayerKind::BatchNorm) continue;
    std::vector<T> mean(kept), var(kept);
    for (std::size_t r = 0; r < kept; ++r) {
      mean[r] = bn.running_mean[keep[r]];
      var[r] = bn.running_var[keep[r]];
    }
    bn.running_mean = std::move(mean);
    bn.running_var = std::move(var);
  }
  Layer<T>& nl = model.layers[next];
  const std::size_t rows = nl.weights.dim(0);
  std::vector<T> values(rows * kept);
  std::vector<std::uint8_t> mask(rows * kept);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < kept; ++c) {
      values[r * kept + c] = nl.weights.value(r * out + keep[c]);
      mask[r * kept + c] = nl.weights.mask()[r * out + keep[c]];
    }
  }
  nl.weights = rebuild<T>({rows, kept}, std::move(values), std::move(mask));
  model.infer_shapes();
}

#define NEST_INSTANTIATE(T)                                                                      \
  template class Model<T>;                                                                       \
  template Model<T> build_model<T>(const Architecture&, std::uint64_t);                          \
  template Model<T> make_seed<T>(const Architecture&, const ArchRatio&, std::uint64_t);          \
  template double init_scale(const Layer<T>&);                                                   \
  template std::size_t ensure_connected(Model<T>&);                                              \
  template Disconnected disconnected_units(const Layer<T>&);                                     \
  template bool all_connected(const Model<T>&);                                                  \
  template std::size_t add_neuron_slot(Model<T>&, std::size_t);                                  \
  template std::size_t add_feature_map_slot(Model<T>&, std::size_t);                             \
  template void remove_units(Model<T>&, std::size_t, const std::vector<std::size_t>&);

NEST_INSTANTIATE(float)
NEST_INSTANTIATE(double)

}  // namespace nest

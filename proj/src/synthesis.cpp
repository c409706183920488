#include "nest/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nest/checkpoint.hpp"
#include "nest/errors.hpp"
#include "nest/io.hpp"
#include "nest/metrics.hpp"
#include "nest/network.hpp"

namespace nest {

TrainOptions TrainerConfig::options() const {
  TrainOptions o;
  o.batch_size = batch_size;
  o.momentum = momentum;
  o.augment = augment;
  return o;
}

void SynthesisConfig::validate() const {
  architecture_by_name(arch);
  if (!(ratio.r > 0.0 && ratio.r <= 1.0)) throw ConfigError("arch.ratio", "must be in (0, 1]");
  if (!(ratio.density > 0.0 && ratio.density <= 1.0)) throw ConfigError("arch.density", "must be in (0, 1]");
  growth.validate();
  prune.validate();
  if (!(target_accuracy > 0.0 && target_accuracy < 1.0)) {
    throw ConfigError("target_accuracy", "must be in (0, 1)");
  }
  if (max_growth_iters < 1) throw ConfigError("growth.max_iters", "must be at least 1");
  if (growth_every < 1) throw ConfigError("growth.every", "must be at least 1");
  if (!(trainer.lr >= 0.0)) throw ConfigError("trainer.lr", "must be non-negative");
  if (!(trainer.prune_lr >= 0.0)) throw ConfigError("trainer.prune_lr", "must be non-negative");
  if (!(trainer.lr_decay > 0.0)) throw ConfigError("trainer.lr_decay", "must be positive");
  if (!(trainer.momentum >= 0.0 && trainer.momentum < 1.0)) throw ConfigError("trainer.momentum", "must be in [0, 1)");
  if (trainer.batch_size < 1) throw ConfigError("trainer.batch_size", "must be positive");
  if (trainer.grow_epochs < 1) throw ConfigError("trainer.grow_epochs", "must be at least 1");
}

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::Grow: return "grow";
    case Phase::Prune: return "prune";
    case Phase::Done: return "done";
  }
  return "?";
}

namespace {

Phase phase_from_string(const std::string& s) {
  if (s == "grow") return Phase::Grow;
  if (s == "prune") return Phase::Prune;
  if (s == "done") return Phase::Done;
  throw FormatError("unknown phase '" + s + "'");
}

}  // namespace

Synthesizer::Synthesizer(SynthesisConfig config, const Dataset& train, const Dataset& validation)
    : config_(std::move(config)), train_(train), validation_(validation) {
  config_.validate();
  if (train_.size() == 0 || validation_.size() == 0) throw InputError("training and validation data must be non-empty");
}

SynthesisState Synthesizer::start() const {
  return start_growth(make_seed<float>(architecture_by_name(config_.arch), config_.ratio, config_.seed));
}

SynthesisState Synthesizer::start_growth(Model<float> seed) const {
  SynthesisState state;
  state.phase = Phase::Grow;
  state.model = std::move(seed);
  return state;
}

SynthesisState Synthesizer::start_pruning(Model<float> model) const {
  SynthesisState state;
  state.phase = Phase::Prune;
  state.best_accuracy = accuracy(model, validation_);
  state.grown = model;
  state.best = model;
  state.model = std::move(model);
  return state;
}

void Synthesizer::record(SynthesisState& state, IterationRecord r, double* acc) const {
  const Measurement m = measure(state.model, validation_);
  const auto stats = layer_stats(state.model, m.act_pct);
  r.iteration = state.report.iterations.size();
  r.connections = state.model.active_connections();
  r.neurons = state.model.hidden_units();
  r.val_accuracy = m.accuracy;
  r.params = count_params(state.model);
  r.flops = count_flops(state.model, stats);
  r.train_samples = state.train_samples;
  state.report.iterations.push_back(r);
  *acc = m.accuracy;
}

std::pair<Tensor<float>, std::vector<int>> Synthesizer::probe_batch(Model<float>& model) const {
  const std::size_t n = train_.size();
  const std::size_t count = std::min(config_.growth.growth_batch, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t t = 0; t < count; ++t) std::swap(order[t], order[t + model.rng.below(n - t)]);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return make_batch<float>(train_, order);
}

std::size_t Synthesizer::train_epochs(SynthesisState& state, std::size_t epochs) const {
  const LrSchedule schedule = config_.trainer.schedule();
  for (std::size_t e = 0; e < epochs; ++e) {
    state.train_samples += train_epoch(state.model, train_, schedule.at(state.phase_epochs), config_.trainer.options()).samples;
    ++state.phase_epochs;
  }
  return epochs;
}

void Synthesizer::grow_step(SynthesisState& state) const {
  Model<float>& model = state.model;
  IterationRecord r;
  r.phase = "grow";
  double acc = 0.0;
  if (state.phase_step == 0) {
    record(state, r, &acc);
  } else {
    if (state.phase_step >= 2) {
      const auto [x, labels] = probe_batch(model);
      const BatchGradients<float> grads = backward(model, x, labels, Mode::Train);
      const std::size_t event = state.phase_step - 1;
      const bool structural = event % config_.growth_every == 0;

      // Layer choices are scored on the pre-growth gradients.
      std::optional<std::size_t> neuron_layer, map_layer;
      if (structural && config_.grow_neurons) {
        double best = -1.0;
        for (std::size_t li = 0; li < model.layers.size(); ++li) {
          if (!model.is_hidden_fc(li)) continue;
          const Tensor<float> g = bridging_gradients(model, li, grads);
          double mass = 0.0;
          for (float v : g.data) mass += std::abs(static_cast<double>(v));
          if (mass > best) {
            best = mass;
            neuron_layer = li;
          }
        }
      }
      if (structural && config_.grow_maps) {
        double best = -1.0;
        for (std::size_t li : model.parametric_layers()) {
          if (model.layers[li].spec.kind != LayerKind::Conv) continue;
          const auto& w = model.layers[li].weights;
          const auto& dw = grads.layers[li].d_weights;
          double sum = 0.0;
          std::size_t count = 0;
          for (std::size_t i = 0; i < w.size(); ++i) {
            if (!w.active(i)) {
              sum += std::abs(static_cast<double>(dw.data[i]));
              ++count;
            }
          }
          const double mean = count == 0 ? 0.0 : sum / static_cast<double>(count);
          if (mean > best) {
            best = mean;
            map_layer = li;
          }
        }
      }

      if (config_.grow_connections) {
        r.grown_connections =
            grow_connections(model, grads, config_.growth, config_.trainer.schedule().at(state.phase_epochs));
      }
      if (neuron_layer) {
        for (std::size_t k = 0; k < config_.neurons_per_event; ++k) {
          try {
            grow_neuron(model, *neuron_layer, x, labels, config_.growth);
            ++r.grown_neurons;
          } catch (const GrowthDegenerateError&) {
            break;
          }
        }
      }
      if (map_layer) {
        for (std::size_t k = 0; k < config_.maps_per_event; ++k) {
          grow_feature_map(model, *map_layer, x, labels, config_.growth);
          ++r.grown_maps;
        }
      }
    }
    train_epochs(state, config_.trainer.grow_epochs);
    record(state, r, &acc);
  }
  state.best_accuracy = std::max(state.best_accuracy, acc);
  ++state.phase_step;
  if (acc >= config_.target_accuracy) {
    state.phase = Phase::Prune;
    state.phase_step = 0;
    state.phase_epochs = 0;
    state.best_accuracy = acc;
    state.grown = model;
    state.best = model;
    return;
  }
  if (state.phase_step > config_.max_growth_iters) {
    throw GrowthBudgetError(state.best_accuracy, "target accuracy not reached within " +
                                                     std::to_string(config_.max_growth_iters) + " growth iterations");
  }
}

void Synthesizer::prune_step(SynthesisState& state) const {
  auto finish = [&](const char* reason) {
    state.model = state.best;
    state.phase = Phase::Done;
    state.stop_reason = reason;
  };
  if (state.phase_step >= config_.max_prune_iters) {
    finish("max-iters");
    return;
  }
  Model<float>& model = state.model;
  const PruneParams& p = config_.prune;
  IterationRecord r;
  r.phase = "prune";
  try {
    if (p.prune_weights) r.pruned_connections = prune_weights_step(model, p);
    const auto [x, labels] = probe_batch(model);
    if (p.prune_areas) {
      for (std::size_t li : model.parametric_layers()) {
        if (model.layers[li].spec.kind == LayerKind::Conv) {
          r.pruned_area += partial_area_prune_step(model, li, x, p.area_ratio).pruned;
        }
      }
    }
    r.removed_neurons = prune_neurons(model, x, p);
  } catch (const PruneExhaustedError&) {
    finish("exhausted");
    return;
  } catch (const StructuralError&) {
    finish("exhausted");
    return;
  }
  if (r.pruned_connections == 0 && r.pruned_area == 0 && r.removed_neurons == 0) {
    finish("exhausted");
    return;
  }
  const LrSchedule schedule{config_.trainer.prune_lr, config_.trainer.lr_decay, config_.trainer.lr_step_epochs};
  for (std::size_t e = 0; e < p.retrain_epochs; ++e) {
    state.train_samples += train_epoch(model, train_, schedule.at(e), config_.trainer.options()).samples;
    ++state.phase_epochs;
  }
  double acc = 0.0;
  record(state, r, &acc);
  ++state.phase_step;
  if (acc >= p.accuracy_floor) {
    state.best = model;
    state.best_accuracy = acc;
  } else {
    finish("accuracy-floor");
  }
}

void Synthesizer::step(SynthesisState& state) const {
  switch (state.phase) {
    case Phase::Grow: grow_step(state); break;
    case Phase::Prune: prune_step(state); break;
    case Phase::Done: break;
  }
}

void Synthesizer::run(SynthesisState& state, Phase until,
                      const std::function<void(const SynthesisState&)>& after_step) const {
  while (state.phase != Phase::Done && state.phase != until) {
    step(state);
    if (after_step) after_step(state);
  }
}

Model<float> grow_phase(Model<float> seed, const SynthesisConfig& config, const Dataset& train,
                        const Dataset& validation, SynthesisReport* report) {
  const Synthesizer s(config, train, validation);
  SynthesisState state = s.start_growth(std::move(seed));
  try {
    s.run(state, Phase::Prune);
  } catch (...) {
    if (report) *report = state.report;
    throw;
  }
  if (report) *report = std::move(state.report);
  return std::move(state.model);
}

Model<float> prune_phase(Model<float> model, const SynthesisConfig& config, const Dataset& train,
                         const Dataset& validation, SynthesisReport* report) {
  const Synthesizer s(config, train, validation);
  SynthesisState state = s.start_pruning(std::move(model));
  s.run(state);
  if (report) *report = std::move(state.report);
  return std::move(state.model);
}

SynthesisResult synthesize(const SynthesisConfig& config, const Dataset& train, const Dataset& validation) {
  const Synthesizer s(config, train, validation);
  SynthesisState state = s.start();
  s.run(state);
  return {std::move(state.grown), std::move(state.model), std::move(state.report)};
}

namespace {

constexpr std::string_view kRunMagic{"NESTRUN\x01", 8};

void put_blob(std::string& out, const std::string& blob) {
  const std::uint64_t n = blob.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  out += blob;
}

std::string take_blob(const std::string& in, std::size_t& pos) {
  if (in.size() - pos < 8) throw LengthError("run state is truncated");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  if (in.size() - pos < n) throw LengthError("run state is truncated");
  std::string out = in.substr(pos, n);
  pos += n;
  return out;
}

}  // namespace

void save_state(const SynthesisState& state, const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["phase"] = to_string(state.phase);
  meta["phase_step"] = state.phase_step;
  meta["phase_epochs"] = state.phase_epochs;
  meta["train_samples"] = state.train_samples;
  meta["best_accuracy"] = state.best_accuracy;
  meta["stop_reason"] = state.stop_reason;
  std::string out(kRunMagic);
  put_blob(out, meta.dump());
  put_blob(out, report_jsonl(state.report));
  put_blob(out, encode_checkpoint(state.model));
  const bool has_prune_models = state.phase != Phase::Grow;
  put_blob(out, has_prune_models ? encode_checkpoint(state.best) : std::string());
  put_blob(out, has_prune_models ? encode_checkpoint(state.grown) : std::string());
  write_file_atomic(path, out);
}

SynthesisState load_state(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.compare(0, kRunMagic.size(), kRunMagic) != 0) throw FormatError("not a run state file (bad magic)");
  std::size_t pos = kRunMagic.size();
  SynthesisState state;
  try {
    const auto meta = nlohmann::json::parse(take_blob(in, pos));
    state.phase = phase_from_string(meta.at("phase").get<std::string>());
    state.phase_step = meta.at("phase_step").get<std::size_t>();
    state.phase_epochs = meta.at("phase_epochs").get<std::size_t>();
    state.train_samples = meta.at("train_samples").get<std::uint64_t>();
    state.best_accuracy = meta.at("best_accuracy").get<double>();
    state.stop_reason = meta.at("stop_reason").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad run state header: ") + e.what());
  }
  std::istringstream lines(take_blob(in, pos));
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) state.report.iterations.push_back(record_from_json_line(line));
  }
  state.model = decode_checkpoint(take_blob(in, pos));
  const std::string best = take_blob(in, pos), grown = take_blob(in, pos);
  if (!best.empty()) state.best = decode_checkpoint(best);
  if (!grown.empty()) state.grown = decode_checkpoint(grown);
  if (pos != in.size()) throw ConsistencyError("run state has trailing data");
  return state;
}

}  // namespace nest

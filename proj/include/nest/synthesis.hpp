#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "nest/data.hpp"
#include "nest/growth.hpp"
#include "nest/model.hpp"
#include "nest/pruning.hpp"
#include "nest/report.hpp"
#include "nest/trainer.hpp"

namespace nest {

struct TrainerConfig {
  double lr = 0.1;
  double lr_decay = 0.5;
  std::size_t lr_step_epochs = 10;
  double momentum = 0.0;
  std::size_t batch_size = 64;
  std::size_t grow_epochs = 1;  // epochs per growth iteration
  double prune_lr = 0.1;        // restarts the step schedule at every retraining call
  bool augment = false;

  LrSchedule schedule() const { return {lr, lr_decay, lr_step_epochs}; }
  TrainOptions options() const;
};

struct SynthesisConfig {
  std::string arch = "lenet-300-100";
  ArchRatio ratio{0.4, 0.1};
  GrowthParams growth;
  PruneParams prune;
  double target_accuracy = 0.98;
  std::size_t max_growth_iters = 50;
  std::size_t max_prune_iters = 1000;
  std::size_t growth_every = 2;  // neuron / feature-map growth every k-th growth step
  std::size_t neurons_per_event = 1;
  std::size_t maps_per_event = 1;
  bool grow_connections = true;
  bool grow_neurons = true;
  bool grow_maps = true;
  TrainerConfig trainer;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class Phase { Grow, Prune, Done };
const char* to_string(Phase phase);

// Everything needed to continue a run from an iteration boundary.
struct SynthesisState {
  Phase phase = Phase::Grow;
  std::size_t phase_step = 0;    // completed iterations in the current phase
  std::size_t phase_epochs = 0;  // epochs trained in the current phase (drives the lr schedule)
  std::uint64_t train_samples = 0;
  double best_accuracy = 0.0;    // grow: best seen so far; prune: accuracy of `best`
  std::string stop_reason;
  Model<float> model;
  Model<float> best;   // pruning rollback point
  Model<float> grown;  // model at the end of the growth phase
  SynthesisReport report;

  friend bool operator==(const SynthesisState&, const SynthesisState&) = default;
};

class Synthesizer {
 public:
  Synthesizer(SynthesisConfig config, const Dataset& train, const Dataset& validation);

  const SynthesisConfig& config() const { return config_; }

  // Fresh run from the configured seed architecture.
  SynthesisState start() const;
  SynthesisState start_growth(Model<float> seed) const;
  SynthesisState start_pruning(Model<float> model) const;

  // Advances by one iteration (one report record at most). Throws
  // GrowthBudgetError when the growth budget runs out below target.
  void step(SynthesisState& state) const;

  // Steps until the state reaches `until` (or Done); `after_step` runs after
  // every step.
  void run(SynthesisState& state, Phase until = Phase::Done,
           const std::function<void(const SynthesisState&)>& after_step = {}) const;

 private:
  void grow_step(SynthesisState& state) const;
  void prune_step(SynthesisState& state) const;
  void record(SynthesisState& state, IterationRecord r, double* accuracy) const;
  std::pair<Tensor<float>, std::vector<int>> probe_batch(Model<float>& model) const;
  std::size_t train_epochs(SynthesisState& state, std::size_t epochs) const;

  SynthesisConfig config_;
  const Dataset& train_;
  const Dataset& validation_;
};

Model<float> grow_phase(Model<float> seed, const SynthesisConfig& config, const Dataset& train,
                        const Dataset& validation, SynthesisReport* report = nullptr);

// Returns the last model that met the accuracy floor (the input model if
// the first pruning iteration already falls below it).
Model<float> prune_phase(Model<float> model, const SynthesisConfig& config, const Dataset& train,
                         const Dataset& validation, SynthesisReport* report = nullptr);

struct SynthesisResult {
  Model<float> grown;
  Model<float> model;
  SynthesisReport report;
};

SynthesisResult synthesize(const SynthesisConfig& config, const Dataset& train, const Dataset& validation);

// Single-file run state (magic "NESTRUN\x01"), written atomically.
void save_state(const SynthesisState& state, const std::filesystem::path& path);
SynthesisState load_state(const std::filesystem::path& path);

}  // namespace nest

#include "app.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nest/checkpoint.hpp"
#include "nest/config.hpp"
#include "nest/data.hpp"
#include "nest/errors.hpp"
#include "nest/io.hpp"
#include "nest/metrics.hpp"
#include "nest/synthesis.hpp"

namespace nest::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised by --stop-after to emulate an interrupted run.
struct Interrupted {};

struct Flags {
  std::string config;
  std::string out;
  std::string data_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> subset;
  std::string ratios;
  std::string checkpoint;
  std::string run_dir;
  std::size_t stop_after = 0;
  bool quiet = false;
};

int exit_code_for(const Error& e) {
  const std::string cat = e.category();
  if (cat == "config") return kConfigError;
  if (cat == "growth-budget") return kBudgetError;
  if (cat == "format" || cat == "consistency" || cat == "length" || cat == "io" || cat == "input") return kDataError;
  return kFailure;
}

void print_error(const std::string& category, const std::string& message, const std::string& field = {}) {
  json j{{"error", category}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  std::cerr << j.dump() << std::endl;
}

fs::path resolve_data_dir(const Flags& flags, const RunManifest& m) {
  if (!flags.data_dir.empty()) return flags.data_dir;
  if (!m.data_dir.empty()) return m.data_dir;
  if (const char* env = std::getenv("NEST_DATA_DIR"); env && *env) return env;
  throw IoError("no data directory: pass --data-dir or set NEST_DATA_DIR");
}

json layer_json(const Model<float>& model, const std::vector<LayerStats>& stats) {
  json layers = json::array();
  for (const LayerStats& s : stats) {
    const Layer<float>& l = model.layers[s.layer];
    layers.push_back({{"layer", s.layer},
                      {"kind", to_string(l.spec.kind)},
                      {"units", l.spec.units},
                      {"weights_active", s.weights_active},
                      {"act_pct", s.act_pct},
                      {"conv_pct", s.conv_pct},
                      {"flops", s.flops}});
  }
  return layers;
}

// Accounting of a model on the test split; shared by synth and eval.
json model_json(const Model<float>& model, const Dataset& test) {
  const Measurement m = measure(model, test);
  const auto stats = layer_stats(model, m.act_pct);
  return {{"params", count_params(model)},
          {"connections", model.active_connections()},
          {"hidden_widths", model.hidden_widths()},
          {"flops", count_flops(model, stats)},
          {"test_accuracy", m.accuracy},
          {"test_error", 1.0 - m.accuracy},
          {"test_samples", test.size()},
          {"layers", layer_json(model, stats)}};
}

MnistSplits load_data(const RunManifest& m, const fs::path& dir) {
  MnistSplits d = load_mnist(dir, m.subset, m.validation_size);
  if (m.test_subset > 0 && m.test_subset < d.test.size()) d.test = slice(d.test, 0, m.test_subset);
  return d;
}

void log_record(const IterationRecord& r, bool quiet) {
  if (quiet) return;
  std::cerr << std::fixed << std::setprecision(4) << "[" << r.phase << " " << r.iteration << "] connections "
            << r.connections << " neurons " << r.neurons << " params " << r.params << " flops " << r.flops
            << " val_acc " << r.val_accuracy << std::endl;
}

// Drives `state` to completion inside `out`, saving the run state at the
// configured cadence, then writes checkpoints, report and summary.
void drive(const RunManifest& m, const MnistSplits& data, const fs::path& out, SynthesisState state,
           const Flags& flags) {
  const Synthesizer synth(m.synthesis, data.train, data.validation);
  const fs::path state_path = out / "run.state";
  const auto started = std::chrono::steady_clock::now();
  std::size_t steps = 0;
  std::size_t logged = state.report.iterations.size();
  auto after = [&](const SynthesisState& s) {
    ++steps;
    for (; logged < s.report.iterations.size(); ++logged) log_record(s.report.iterations[logged], flags.quiet);
    const bool growing = s.phase == Phase::Grow;
    if (!growing || s.phase_step % m.checkpoint_every_growth == 0) save_state(s, state_path);
    if (flags.stop_after > 0 && steps >= flags.stop_after && s.phase != Phase::Done) {
      save_state(s, state_path);
      throw Interrupted{};
    }
  };
  try {
    synth.run(state, Phase::Done, after);
  } catch (const GrowthBudgetError&) {
    save_state(state, state_path);
    export_report(state.report, out);
    throw;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  save_checkpoint(state.grown, out / "grown.ckpt");
  save_checkpoint(state.model, out / "final.ckpt");
  export_report(state.report, out);

  const auto& its = state.report.iterations;
  std::uint64_t growth_samples = 0;
  std::size_t grow_records = 0, prune_records = 0;
  for (const auto& r : its) {
    if (r.phase == "grow") {
      growth_samples = r.train_samples;
      ++grow_records;
    } else {
      ++prune_records;
    }
  }
  const std::size_t grown_params = count_params(state.grown);
  const std::size_t final_params = count_params(state.model);
  json summary{{"arch", m.synthesis.arch},
               {"ratio", m.synthesis.ratio.r},
               {"density", m.synthesis.ratio.density},
               {"seed", m.synthesis.seed},
               {"stop_reason", state.stop_reason},
               {"seed_params", its.empty() ? 0 : its.front().params},
               {"growth_iterations", grow_records},
               {"prune_iterations", prune_records},
               {"growth_samples", growth_samples},
               {"train_samples", state.train_samples},
               {"grown", model_json(state.grown, data.test)},
               {"final", model_json(state.model, data.test)},
               {"final_val_accuracy", state.best_accuracy},
               {"compression_ratio", static_cast<double>(grown_params) / static_cast<double>(final_params)}};
  write_file_atomic(out / "summary.json", summary.dump(2) + "\n");

  json timing{{"wall_seconds", seconds}};
  if (fs::exists(out / "timing.json")) {
    try {
      const json prev = json::parse(read_file(out / "timing.json"));
      timing["wall_seconds"] = seconds + prev.value("wall_seconds", 0.0);
    } catch (const json::exception&) {
    }
  }
  write_file_atomic(out / "timing.json", timing.dump(2) + "\n");
  save_state(state, state_path);
}

void record_partial_time(const fs::path& out, double seconds) {
  json timing{{"wall_seconds", seconds}};
  if (fs::exists(out / "timing.json")) {
    try {
      timing["wall_seconds"] = seconds + json::parse(read_file(out / "timing.json")).value("wall_seconds", 0.0);
    } catch (const json::exception&) {
    }
  }
  write_file_atomic(out / "timing.json", timing.dump(2) + "\n");
}

RunManifest manifest_from_flags(const Flags& flags) {
  RunManifest m = load_config(flags.config);
  if (flags.seed) m.synthesis.seed = *flags.seed;
  if (flags.subset) m.subset = *flags.subset;
  m.data_dir = resolve_data_dir(flags, m);
  return m;
}

void start_run(RunManifest m, const fs::path& out, const Flags& flags) {
  const MnistSplits data = load_data(m, m.data_dir);
  fs::create_directories(out);
  fs::remove(out / "timing.json");
  write_file_atomic(out / "config.toml", format_config(m));
  const Synthesizer synth(m.synthesis, data.train, data.validation);
  const auto started = std::chrono::steady_clock::now();
  try {
    drive(m, data, out, synth.start(), flags);
  } catch (const Interrupted&) {
    record_partial_time(out, std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    throw;
  }
}

int cmd_synth(const Flags& flags) {
  start_run(manifest_from_flags(flags), flags.out, flags);
  return kOk;
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("ratios", "cannot parse '" + item + "'");
    }
    if (!(out.back() > 0.0 && out.back() <= 1.0)) throw ConfigError("ratios", "every ratio must be in (0, 1]");
  }
  return out;
}

int cmd_sweep(const Flags& flags) {
  RunManifest base = manifest_from_flags(flags);
  std::vector<double> ratios = flags.ratios.empty() ? base.sweep_ratios : parse_ratios(flags.ratios);
  if (ratios.empty()) throw ConfigError("sweep.ratios", "no ratios given");
  const fs::path out = flags.out;
  fs::create_directories(out);
  std::ostringstream table;
  table << "r,status,growth_samples,growth_seconds,post_growth_params,post_prune_params,compression_ratio\n";
  int code = kOk;
  for (double r : ratios) {
    RunManifest m = base;
    m.synthesis.ratio.r = r;
    std::ostringstream name;
    name << "r" << std::fixed << std::setprecision(2) << r;
    const fs::path dir = out / name.str();
    std::string status = "ok";
    try {
      start_run(m, dir, flags);
    } catch (const GrowthBudgetError& e) {
      print_error(e.category(), "r=" + std::to_string(r) + ": " + e.what());
      status = "budget";
      code = kBudgetError;
    }
    table << format_number(r) << ',' << status;
    if (status == "ok") {
      const json summary = json::parse(read_file(dir / "summary.json"));
      const json timing = json::parse(read_file(dir / "timing.json"));
      const std::size_t grown = count_params(load_checkpoint(dir / "grown.ckpt"));
      const std::size_t final = count_params(load_checkpoint(dir / "final.ckpt"));
      table << ',' << summary.at("growth_samples").get<std::uint64_t>() << ','
            << format_number(timing.at("wall_seconds").get<double>()) << ',' << grown << ',' << final << ','
            << format_number(static_cast<double>(grown) / static_cast<double>(final));
    } else {
      table << ",,,,,";
    }
    table << '\n';
    write_file_atomic(out / "sweep.csv", table.str());
  }
  return code;
}

int cmd_eval(const Flags& flags) {
  const Model<float> model = load_checkpoint(flags.checkpoint);
  RunManifest m;
  m.data_dir = resolve_data_dir(flags, m);
  const Dataset test = load_mnist(m.data_dir, 0, 0).test;
  const Dataset used = flags.subset && *flags.subset > 0 && *flags.subset < test.size() ? slice(test, 0, *flags.subset) : test;
  const std::string text = model_json(model, used).dump(2) + "\n";
  if (!flags.out.empty()) write_file_atomic(flags.out, text);
  if (!flags.quiet) std::cout << text;
  return kOk;
}

int cmd_resume(const Flags& flags) {
  const fs::path dir = flags.run_dir;
  if (!fs::exists(dir / "run.state")) throw IoError("no run state in " + dir.string());
  RunManifest m = load_config(dir / "config.toml");
  SynthesisState state = load_state(dir / "run.state");
  if (state.phase == Phase::Done && fs::exists(dir / "summary.json")) return kOk;
  const MnistSplits data = load_data(m, m.data_dir);
  const auto started = std::chrono::steady_clock::now();
  try {
    drive(m, data, dir, std::move(state), flags);
  } catch (const Interrupted&) {
    record_partial_time(dir, std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    throw;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Grow-and-prune neural network synthesis"};
  app.require_subcommand(1);
  Flags flags;
  std::uint64_t seed = 0;
  std::size_t subset = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--data-dir", flags.data_dir, "MNIST directory (falls back to NEST_DATA_DIR)");
    cmd->add_flag("--quiet", flags.quiet, "Suppress progress output");
  };
  auto* synth = app.add_subcommand("synth", "Run grow-and-prune synthesis");
  synth->add_option("--config", flags.config, "Config file")->required();
  synth->add_option("--out", flags.out, "Output directory")->required();
  synth->add_option("--seed", seed, "Override the random seed");
  synth->add_option("--subset", subset, "Use only the first N training samples");
  synth->add_option("--stop-after", flags.stop_after, "Stop after N iterations (resumable)");
  add_common(synth);

  auto* sweep = app.add_subcommand("sweep", "Synthesize from seeds of several width ratios");
  sweep->add_option("--config", flags.config, "Config file")->required();
  sweep->add_option("--out", flags.out, "Output directory")->required();
  sweep->add_option("--ratios", flags.ratios, "Comma-separated ratios (overrides sweep.ratios)");
  sweep->add_option("--seed", seed, "Override the random seed");
  sweep->add_option("--subset", subset, "Use only the first N training samples");
  add_common(sweep);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval->add_option("--checkpoint", flags.checkpoint, "Checkpoint file")->required();
  eval->add_option("--subset", subset, "Use only the first N test samples");
  eval->add_option("--out", flags.out, "Also write the JSON result here");
  add_common(eval);

  auto* resume = app.add_subcommand("resume", "Continue an interrupted run");
  resume->add_option("run_dir", flags.run_dir, "Run directory")->required();
  resume->add_option("--stop-after", flags.stop_after, "Stop after N iterations (resumable)");
  add_common(resume);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::cout << app.help();
      return kOk;
    }
    print_error("usage", e.what());
    return kConfigError;
  }
  for (auto* cmd : {synth, sweep, eval}) {
    if (auto* o = cmd->get_option_no_throw("--seed"); o && o->count()) flags.seed = seed;
    if (auto* o = cmd->get_option_no_throw("--subset"); o && o->count()) flags.subset = subset;
  }

  try {
    if (*synth) return cmd_synth(flags);
    if (*sweep) return cmd_sweep(flags);
    if (*eval) return cmd_eval(flags);
    if (*resume) return cmd_resume(flags);
  } catch (const Interrupted&) {
    if (!flags.quiet) std::cerr << "stopped early; continue with: resume" << std::endl;
    return kOk;
  } catch (const ConfigError& e) {
    print_error(e.category(), e.what(), e.field());
    return kConfigError;
  } catch (const Error& e) {
    print_error(e.category(), e.what());
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    print_error("io", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kFailure;
  }
  return kFailure;
}

}  // namespace nest::cli

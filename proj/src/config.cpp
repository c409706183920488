#include "nest/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <variant>

#include "nest/errors.hpp"
#include "nest/io.hpp"

namespace nest {

namespace {

using Value = std::variant<bool, double, std::string, std::vector<double>>;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

Value parse_value(const std::string& field, const std::string& raw) {
  if (raw.empty()) throw ConfigError(field, "missing value");
  if (raw == "true") return true;
  if (raw == "false") return false;
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') throw ConfigError(field, "unterminated string");
    return raw.substr(1, raw.size() - 2);
  }
  if (raw.front() == '[') {
    if (raw.back() != ']') throw ConfigError(field, "unterminated list");
    std::vector<double> items;
    std::stringstream in(raw.substr(1, raw.size() - 2));
    for (std::string item; std::getline(in, item, ',');) {
      item = trim(item);
      if (item.empty()) continue;
      double v = 0;
      if (!parse_number(item, v)) throw ConfigError(field, "list items must be numbers");
      items.push_back(v);
    }
    return items;
  }
  double v = 0;
  if (!parse_number(raw, v)) throw ConfigError(field, "cannot parse value '" + raw + "'");
  return v;
}

class Binder {
 public:
  explicit Binder(std::map<std::string, Value> values) : values_(std::move(values)) {}

  void number(const std::string& key, double& out) {
    if (auto* v = find(key)) {
      if (!std::holds_alternative<double>(*v)) throw ConfigError(key, "expected a number");
      out = std::get<double>(*v);
    }
  }
  void count(const std::string& key, std::size_t& out) {
    if (auto* v = find(key)) {
      const double* d = std::get_if<double>(v);
      if (!d || *d < 0 || *d != static_cast<double>(static_cast<std::uint64_t>(*d))) {
        throw ConfigError(key, "expected a non-negative integer");
      }
      out = static_cast<std::size_t>(*d);
    }
  }
  void count64(const std::string& key, std::uint64_t& out) {
    std::size_t v = out;
    count(key, v);
    out = v;
  }
  void flag(const std::string& key, bool& out) {
    if (auto* v = find(key)) {
      if (!std::holds_alternative<bool>(*v)) throw ConfigError(key, "expected true or false");
      out = std::get<bool>(*v);
    }
  }
  void text(const std::string& key, std::string& out) {
    if (auto* v = find(key)) {
      if (!std::holds_alternative<std::string>(*v)) throw ConfigError(key, "expected a quoted string");
      out = std::get<std::string>(*v);
    }
  }
  void list(const std::string& key, std::vector<double>& out) {
    if (auto* v = find(key)) {
      if (!std::holds_alternative<std::vector<double>>(*v)) throw ConfigError(key, "expected a list of numbers");
      out = std::get<std::vector<double>>(*v);
    }
  }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void reject_unknown() const {
    for (const auto& [key, v] : values_) {
      if (!used_.count(key)) throw ConfigError(key, "unknown key");
    }
  }

 private:
  Value* find(const std::string& key) {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }
  std::map<std::string, Value> values_;
  std::set<std::string> used_;
};

}  // namespace

RunManifest parse_config(const std::string& text) {
  std::map<std::string, Value> values;
  std::string section;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", "line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", "line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string field = section.empty() ? key : section + "." + key;
    if (values.count(field)) throw ConfigError(field, "duplicate key");
    values[field] = parse_value(field, trim(line.substr(eq + 1)));
  }

  Binder b(std::move(values));
  if (!b.has("schema_version")) throw ConfigError("schema_version", "missing");
  std::size_t version = 0;
  b.count("schema_version", version);
  if (version != static_cast<std::size_t>(kSchemaVersion)) {
    throw ConfigError("schema_version", "unsupported version " + std::to_string(version));
  }
  RunManifest m;
  SynthesisConfig& c = m.synthesis;
  b.count64("seed", c.seed);
  b.number("target_accuracy", c.target_accuracy);
  b.text("arch.name", c.arch);
  b.number("arch.ratio", c.ratio.r);
  b.number("arch.density", c.ratio.density);
  b.number("growth.alpha", c.growth.alpha);
  b.number("growth.beta", c.growth.beta);
  b.number("growth.conn_fraction", c.growth.conn_fraction);
  b.count("growth.candidates", c.growth.candidates);
  b.count("growth.batch", c.growth.growth_batch);
  b.count("growth.every", c.growth_every);
  b.count("growth.max_iters", c.max_growth_iters);
  b.count("growth.neurons_per_event", c.neurons_per_event);
  b.count("growth.maps_per_event", c.maps_per_event);
  b.flag("growth.connections", c.grow_connections);
  b.flag("growth.neurons", c.grow_neurons);
  b.flag("growth.maps", c.grow_maps);
  b.number("prune.weight_ratio", c.prune.weight_ratio);
  b.list("prune.layer_ratios", c.prune.layer_ratios);
  b.number("prune.area_ratio", c.prune.area_ratio);
  b.number("prune.neuron_out_threshold", c.prune.neuron_out_threshold);
  b.count("prune.retrain_epochs", c.prune.retrain_epochs);
  b.number("prune.accuracy_floor", c.prune.accuracy_floor);
  b.flag("prune.weights", c.prune.prune_weights);
  b.flag("prune.conv_weights", c.prune.prune_conv_weights);
  b.flag("prune.areas", c.prune.prune_areas);
  b.count("prune.max_iters", c.max_prune_iters);
  b.number("trainer.lr", c.trainer.lr);
  b.number("trainer.lr_decay", c.trainer.lr_decay);
  b.count("trainer.lr_step_epochs", c.trainer.lr_step_epochs);
  b.number("trainer.momentum", c.trainer.momentum);
  b.count("trainer.batch_size", c.trainer.batch_size);
  b.count("trainer.grow_epochs", c.trainer.grow_epochs);
  b.number("trainer.prune_lr", c.trainer.prune_lr);
  b.flag("trainer.augment", c.trainer.augment);
  std::string dir;
  b.text("data.dir", dir);
  m.data_dir = dir;
  b.count("data.subset", m.subset);
  b.count("data.validation_size", m.validation_size);
  b.count("data.test_subset", m.test_subset);
  b.count("run.checkpoint_every_growth", m.checkpoint_every_growth);
  b.list("sweep.ratios", m.sweep_ratios);
  b.reject_unknown();
  c.validate();
  if (m.checkpoint_every_growth < 1) throw ConfigError("run.checkpoint_every_growth", "must be at least 1");
  for (double r : m.sweep_ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("sweep.ratios", "every ratio must be in (0, 1]");
  }
  return m;
}

RunManifest load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError("", e.what());
  }
  return parse_config(text);
}

std::string format_config(const RunManifest& m) {
  const SynthesisConfig& c = m.synthesis;
  std::ostringstream o;
  o.precision(17);
  auto flag = [](bool b) { return b ? "true" : "false"; };
  o << "schema_version = " << kSchemaVersion << "\n"
    << "seed = " << c.seed << "\n"
    << "target_accuracy = " << c.target_accuracy << "\n\n"
    << "[arch]\nname = \"" << c.arch << "\"\nratio = " << c.ratio.r << "\ndensity = " << c.ratio.density << "\n\n"
    << "[growth]\nalpha = " << c.growth.alpha << "\nbeta = " << c.growth.beta
    << "\nconn_fraction = " << c.growth.conn_fraction << "\ncandidates = " << c.growth.candidates
    << "\nbatch = " << c.growth.growth_batch << "\nevery = " << c.growth_every << "\nmax_iters = " << c.max_growth_iters
    << "\nneurons_per_event = " << c.neurons_per_event << "\nmaps_per_event = " << c.maps_per_event
    << "\nconnections = " << flag(c.grow_connections) << "\nneurons = " << flag(c.grow_neurons)
    << "\nmaps = " << flag(c.grow_maps) << "\n\n"
    << "[prune]\nweight_ratio = " << c.prune.weight_ratio << "\nlayer_ratios = [";
  for (std::size_t i = 0; i < c.prune.layer_ratios.size(); ++i) o << (i ? ", " : "") << c.prune.layer_ratios[i];
  o << "]\narea_ratio = " << c.prune.area_ratio
    << "\nneuron_out_threshold = " << c.prune.neuron_out_threshold << "\nretrain_epochs = " << c.prune.retrain_epochs
    << "\naccuracy_floor = " << c.prune.accuracy_floor << "\nweights = " << flag(c.prune.prune_weights)
    << "\nconv_weights = " << flag(c.prune.prune_conv_weights) << "\nareas = " << flag(c.prune.prune_areas)
    << "\nmax_iters = " << c.max_prune_iters << "\n\n"
    << "[trainer]\nlr = " << c.trainer.lr << "\nlr_decay = " << c.trainer.lr_decay
    << "\nlr_step_epochs = " << c.trainer.lr_step_epochs << "\nmomentum = " << c.trainer.momentum
    << "\nbatch_size = " << c.trainer.batch_size << "\ngrow_epochs = " << c.trainer.grow_epochs
    << "\nprune_lr = " << c.trainer.prune_lr << "\naugment = " << flag(c.trainer.augment) << "\n\n"
    << "[data]\ndir = \"" << m.data_dir.string() << "\"\nsubset = " << m.subset
    << "\nvalidation_size = " << m.validation_size << "\ntest_subset = " << m.test_subset << "\n\n"
    << "[run]\ncheckpoint_every_growth = " << m.checkpoint_every_growth << "\n";
  if (!m.sweep_ratios.empty()) {
    o << "\n[sweep]\nratios = [";
    for (std::size_t i = 0; i < m.sweep_ratios.size(); ++i) o << (i ? ", " : "") << m.sweep_ratios[i];
    o << "]\n";
  }
  return o.str();
}

}  // namespace nest

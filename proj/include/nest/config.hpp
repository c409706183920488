#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "nest/synthesis.hpp"

namespace nest {

inline constexpr int kSchemaVersion = 1;

// Settings of one CLI run: the synthesis config plus data and output
// handling.
struct RunManifest {
  SynthesisConfig synthesis;
  std::filesystem::path data_dir;      // empty: --data-dir or NEST_DATA_DIR
  std::size_t subset = 0;              // training samples kept (0 = all)
  std::size_t validation_size = 5000;
  std::size_t test_subset = 0;         // test samples evaluated (0 = all)
  std::size_t checkpoint_every_growth = 5;
  std::vector<double> sweep_ratios;
};

// Parses the key = value format with [section] headers, '#' comments,
// double-quoted strings, booleans, numbers and [a, b] number lists.
// `schema_version` is required. Errors are ConfigError naming the field
// as "section.key".
RunManifest parse_config(const std::string& text);
RunManifest load_config(const std::filesystem::path& path);

// Canonical text form; parse_config(format_config(m)) reproduces m.
std::string format_config(const RunManifest& manifest);

}  // namespace nest

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nest {

// One evaluation of the synthesis loop. Event counts describe the edits
// applied since the previous record.
struct IterationRecord {
  std::size_t iteration = 0;
  std::string phase;  // "grow" or "prune"
  std::size_t connections = 0;
  std::size_t neurons = 0;
  double val_accuracy = 0.0;
  std::size_t params = 0;
  std::uint64_t flops = 0;
  std::uint64_t train_samples = 0;  // cumulative samples trained so far
  std::size_t grown_connections = 0;
  std::size_t grown_neurons = 0;
  std::size_t grown_maps = 0;
  std::size_t pruned_connections = 0;
  std::size_t pruned_area = 0;
  std::size_t removed_neurons = 0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct SynthesisReport {
  std::vector<IterationRecord> iterations;

  friend bool operator==(const SynthesisReport&, const SynthesisReport&) = default;
};

std::string to_json_line(const IterationRecord& record);
IterationRecord record_from_json_line(const std::string& line);

std::string report_jsonl(const SynthesisReport& report);
std::string report_csv(const SynthesisReport& report);

// Writes report.jsonl and report.csv into `dir`.
void export_report(const SynthesisReport& report, const std::filesystem::path& dir);

SynthesisReport load_report(const std::filesystem::path& jsonl_path);

}  // namespace nest

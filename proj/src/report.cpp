#include "nest/report.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "nest/errors.hpp"
#include "nest/io.hpp"

namespace nest {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(IterationRecord, iteration, phase, connections, neurons, val_accuracy, params,
                                   flops, train_samples, grown_connections, grown_neurons, grown_maps,
                                   pruned_connections, pruned_area, removed_neurons)

std::string to_json_line(const IterationRecord& record) { return nlohmann::json(record).dump(); }

IterationRecord record_from_json_line(const std::string& line) {
  try {
    return nlohmann::json::parse(line).get<IterationRecord>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad report line: ") + e.what());
  }
}

std::string report_jsonl(const SynthesisReport& report) {
  std::string out;
  for (const auto& r : report.iterations) out += to_json_line(r) + "\n";
  return out;
}

std::string report_csv(const SynthesisReport& report) {
  std::ostringstream out;
  out << "iteration,phase,connections,neurons,accuracy,params,flops,train_samples\n";
  for (const auto& r : report.iterations) {
    out << r.iteration << ',' << r.phase << ',' << r.connections << ',' << r.neurons << ',' << format_number(r.val_accuracy) << ','
        << r.params << ',' << r.flops << ',' << r.train_samples << '\n';
  }
  return out.str();
}

void export_report(const SynthesisReport& report, const std::filesystem::path& dir) {
  if (report.iterations.empty()) throw InvalidParameterError("cannot export an empty report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  write_file_atomic(dir / "report.jsonl", report_jsonl(report));
  write_file_atomic(dir / "report.csv", report_csv(report));
}

SynthesisReport load_report(const std::filesystem::path& jsonl_path) {
  std::istringstream in(read_file(jsonl_path));
  SynthesisReport report;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) report.iterations.push_back(record_from_json_line(line));
  }
  return report;
}

}  // namespace nest

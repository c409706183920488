#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace nest {

// Writes `bytes` to a sibling temp file, flushes it and renames it over
// `path`, so readers see either the old file or the complete new one.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);

}  // namespace nest

#pragma once

#include <filesystem>
#include <string>

#include "nest/model.hpp"

namespace nest {

// Container layout: the magic "NESTCKPT\x01", a u64 length plus JSON
// header (layer specs, seed, rng state, section table), then each section
// as a u64 length plus payload. Floats are little-endian binary32 and masks
// are bit-packed, least significant bit first. All integers little-endian.
std::string encode_checkpoint(const Model<float>& model);
Model<float> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace nest

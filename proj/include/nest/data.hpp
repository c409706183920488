#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nest/rng.hpp"
#include "nest/tensor.hpp"

namespace nest {

// Grayscale images in [0, 1], stored sample-major as [count x 1 x rows x cols].
struct Dataset {
  std::size_t rows = 28;
  std::size_t cols = 28;
  std::vector<float> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t pixels() const { return rows * cols; }
  std::span<const float> image(std::size_t i) const { return {images.data() + i * pixels(), pixels()}; }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Parses an IDX image/label file pair (big-endian, magic 0x803 / 0x801).
// Gzip-compressed files are accepted transparently.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// Writes uncompressed IDX files. Pixels are rounded to the nearest byte.
void save_idx(const Dataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

struct MnistSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

// Loads MNIST from `dir` (train-/t10k- files, optionally .gz). The first
// `subset` training samples are kept when subset > 0; the last
// `validation_size` of those form the validation split.
MnistSplits load_mnist(const std::filesystem::path& dir, std::size_t subset, std::size_t validation_size);

Dataset slice(const Dataset& data, std::size_t begin, std::size_t end);
Dataset select(const Dataset& data, std::span<const std::size_t> indices);

// One epoch: a seeded permutation of [0, count) cut into consecutive
// batches; the final short batch is kept.
std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size, Rng& rng);

template <typename T>
std::pair<Tensor<T>, std::vector<int>> make_batch(const Dataset& data, std::span<const std::size_t> indices);

// The whole dataset as one batch.
template <typename T>
std::pair<Tensor<T>, std::vector<int>> as_batch(const Dataset& data);

struct AffineBounds {
  double max_rotation_deg = 15.0;
  double max_scale = 0.1;      // scale factor sampled in [1 - max_scale, 1 + max_scale]
  double max_shift_px = 2.0;
};

struct AffineTransform {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
};

// Resamples one rows x cols image under `t` about the image centre with
// bilinear interpolation; out-of-range source pixels read as 0.
void apply_affine(std::span<const float> src, std::span<float> dst, std::size_t rows, std::size_t cols,
                  const AffineTransform& t);

// Per-image random affine distortion with parameters drawn uniformly within
// `bounds`; output clamped to [0, 1].
void affine_distort(std::span<float> images, std::size_t rows, std::size_t cols, Rng& rng,
                    const AffineBounds& bounds);

}  // namespace nest

#include "nest/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "nest/errors.hpp"

namespace nest {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// Whole-file read through zlib, which passes uncompressed files through.
std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing file " + path.string());
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes;
  unsigned char chunk[1 << 16];
  int n;
  while ((n = gzread(f, chunk, sizeof chunk)) > 0) bytes.insert(bytes.end(), chunk, chunk + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw FormatError("corrupt gzip stream in " + path.string());
  return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t offset, const std::filesystem::path& path) {
  if (b.size() < offset + 4) throw LengthError("truncated IDX header in " + path.string());
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void write_be32(std::ofstream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

std::filesystem::path find_file(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& candidate : {dir / stem, dir / (stem + ".gz")}) {
    if (std::filesystem::exists(candidate)) return candidate;
  }
  throw IoError("MNIST file " + stem + " not found in " + dir.string());
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (read_be32(img, 0, images_path) != kImageMagic) throw FormatError("bad IDX image magic in " + images_path.string());
  if (read_be32(lab, 0, labels_path) != kLabelMagic) throw FormatError("bad IDX label magic in " + labels_path.string());
  const std::size_t count = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t label_count = read_be32(lab, 4, labels_path);
  if (count != label_count) {
    throw ConsistencyError("image count " + std::to_string(count) + " != label count " + std::to_string(label_count));
  }
  if (img.size() < 16 + count * rows * cols) throw LengthError("truncated image data in " + images_path.string());
  if (lab.size() < 8 + count) throw LengthError("truncated label data in " + labels_path.string());
  Dataset d;
  d.rows = rows;
  d.cols = cols;
  d.images.resize(count * rows * cols);
  for (std::size_t i = 0; i < d.images.size(); ++i) d.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = lab[8 + i];
    if (d.labels[i] > 9) throw FormatError("label " + std::to_string(d.labels[i]) + " outside 0-9");
  }
  return d;
}

void save_idx(const Dataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  std::ofstream img(images_path, std::ios::binary), lab(labels_path, std::ios::binary);
  if (!img || !lab) throw IoError("cannot write IDX files");
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(data.rows));
  write_be32(img, static_cast<std::uint32_t>(data.cols));
  for (float v : data.images) {
    const long b = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
    img.put(static_cast<char>(b));
  }
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) lab.put(static_cast<char>(l));
  if (!img || !lab) throw IoError("failed writing IDX files");
}

Dataset slice(const Dataset& data, std::size_t begin, std::size_t end) {
  if (begin > end || end > data.size()) throw InputError("slice out of range");
  Dataset d;
  d.rows = data.rows;
  d.cols = data.cols;
  d.images.assign(data.images.begin() + begin * data.pixels(), data.images.begin() + end * data.pixels());
  d.labels.assign(data.labels.begin() + begin, data.labels.begin() + end);
  return d;
}

Dataset select(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset d;
  d.rows = data.rows;
  d.cols = data.cols;
  d.images.reserve(indices.size() * data.pixels());
  for (std::size_t i : indices) {
    const auto img = data.image(i);
    d.images.insert(d.images.end(), img.begin(), img.end());
    d.labels.push_back(data.labels.at(i));
  }
  return d;
}

MnistSplits load_mnist(const std::filesystem::path& dir, std::size_t subset, std::size_t validation_size) {
  Dataset train = load_idx(find_file(dir, "train-images-idx3-ubyte"), find_file(dir, "train-labels-idx1-ubyte"));
  Dataset test = load_idx(find_file(dir, "t10k-images-idx3-ubyte"), find_file(dir, "t10k-labels-idx1-ubyte"));
  if (subset > 0 && subset < train.size()) train = slice(train, 0, subset);
  if (validation_size >= train.size()) {
    throw ConfigError("data.validation_size", "validation split must leave training samples");
  }
  const std::size_t cut = train.size() - validation_size;
  MnistSplits s;
  s.validation = slice(train, cut, train.size());
  s.train = slice(train, 0, cut);
  s.test = std::move(test);
  return s;
}

std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw InvalidParameterError("batch size must be >= 1");
  if (count == 0) throw InputError("cannot batch an empty dataset");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, std::vector<int>> make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Tensor<T> x({indices.size(), 1, data.rows, data.cols});
  std::vector<int> labels(indices.size());
  const std::size_t px = data.pixels();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto img = data.image(indices[b]);
    std::copy(img.begin(), img.end(), x.data.begin() + b * px);
    labels[b] = data.labels[indices[b]];
  }
  return {std::move(x), std::move(labels)};
}

template <typename T>
std::pair<Tensor<T>, std::vector<int>> as_batch(const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch<T>(data, all);
}

template std::pair<Tensor<float>, std::vector<int>> make_batch<float>(const Dataset&, std::span<const std::size_t>);
template std::pair<Tensor<double>, std::vector<int>> make_batch<double>(const Dataset&, std::span<const std::size_t>);
template std::pair<Tensor<float>, std::vector<int>> as_batch<float>(const Dataset&);
template std::pair<Tensor<double>, std::vector<int>> as_batch<double>(const Dataset&);

void apply_affine(std::span<const float> src, std::span<float> dst, std::size_t rows, std::size_t cols,
                  const AffineTransform& t) {
  const double pi = std::acos(-1.0);
  const double theta = t.rotation_deg * pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cy = (static_cast<double>(rows) - 1.0) / 2.0, cx = (static_cast<double>(cols) - 1.0) / 2.0;
  auto at = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(rows) || x >= static_cast<long>(cols)) return 0.0;
    return src[static_cast<std::size_t>(y) * cols + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      // Inverse map: destination -> source.
      const double dx = (static_cast<double>(x) - cx - t.shift_x) / t.scale;
      const double dy = (static_cast<double>(y) - cy - t.shift_y) / t.scale;
      const double sx = c * dx + s * dy + cx;
      const double sy = -s * dx + c * dy + cy;
      // Snap to the grid when within rounding noise so identity and quarter
      // turns resample exactly.
      const double rx = std::round(sx), ry = std::round(sy);
      const double fx = std::abs(sx - rx) < 1e-9 ? rx : sx;
      const double fy = std::abs(sy - ry) < 1e-9 ? ry : sy;
      const long x0 = static_cast<long>(std::floor(fx)), y0 = static_cast<long>(std::floor(fy));
      const double ax = fx - static_cast<double>(x0), ay = fy - static_cast<double>(y0);
      const double v = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                       ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
      dst[y * cols + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

void affine_distort(std::span<float> images, std::size_t rows, std::size_t cols, Rng& rng,
                    const AffineBounds& bounds) {
  if (bounds.max_rotation_deg < 0 || bounds.max_scale < 0 || bounds.max_shift_px < 0) {
    throw InvalidParameterError("affine bounds must be non-negative");
  }
  const std::size_t px = rows * cols;
  std::vector<float> src(px);
  for (std::size_t off = 0; off + px <= images.size(); off += px) {
    AffineTransform t;
    t.rotation_deg = rng.uniform(-bounds.max_rotation_deg, bounds.max_rotation_deg);
    t.scale = rng.uniform(1.0 - bounds.max_scale, 1.0 + bounds.max_scale);
    t.shift_x = rng.uniform(-bounds.max_shift_px, bounds.max_shift_px);
    t.shift_y = rng.uniform(-bounds.max_shift_px, bounds.max_shift_px);
    std::copy_n(images.begin() + off, px, src.begin());
    apply_affine(src, images.subspan(off, px), rows, cols, t);
  }
}

}  // namespace nest

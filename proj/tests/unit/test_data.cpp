#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "nest/data.hpp"
#include "nest/errors.hpp"

using namespace nest;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("nest-data-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "-" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 8),
          static_cast<unsigned char>(v)};
}

std::vector<unsigned char> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                      const std::vector<unsigned char>& pixels) {
  std::vector<unsigned char> out;
  for (auto v : {0x803u, count, rows, cols}) {
    auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<unsigned char> idx_labels(std::uint32_t count, const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> out;
  for (auto v : {0x801u, count}) {
    auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

}  // namespace

TEST(LoadIdx, ScalesEndpoints) {
  TempDir dir;
  write_bytes(dir.path / "img", idx_images(2, 2, 2, {0, 255, 255, 0, 0, 0, 255, 255}));
  write_bytes(dir.path / "lab", idx_labels(2, {3, 9}));
  const Dataset d = load_idx(dir.path / "img", dir.path / "lab");
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.rows, 2u);
  EXPECT_EQ(d.images, (std::vector<float>{0, 1, 1, 0, 0, 0, 1, 1}));
  EXPECT_EQ(d.labels, (std::vector<int>{3, 9}));
}

TEST(LoadIdx, ErrorPaths) {
  TempDir dir;
  write_bytes(dir.path / "img", idx_images(2, 2, 2, std::vector<unsigned char>(8, 1)));
  write_bytes(dir.path / "lab3", idx_labels(3, {1, 2, 3}));
  EXPECT_THROW(load_idx(dir.path / "img", dir.path / "lab3"), ConsistencyError);
  write_bytes(dir.path / "short", idx_images(2, 2, 2, std::vector<unsigned char>(7, 1)));
  write_bytes(dir.path / "lab2", idx_labels(2, {1, 2}));
  EXPECT_THROW(load_idx(dir.path / "short", dir.path / "lab2"), LengthError);
  auto bad = idx_images(2, 2, 2, std::vector<unsigned char>(8, 1));
  bad[3] = 0x01;
  write_bytes(dir.path / "bad", bad);
  EXPECT_THROW(load_idx(dir.path / "bad", dir.path / "lab2"), FormatError);
  EXPECT_THROW(load_idx(dir.path / "missing", dir.path / "lab2"), IoError);
}

TEST(LoadIdx, SaveRoundTripIsBitwise) {
  TempDir dir;
  Dataset d;
  d.rows = d.cols = 3;
  Rng rng(1);
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 9; ++k) d.images.push_back(static_cast<float>(rng.below(256)) / 255.0f);
    d.labels.push_back(static_cast<int>(rng.below(10)));
  }
  save_idx(d, dir.path / "i", dir.path / "l");
  EXPECT_EQ(load_idx(dir.path / "i", dir.path / "l"), d);
}

TEST(Batches, SizesAndCoverage) {
  Rng rng(2);
  const auto b = batches(10, 3, rng);
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(b[3].size(), 1u);
  std::set<std::size_t> seen;
  for (const auto& batch : b) seen.insert(batch.begin(), batch.end());
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(*seen.rbegin(), 9u);
  Rng a(7), c(7);
  EXPECT_EQ(batches(100, 8, a), batches(100, 8, c));
  EXPECT_THROW(batches(0, 3, rng), InputError);
}

TEST(Affine, ZeroBoundsAreIdentity) {
  Rng rng(3);
  std::vector<float> img(2 * 28 * 28);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  std::vector<float> out = img;
  affine_distort(out, 28, 28, rng, {0, 0, 0});
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out[i], img[i], 1e-7);
}

TEST(Affine, QuarterTurnMatchesIndexRemap) {
  const std::size_t n = 5;
  std::vector<float> src(n * n);
  for (std::size_t i = 0; i < src.size(); ++i) src[i] = static_cast<float>(i) / 25.0f;
  std::vector<float> dst(n * n);
  AffineTransform t;
  t.rotation_deg = 90.0;
  apply_affine(src, dst, n, n, t);
  // Either orientation of a quarter turn maps rows onto columns; find which.
  bool ccw = true, cw = true;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      ccw = ccw && dst[r * n + c] == src[c * n + (n - 1 - r)];
      cw = cw && dst[r * n + c] == src[(n - 1 - c) * n + r];
    }
  EXPECT_TRUE(ccw || cw);
}

TEST(Affine, OutputStaysInUnitRangeAndLabelsUntouched) {
  Rng rng(4);
  std::vector<float> img(10 * 28 * 28);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  affine_distort(img, 28, 28, rng, {30, 0.3, 4});
  for (float v : img) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(img.size(), 10u * 784);
  EXPECT_THROW(affine_distort(img, 28, 28, rng, {-1, 0, 0}), InvalidParameterError);
}

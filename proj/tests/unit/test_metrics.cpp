#include <gtest/gtest.h>

#include <cmath>

#include "nest/errors.hpp"
#include "nest/metrics.hpp"
#include "nest/pruning.hpp"
#include "support.hpp"

using namespace nest;
using namespace nest::testing;

namespace {

Model<double> dense(const Architecture& arch) { return make_seed<double>(arch, {1.0, 1.0}, 1); }

double round_k(double flops) { return std::round(flops / 100.0) / 10.0; }

Dataset random_dataset(Rng& rng, std::size_t count, std::size_t rows, std::size_t cols, std::size_t classes) {
  Dataset d;
  d.rows = rows;
  d.cols = cols;
  d.images.resize(count * rows * cols);
  for (auto& v : d.images) v = static_cast<float>(rng.uniform(-1, 1));
  d.labels = random_labels(rng, count, classes);
  return d;
}

}  // namespace

TEST(CountParams, DenseLeNet300) {
  const Model<double> m = dense(lenet_300_100());
  EXPECT_EQ(count_params(m), 266610u);
  EXPECT_EQ(std::lround(count_params(m) / 1000.0), 267);
}

TEST(CountParams, NoActiveWeightsLeavesBiases) {
  const Model<double> m = build_model<double>(lenet_300_100(), 1);
  EXPECT_EQ(count_params(m), 410u);
}

TEST(Flops, DenseTwoPerWeight) {
  const Model<double> m = dense(lenet_300_100());
  const std::vector<double> act{1.0, 1.0, 1.0};
  const auto stats = layer_stats(m, act);
  EXPECT_EQ(count_flops(m, stats), 2u * 266200u);
  EXPECT_EQ(std::lround(count_flops(m, stats) / 1000.0), 532);
}

TEST(Flops, CompactLeNet300Table) {
  const double fc1 = fc_flops(7032, 1.0), fc2 = fc_flops(718, 0.46), fc3 = fc_flops(94, 0.71);
  EXPECT_DOUBLE_EQ(round_k(fc1), 14.1);
  EXPECT_DOUBLE_EQ(round_k(fc2), 0.7);
  EXPECT_DOUBLE_EQ(round_k(fc3), 0.1);
  EXPECT_DOUBLE_EQ(round_k(fc1 + fc2 + fc3), 14.9);
}

TEST(Flops, ConvSamePaddingPositions) {
  EXPECT_DOUBLE_EQ(round_k(conv_flops(74, 784, 0.39)), 45.3);
  EXPECT_NEAR(conv_flops(74, 784, 0.39) / 1000.0, 45.2, 0.1);
}

TEST(Flops, ZeroAreaConvCostsNothing) {
  Model<double> m = dense(lenet5());
  for (auto& v : m.layers[0].area_mask) v = 0;
  const auto params = m.parametric_layers();
  const auto stats = layer_stats(m, std::vector<double>(params.size(), 1.0));
  EXPECT_EQ(stats[0].conv_pct, 0.0);
  EXPECT_EQ(stats[0].flops, 0.0);
}

TEST(Flops, ConvFractionWeightsByActiveTaps) {
  Model<double> m = build_model<double>(small_cnn(6, 2, 2, 2), 1);
  // Pair (0,0) has two taps and half its area, pair (0,1) one tap and all.
  m.layers[0].weights.activate(0, 1.0);
  m.layers[0].weights.activate(1, 1.0);
  m.layers[0].weights.activate(9, 1.0);
  auto& mask = m.layers[0].area_mask;
  for (std::size_t i = 0; i < 18; ++i) mask[i] = 0;
  EXPECT_DOUBLE_EQ(conv_area_fraction(m, 0), (2.0 * 18 + 1.0 * 36) / (3.0 * 36));
}

TEST(Flops, MismatchedStatsAreAccountingError) {
  const Model<double> m = dense(lenet_300_100());
  auto stats = layer_stats(m, std::vector<double>{1.0, 1.0, 1.0});
  stats.pop_back();
  EXPECT_THROW(count_flops(m, stats), AccountingError);
  EXPECT_THROW(layer_stats(m, std::vector<double>{1.0}), AccountingError);
}

TEST(ActPct, IdentityAndOutputLayersAreFull) {
  Rng rng(1);
  Model<double> m = make_seed<double>(mlp(9, {5}, 3, ActivationKind::Identity), {1.0, 1.0}, 2);
  randomize_biases(m, rng);
  const auto act = measure_act_pct(m, random_dataset(rng, 50, 3, 3, 3));
  EXPECT_EQ(act, (std::vector<double>{1.0, 1.0}));
}

TEST(ActPct, ReluMatchesPerSampleScan) {
  Rng rng(3);
  Model<double> m = make_seed<double>(mlp(16, {12, 7}, 4), {1.0, 0.5}, 4);
  randomize_biases(m, rng);
  const auto data = random_dataset(rng, 77, 4, 4, 4);
  const auto act = measure_act_pct(m, data);
  std::vector<double> expected(3, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tensor<double> x({1, 16});
    for (std::size_t k = 0; k < 16; ++k) x.data[k] = data.image(i)[k];
    LayerActivations<double> cache;
    forward(m, x, Mode::Eval, &cache);
    const std::size_t taps[] = {1, 3, 4};
    for (int p = 0; p < 3; ++p) {
      const auto& o = cache.outputs[taps[p]];
      double nz = 0;
      for (double v : o.data) nz += v != 0.0 ? 1 : 0;
      expected[p] += nz / static_cast<double>(o.size()) / static_cast<double>(data.size());
    }
  }
  for (int p = 0; p < 3; ++p) EXPECT_NEAR(act[p], expected[p], 1e-12);
  EXPECT_LT(act[0], 1.0);
}

TEST(Measure, AccuracyCountsArgmax) {
  Model<double> m = build_model<double>(mlp(1, {}, 2), 1);
  m.layers[0].weights.activate(0, 1.0);
  m.layers[0].weights.activate(1, -1.0);
  Dataset d;
  d.rows = d.cols = 1;
  d.images = {0.5f, -0.5f, 0.25f, -0.75f};
  d.labels = {0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(measure(m, d, 3).accuracy, 0.5);
  EXPECT_THROW(measure(m, Dataset{}), InputError);
}

TEST(Accounting, MonotoneUnderPruning) {
  Rng rng(5);
  Model<double> m = make_seed<double>(mlp(16, {12, 7}, 4), {1.0, 0.5}, 6);
  const auto data = random_dataset(rng, 40, 4, 4, 4);
  const std::vector<double> full(3, 1.0);
  std::size_t params = count_params(m);
  std::uint64_t flops = count_flops(m, layer_stats(m, full));
  for (int i = 0; i < 10; ++i) {
    prune_weights_step(m, PruneParams{});
    EXPECT_LT(count_params(m), params);
    EXPECT_LE(count_flops(m, layer_stats(m, full)), flops);
    params = count_params(m);
    flops = count_flops(m, layer_stats(m, full));
  }
}

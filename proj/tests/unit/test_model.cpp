#include <gtest/gtest.h>

#include <cmath>

#include "nest/checkpoint.hpp"
#include "nest/errors.hpp"
#include "nest/metrics.hpp"
#include "nest/network.hpp"
#include "support.hpp"

using namespace nest;
using namespace nest::testing;

TEST(Seed, RatioScalesHiddenWidths) {
  const Model<float> m = make_seed<float>(lenet_300_100(), {0.4, 0.1}, 1);
  EXPECT_EQ(m.hidden_widths(), (std::vector<std::size_t>{120, 40}));
  EXPECT_EQ(m.classes(), 10u);
}

TEST(Seed, DenseLeNet300HasPaperParameterCount) {
  const Model<float> m = make_seed<float>(lenet_300_100(), {1.0, 1.0}, 1);
  EXPECT_EQ(m.active_connections(), 784u * 300 + 300 * 100 + 100 * 10);
  EXPECT_EQ(count_params(m), 266610u);
  EXPECT_NEAR(static_cast<double>(count_params(m)) / 1000.0, 266.0, 1.0);
}

TEST(Seed, DensityIsPerLayerBeforeRepair) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Model<float> m = make_seed<float>(lenet_300_100(), {1.0, 0.1}, seed);
    const Model<float> raw = make_seed<float>(lenet_300_100(), {1.0, 0.1}, seed);
    for (std::size_t li : m.parametric_layers()) {
      const std::size_t total = m.layers[li].weights.size();
      const auto expected = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(total)));
      const std::size_t active = m.layers[li].weights.active_count();
      const Disconnected d = disconnected_units(m.layers[li]);
      EXPECT_TRUE(d.rows.empty() && d.cols.empty());
      EXPECT_GE(active, expected);
      // Repairs are bounded by the number of units that could be isolated.
      EXPECT_LE(active, expected + m.layers[li].weights.dim(0) + m.layers[li].weights.dim(1));
    }
    EXPECT_EQ(m, raw);
  }
}

TEST(Seed, ZeroWidthIsConfigError) {
  try {
    make_seed<float>(lenet_300_100(), {0.001, 0.1}, 1);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "arch.ratio");
  }
}

TEST(Seed, WeightsWithinInitBound) {
  const Model<double> m = make_seed<double>(lenet_300_100(), {0.4, 0.1}, 3);
  for (std::size_t li : m.parametric_layers()) {
    const double s = init_scale(m.layers[li]);
    for (std::size_t i = 0; i < m.layers[li].weights.size(); ++i) {
      EXPECT_LE(std::abs(m.layers[li].weights.value(i)), s);
    }
  }
}

TEST(Seed, ConvAreaMasksStartFull) {
  const Model<float> m = make_seed<float>(lenet5(), {1.0, 0.1}, 3);
  for (std::size_t li : m.parametric_layers()) {
    for (auto a : m.layers[li].area_mask) EXPECT_EQ(a, 1);
  }
  EXPECT_EQ(m.layers[0].area_mask.size(), 1u * 6 * 28 * 28);
  EXPECT_EQ(m.layers[3].area_mask.size(), 6u * 16 * 10 * 10);
}

TEST(EnsureConnected, IdempotentOnConnectedModel) {
  Model<float> m = make_seed<float>(lenet_300_100(), {0.4, 0.1}, 4);
  const Model<float> before = m;
  EXPECT_EQ(ensure_connected(m), 0u);
  EXPECT_EQ(m, before);
}

TEST(EnsureConnected, IsolatedUnitGetsOneIncomingAndOneOutgoing) {
  Model<float> m = make_seed<float>(mlp(10, {8}, 4), {1.0, 0.5}, 5);
  const std::size_t unit = 3;
  for (std::size_t n = 0; n < 10; ++n) m.layers[0].weights.deactivate(unit * 10 + n);
  for (std::size_t r = 0; r < 4; ++r) m.layers[2].weights.deactivate(r * 8 + unit);
  // Make sure no other unit depends on the removed weights.
  ensure_connected(m);
  for (std::size_t n = 0; n < 10; ++n) m.layers[0].weights.deactivate(unit * 10 + n);
  for (std::size_t r = 0; r < 4; ++r) m.layers[2].weights.deactivate(r * 8 + unit);
  const std::size_t before = m.active_connections();
  if (disconnected_units(m.layers[0]).cols.empty() && disconnected_units(m.layers[2]).rows.empty()) {
    EXPECT_EQ(ensure_connected(m), 2u);
    EXPECT_EQ(m.active_connections(), before + 2);
  }
  EXPECT_TRUE(all_connected(m));
}

TEST(EnsureConnected, RandomSparseSeedsAreAlwaysConnected) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Model<float> m = make_seed<float>(mlp(30, {20, 10}, 5), {1.0, 0.1}, seed);
    EXPECT_TRUE(all_connected(m)) << seed;
  }
}

TEST(NeuronSlot, AddsInertUnit) {
  Model<double> m = make_seed<double>(lenet_300_100(), {0.4, 0.1}, 6);
  Rng rng(1);
  auto x = random_input<double>(rng, {4, 784}, 0, 1);
  const auto before = forward(m, x);
  EXPECT_EQ(add_neuron_slot(m, 0), 120u);
  EXPECT_EQ(m.hidden_widths(), (std::vector<std::size_t>{121, 40}));
  EXPECT_EQ(forward(m, x).data, before.data);
  add_neuron_slot(m, 0);
  EXPECT_EQ(m.hidden_widths(), (std::vector<std::size_t>{122, 40}));
  EXPECT_EQ(m.layers[2].weights.dim(1), 122u);
}

TEST(NeuronSlot, RoundTripThroughCheckpointKeepsOutputs) {
  Model<float> m = make_seed<float>(lenet_300_100(), {0.4, 0.1}, 7);
  add_neuron_slot(m, 2);
  Rng rng(2);
  auto x = random_input<float>(rng, {3, 784}, 0, 1);
  const Model<float> loaded = decode_checkpoint(encode_checkpoint(m));
  EXPECT_EQ(loaded, m);
  EXPECT_EQ(forward(loaded, x).data, forward(m, x).data);
}

TEST(NeuronSlot, RejectsNonHiddenLayer) {
  Model<float> m = make_seed<float>(lenet_300_100(), {0.4, 0.1}, 8);
  EXPECT_THROW(add_neuron_slot(m, 4), StructuralError);
  EXPECT_THROW(add_neuron_slot(m, 1), StructuralError);
}

TEST(FeatureMapSlot, GrowsConvAndNextLayer) {
  Model<double> m = make_seed<double>(lenet5(), {1.0, 0.5}, 9);
  Rng rng(3);
  auto x = random_input<double>(rng, {2, 784}, 0, 1);
  const auto before = forward(m, x);
  const std::size_t positions = m.layers[0].weights.size() + m.layers[3].weights.size();
  EXPECT_EQ(add_feature_map_slot(m, 0), 6u);
  EXPECT_EQ(m.layers[0].spec.units, 7u);
  EXPECT_EQ(m.layers[3].spec.in.channels, 7u);
  EXPECT_EQ(m.layers[0].weights.size() + m.layers[3].weights.size(), positions + 25 * 1 + 25 * 16);
  EXPECT_EQ(forward(m, x).data, before.data);
}

TEST(FeatureMapSlot, LastConvExtendsFlattenedFcInput) {
  Model<double> m = make_seed<double>(lenet5(), {1.0, 0.5}, 10);
  Rng rng(4);
  auto x = random_input<double>(rng, {2, 784}, 0, 1);
  const auto before = forward(m, x);
  add_feature_map_slot(m, 3);
  EXPECT_EQ(m.layers[3].spec.units, 17u);
  EXPECT_EQ(m.layers[7].weights.dim(1), 17u * 25);
  EXPECT_EQ(forward(m, x).data, before.data);
  EXPECT_THROW(add_feature_map_slot(m, 7), StructuralError);
}

TEST(RemoveUnits, DropsRowsAndColumns) {
  Model<float> m = make_seed<float>(lenet_300_100(), {0.4, 0.1}, 11);
  remove_units(m, 0, {0, 5, 119});
  EXPECT_EQ(m.hidden_widths(), (std::vector<std::size_t>{117, 40}));
  EXPECT_EQ(m.layers[2].weights.dim(1), 117u);
  std::vector<std::size_t> all(40);
  for (std::size_t i = 0; i < 40; ++i) all[i] = i;
  EXPECT_THROW(remove_units(m, 2, all), StructuralError);
}

TEST(Architecture, LeNet5Shapes) {
  const Model<float> m = build_model<float>(lenet5(), 1);
  EXPECT_EQ(m.layers[0].spec.out, (FeatureShape{6, 28, 28}));
  EXPECT_EQ(m.layers[3].spec.out, (FeatureShape{16, 10, 10}));
  EXPECT_EQ(m.layers[7].spec.in.channels, 400u);
  EXPECT_THROW(architecture_by_name("alexnet"), ConfigError);
}

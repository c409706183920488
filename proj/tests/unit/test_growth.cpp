#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nest/errors.hpp"
#include "nest/growth.hpp"
#include "nest/selection.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace nest;
using namespace nest::testing;

namespace {

std::vector<std::size_t> dormant_positions(const MaskedTensor<double>& w) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!w.active(i)) out.push_back(i);
  return out;
}

}  // namespace

TEST(Selection, TiesGoToLowestIndex) {
  const std::vector<double> equal(10, 1.0);
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_EQ(select_largest<double>(equal, all, 5), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(select_smallest<double>(equal, all, 2), (std::vector<std::size_t>{0, 1}));
}

TEST(Selection, FractionRoundingIsStable) {
  EXPECT_EQ(ceil_fraction(0.1, 30), 3u);
  EXPECT_EQ(ceil_fraction(0.1, 31), 4u);
  EXPECT_EQ(floor_fraction(0.2, 15), 3u);
  EXPECT_EQ(floor_fraction(0.5, 3), 1u);
}

TEST(GrowConnections, ZeroGradientsPickIndexOrderAndKeepFunction) {
  Model<double> m = make_seed<double>(mlp(6, {5}, 3), {1.0, 0.3}, 1);
  BatchGradients<double> grads;
  grads.layers.resize(m.layers.size());
  for (std::size_t li : m.parametric_layers()) grads.layers[li].d_weights = Tensor<double>(m.layers[li].weights.shape());
  const auto dormant0 = dormant_positions(m.layers[0].weights);
  Rng rng(1);
  auto x = random_input<double>(rng, {3, 6});
  const auto before = forward(m, x);
  GrowthParams p;
  p.conn_fraction = 0.25;
  grow_connections(m, grads, p, 0.1);
  const std::size_t k = ceil_fraction(0.25, dormant0.size());
  for (std::size_t i = 0; i < dormant0.size(); ++i) EXPECT_EQ(m.layers[0].weights.active(dormant0[i]), i < k);
  EXPECT_EQ(forward(m, x).data, before.data);
}

TEST(GrowConnections, SingleDormantPositionGetsGradientStep) {
  Model<double> m = build_model<double>(mlp(2, {}, 1), 1);
  m.layers[0].weights.activate(0, 0.5);
  BatchGradients<double> grads;
  grads.layers.resize(1);
  grads.layers[0].d_weights = Tensor<double>({1, 2}, {1.0, -5.0});
  GrowthParams p;
  p.conn_fraction = 1.0;
  EXPECT_EQ(grow_connections(m, grads, p, 0.02), 1u);
  EXPECT_DOUBLE_EQ(m.layers[0].weights.value(1), 0.1);
  EXPECT_EQ(m.layers[0].weights.value(0), 0.5);
  EXPECT_EQ(grow_connections(m, grads, p, 0.02), 0u);
}

TEST(GrowConnections, SelectionMatchesFullSort) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Model<double> m = build_model<double>(mlp(30, {}, 20), 1);
    auto& w = m.layers[0].weights;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (rng.uniform() < 0.5) w.activate(i, rng.uniform(-1, 1));
    BatchGradients<double> grads;
    grads.layers.resize(1);
    grads.layers[0].d_weights = random_input<double>(rng, {20, 30});
    // Some exact ties.
    for (int t = 0; t < 20; ++t) grads.layers[0].d_weights.data[rng.below(600)] = 0.25;
    const Model<double> before = m;
    const auto dormant = dormant_positions(w);
    std::vector<double> score(600);
    for (std::size_t i = 0; i < 600; ++i) score[i] = std::fabs(grads.layers[0].d_weights.data[i]);
    const auto expected = sort_select(score, dormant, static_cast<std::size_t>(std::ceil(0.1 * dormant.size() - 1e-9)), true);
    GrowthParams p;
    grow_connections(m, grads, p, 0.1);
    std::vector<std::size_t> grown;
    for (std::size_t i : dormant)
      if (m.layers[0].weights.active(i)) grown.push_back(i);
    EXPECT_EQ(grown, expected);
    for (std::size_t i = 0; i < 600; ++i)
      if (before.layers[0].weights.active(i)) EXPECT_EQ(m.layers[0].weights.value(i), before.layers[0].weights.value(i));
  }
}

TEST(Bridging, SingleSampleOuterProduct) {
  Model<double> m = make_seed<double>(mlp(2, {3}, 2), {1.0, 1.0}, 1);
  BatchGradients<double> grads;
  grads.layers.resize(m.layers.size());
  grads.activations.inputs.resize(m.layers.size());
  grads.activations.inputs[0] = Tensor<double>({1, 2}, {3, 0});
  grads.layers[2].d_output = Tensor<double>({1, 2}, {1, -2});
  const auto g = bridging_gradients(m, 0, grads);
  EXPECT_EQ(g.shape, (Shape{2, 2}));
  EXPECT_EQ(g.data, (Buffer<double>{3, 0, -6, 0}));
}

TEST(Bridging, ZeroActivationsGiveZero) {
  Model<double> m = make_seed<double>(mlp(4, {3}, 2), {1.0, 1.0}, 2);
  Tensor<double> x({5, 4});
  const std::vector<int> labels{0, 1, 0, 1, 1};
  for (double v : bridging_gradients(m, 0, x, labels).data) EXPECT_EQ(v, 0.0);
}

TEST(Bridging, BatchMatchesPerSampleMean) {
  Rng rng(3);
  Model<double> m = make_seed<double>(mlp(7, {6, 5}, 4, ActivationKind::Tanh), {1.0, 0.5}, 3);
  auto x = random_input<double>(rng, {16, 7});
  const auto labels = random_labels(rng, 16, 4);
  for (std::size_t layer : {0u, 2u}) {
    const auto g = bridging_gradients(m, layer, x, labels);
    const std::size_t next = *m.next_parametric(layer);
    std::vector<double> ref(g.size(), 0.0);
    for (std::size_t b = 0; b < 16; ++b) {
      Tensor<double> xb({1, 7}, std::vector<double>(x.data.begin() + b * 7, x.data.begin() + (b + 1) * 7));
      const std::vector<int> lb{labels[b]};
      const auto gb = backward(m, xb, lb);
      const auto one = naive_bridging(gb.layers[next].d_output, gb.activations.inputs[layer]);
      for (std::size_t i = 0; i < ref.size(); ++i) ref[i] += one[i] / 16.0;
    }
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_TRUE(rel_close(g.data[i], ref[i], 1e-12, 1e-15));
  }
}

TEST(GrowNeuron, MatchesStraightLineOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    Model<double> m = make_seed<double>(mlp(6, {5, 4}, 3, ActivationKind::Tanh), {1.0, 0.5}, 40 + trial);
    auto x = random_input<double>(rng, {8, 6});
    const auto labels = random_labels(rng, 8, 3);
    const std::size_t layer = trial % 2 == 0 ? 0 : 2;
    const std::size_t next = *m.next_parametric(layer);
    const Model<double> before = m;
    const auto oracle = neuron_oracle(m, layer, x, labels, 0.3, 0.2, m.rng);
    const auto grown = grow_neuron(m, layer, x, labels, GrowthParams{0.3, 0.2, 0.1, 8, 1024});
    EXPECT_EQ(grown.pairs, oracle.pairs);
    EXPECT_EQ(grown.signs, oracle.signs);
    for (std::size_t i = 0; i < oracle.w_in.size(); ++i) EXPECT_TRUE(rel_close(grown.w_in[i], oracle.w_in[i], 1e-12, 1e-300));
    for (std::size_t i = 0; i < oracle.w_out.size(); ++i) EXPECT_TRUE(rel_close(grown.w_out[i], oracle.w_out[i], 1e-12, 1e-15));
    // The new unit is wired exactly where pairs touched it.
    const std::size_t in = m.layers[layer].weights.dim(1), width = m.layers[next].weights.dim(1);
    for (std::size_t n = 0; n < in; ++n) {
      EXPECT_EQ(m.layers[layer].weights.value(grown.unit * in + n), grown.w_in[n]);
    }
    for (std::size_t r = 0; r < m.layers[next].weights.dim(0); ++r) {
      EXPECT_EQ(m.layers[next].weights.value(r * width + grown.unit), grown.w_out[r]);
    }
    // Birth strength scaling, averaged over the new unit's connections.
    std::vector<bool> rows(grown.w_out.size(), false), cols(grown.w_in.size(), false);
    for (std::size_t p : grown.pairs) {
      rows[p / in] = true;
      cols[p % in] = true;
    }
    auto mean_touched = [](const std::vector<double>& v, const std::vector<bool>& t) {
      double s = 0;
      int c = 0;
      for (std::size_t i = 0; i < v.size(); ++i)
        if (t[i]) {
          s += std::fabs(v[i]);
          ++c;
        }
      return s / c;
    };
    auto mean_active = [](const MaskedTensor<double>& w) {
      double s = 0;
      int c = 0;
      for (std::size_t i = 0; i < w.size(); ++i)
        if (w.active(i)) {
          s += std::fabs(w.value(i));
          ++c;
        }
      return s / c;
    };
    EXPECT_TRUE(rel_close(mean_touched(grown.w_out, rows), 0.3 * mean_active(before.layers[next].weights), 1e-6, 0));
    EXPECT_TRUE(rel_close(mean_touched(grown.w_in, cols), 0.3 * mean_active(before.layers[layer].weights), 1e-6, 0));
    EXPECT_TRUE(all_connected(m));
  }
}

TEST(GrowNeuron, TooFewPairsIsConfigError) {
  Model<double> m = make_seed<double>(mlp(2, {3}, 2), {1.0, 1.0}, 5);
  Rng rng(5);
  auto x = random_input<double>(rng, {2, 2});
  const std::vector<int> labels{0, 1};
  GrowthParams p;
  p.beta = 0.2;  // 0.2 * 2 * 2 < 1
  EXPECT_THROW(grow_neuron(m, 0, x, labels, p), ConfigError);
}

TEST(GrowNeuron, ZeroBridgingGradientIsDegenerateAndRollsBack) {
  Model<double> m = make_seed<double>(mlp(4, {3}, 2), {1.0, 1.0}, 6);
  const Model<double> before = m;
  Tensor<double> x({3, 4});
  const std::vector<int> labels{0, 1, 1};
  EXPECT_THROW(grow_neuron(m, 0, x, labels, GrowthParams{}), GrowthDegenerateError);
  EXPECT_EQ(m, before);
}

TEST(GrowNeuron, DecreasesLossOnTanhToyNets) {
  int decreased = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(700 + trial);
    Model<double> m = make_seed<double>(mlp(8, {6}, 3, ActivationKind::Tanh), {1.0, 0.5}, 900 + trial);
    auto x = random_input<double>(rng, {32, 8});
    const auto labels = random_labels(rng, 32, 3);
    const double before = evaluate_loss(m, x, labels);
    grow_neuron(m, 0, x, labels, GrowthParams{0.3, 0.2, 0.1, 8, 32});
    if (evaluate_loss(m, x, labels) < before) ++decreased;
  }
  EXPECT_GE(decreased, 90);
}

TEST(GrowFeatureMap, SingleCandidateIsKept) {
  Model<double> m = make_seed<double>(small_cnn(8, 2, 3, 3), {1.0, 0.5}, 7);
  Rng rng(7);
  auto x = random_input<double>(rng, {4, 64}, 0, 1);
  const auto labels = random_labels(rng, 4, 3);
  GrowthParams p;
  p.candidates = 1;
  const auto r = grow_feature_map(m, 0, x, labels, p);
  EXPECT_EQ(r.chosen, 0u);
  ASSERT_EQ(r.candidate_losses.size(), 1u);
  EXPECT_EQ(evaluate_loss(m, x, labels), r.candidate_losses[0]);
}

TEST(GrowFeatureMap, KeepsArgminAndPreservesExistingWeights) {
  Model<double> m = make_seed<double>(lenet5(), {0.5, 0.2}, 8);
  Rng rng(8);
  auto x = random_input<double>(rng, {6, 784}, 0, 1);
  const auto labels = random_labels(rng, 6, 10);
  for (std::size_t conv : {0u, 3u}) {
    const Model<double> before = m;
    const auto r = grow_feature_map(m, conv, x, labels, GrowthParams{});
    ASSERT_EQ(r.candidate_losses.size(), 8u);
    EXPECT_EQ(evaluate_loss(m, x, labels), *std::min_element(r.candidate_losses.begin(), r.candidate_losses.end()));
    EXPECT_EQ(r.candidate_losses[r.chosen], *std::min_element(r.candidate_losses.begin(), r.candidate_losses.end()));
    EXPECT_GT(m.active_connections(), before.active_connections());
    const auto& w0 = before.layers[conv].weights;
    const std::size_t maps = before.layers[conv].spec.units, kk = w0.dim(2) * w0.dim(3);
    for (std::size_t a = 0; a < w0.dim(0); ++a)
      for (std::size_t n = 0; n < maps; ++n)
        for (std::size_t t = 0; t < kk; ++t)
          EXPECT_EQ(m.layers[conv].weights.value((a * (maps + 1) + n) * kk + t), w0.value((a * maps + n) * kk + t));
  }
}

TEST(GrowthParams, Validation) {
  GrowthParams p;
  p.alpha = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.beta = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.conn_fraction = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  EXPECT_NO_THROW(p.validate());
}

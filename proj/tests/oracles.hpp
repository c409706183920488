#pragma once

// Independent brute-force reimplementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "nest/network.hpp"

namespace nest::testing {

// Positions ordered by score (descending when `largest`), ties by index,
// then the first k, sorted ascending.
inline std::vector<std::size_t> sort_select(const std::vector<double>& score, std::vector<std::size_t> candidates,
                                            std::size_t k, bool largest) {
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return largest ? score[a] > score[b] : score[a] < score[b];
    return a < b;
  });
  candidates.resize(std::min(k, candidates.size()));
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

// Naive G[m][n] = sum_b dU[b][m] * x[b][n].
inline std::vector<double> naive_bridging(const Tensor<double>& du, const Tensor<double>& x) {
  const std::size_t batch = x.dim(0), n_count = x.size() / batch, m_count = du.size() / batch;
  std::vector<double> g(m_count * n_count, 0.0);
  for (std::size_t m = 0; m < m_count; ++m)
    for (std::size_t n = 0; n < n_count; ++n)
      for (std::size_t b = 0; b < batch; ++b) g[m * n_count + n] += du.data[b * m_count + m] * x.data[b * n_count + n];
  return g;
}

struct NeuronOracle {
  std::vector<std::size_t> pairs;
  std::vector<double> signs;
  std::vector<double> raw_in, raw_out, w_in, w_out;
};

// Neuron growth written out step by step: G, floor(beta*M*N) largest |G|,
// sqrt(|G|) * rand{1,-1} per pair with the input side taking the descent
// sign -sgn(G), then birth-strength scaling by the mean magnitude of the
// layer's active weights over the mean magnitude of the touched entries.
inline NeuronOracle neuron_oracle(const Model<double>& model, std::size_t layer, const Tensor<double>& x,
                                  std::span<const int> labels, double alpha, double beta, Rng rng) {
  const std::size_t next = *model.next_parametric(layer);
  const auto grads = backward(model, x, labels, Mode::Train);
  const Tensor<double>& xin = grads.activations.inputs[layer];
  const Tensor<double>& du = grads.layers[next].d_output;
  const std::vector<double> g = naive_bridging(du, xin);
  const std::size_t n_count = xin.size() / xin.dim(0), m_count = du.size() / du.dim(0);
  std::vector<double> mag(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) mag[i] = std::fabs(g[i]);
  std::vector<std::size_t> all(g.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto k = static_cast<std::size_t>(std::floor(beta * static_cast<double>(m_count * n_count) + 1e-9));

  NeuronOracle o;
  o.pairs = sort_select(mag, all, k, true);
  o.raw_in.assign(n_count, 0.0);
  o.raw_out.assign(m_count, 0.0);
  std::vector<bool> tin(n_count, false), tout(m_count, false);
  for (std::size_t p : o.pairs) {
    const std::size_t m = p / n_count, n = p % n_count;
    const double s = rng.sign();
    const double dw = std::sqrt(mag[p]) * s;
    const double sg = g[p] > 0 ? 1.0 : (g[p] < 0 ? -1.0 : 0.0);
    o.signs.push_back(s);
    o.raw_out[m] += dw;
    o.raw_in[n] -= dw * sg;
    tout[m] = true;
    tin[n] = true;
  }
  auto mean_touched = [](const std::vector<double>& w, const std::vector<bool>& t) {
    double s = 0;
    int c = 0;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (t[i]) {
        s += std::fabs(w[i]);
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
  const double sin = alpha * mean_active(model.layers[layer].weights) / mean_touched(o.raw_in, tin);
  const double sout = alpha * mean_active(model.layers[next].weights) / mean_touched(o.raw_out, tout);
  for (double v : o.raw_in) o.w_in.push_back(v * sin);
  for (double v : o.raw_out) o.w_out.push_back(v * sout);
  return o;
}

// Batch mean of |C[m][n]| by direct summation. input [B x M x H x W],
// kernels [M x N x k x k], stride 1, zero padding `pad`.
inline std::vector<double> naive_mean_abs_depthwise(const MaskedTensor<double>& kernels, const Tensor<double>& input,
                                                    std::size_t pad) {
  const std::size_t batch = input.dim(0), maps_in = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t maps_out = kernels.dim(1), k = kernels.dim(2);
  const std::size_t p_out = h + 2 * pad - k + 1, q_out = w + 2 * pad - k + 1;
  std::vector<double> out(maps_in * maps_out * p_out * q_out, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t m = 0; m < maps_in; ++m)
      for (std::size_t n = 0; n < maps_out; ++n)
        for (std::size_t p = 0; p < p_out; ++p)
          for (std::size_t q = 0; q < q_out; ++q) {
            double c = 0.0;
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long y = static_cast<long>(p + i) - static_cast<long>(pad);
                const long x = static_cast<long>(q + j) - static_cast<long>(pad);
                if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) continue;
                c += input.data[((b * maps_in + m) * h + y) * w + x] * kernels.value(((m * maps_out + n) * k + i) * k + j);
              }
            out[((m * maps_out + n) * p_out + p) * q_out + q] += std::fabs(c) / static_cast<double>(batch);
          }
  return out;
}

}  // namespace nest::testing

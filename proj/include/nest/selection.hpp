#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace nest {

// Picks the k candidate positions with the largest (or smallest) score.
// Ties go to the lower position index, so the chosen set is identical to
// the first k entries of a full sort under that order. The result is
// returned in ascending position order.
template <typename Score>
std::vector<std::size_t> select_extreme(std::span<const Score> scores, std::vector<std::size_t> candidates,
                                        std::size_t k, bool largest) {
  k = std::min(k, candidates.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return largest ? scores[a] > scores[b] : scores[a] < scores[b];
    return a < b;
  };
  if (k < candidates.size()) {
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                     better);
  }
  candidates.resize(k);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

template <typename Score>
std::vector<std::size_t> select_largest(std::span<const Score> scores, std::vector<std::size_t> candidates,
                                        std::size_t k) {
  return select_extreme(scores, std::move(candidates), k, true);
}

template <typename Score>
std::vector<std::size_t> select_smallest(std::span<const Score> scores, std::vector<std::size_t> candidates,
                                         std::size_t k) {
  return select_extreme(scores, std::move(candidates), k, false);
}

// ceil(fraction * count), guarding against floating-point spill-over
// such as 0.1 * 30 = 3.0000000000000004.
inline std::size_t ceil_fraction(double fraction, std::size_t count) {
  const double exact = fraction * static_cast<double>(count);
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(exact));
}

inline std::size_t floor_fraction(double fraction, std::size_t count) {
  const double exact = fraction * static_cast<double>(count);
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::floor(exact));
}

}  // namespace nest

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nest/errors.hpp"

namespace nest {

using Shape = std::vector<std::size_t>;

// Fixed 64-byte alignment. Vectorized kernels split a buffer into a scalar
// head and packet body depending on its address; pinning the address keeps
// floating-point results identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Dense row-major array.
template <typename T>
struct Tensor {
  Shape shape;
  Buffer<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(element_count(shape), fill) {}
  Tensor(Shape s, const std::vector<T>& values) : shape(std::move(s)), data(values.begin(), values.end()) {
    if (data.size() != element_count(shape)) {
      throw DimensionError("tensor data size " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  // Elements per leading-index slice (e.g. per sample for a batch tensor).
  std::size_t stride0() const { return shape.empty() || shape[0] == 0 ? 0 : size() / shape[0]; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Weight array paired with an activity mask. Positions whose mask is 0 are
// dormant and always hold exactly zero.
template <typename T>
class MaskedTensor {
 public:
  MaskedTensor() = default;
  explicit MaskedTensor(Shape shape)
      : shape_(std::move(shape)), values_(element_count(shape_), T{0}), mask_(values_.size(), 0) {}
  MaskedTensor(Shape shape, std::vector<T> values, std::vector<std::uint8_t> mask);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<const T> values() const { return values_; }
  std::span<const std::uint8_t> mask() const { return mask_; }

  T value(std::size_t i) const { return values_[i]; }
  bool active(std::size_t i) const { return mask_[i] != 0; }

  // Marks position i active and stores v there.
  void activate(std::size_t i, T v) {
    mask_[i] = 1;
    values_[i] = v;
  }
  void deactivate(std::size_t i) {
    mask_[i] = 0;
    values_[i] = T{0};
  }
  // Writes v at an active position; dormant positions are left at zero.
  void set(std::size_t i, T v) {
    if (mask_[i] != 0) values_[i] = v;
  }
  // Adds delta at an active position only.
  void add(std::size_t i, T delta) {
    if (mask_[i] != 0) values_[i] += delta;
  }

  std::size_t active_count() const;
  bool invariant_holds() const;

  friend bool operator==(const MaskedTensor&, const MaskedTensor&) = default;

 private:
  Shape shape_;
  Buffer<T> values_;
  std::vector<std::uint8_t> mask_;
};

extern template class MaskedTensor<float>;
extern template class MaskedTensor<double>;

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out;
  out.shape = t.shape;
  out.data.assign(t.data.begin(), t.data.end());
  return out;
}

template <typename To, typename From>
MaskedTensor<To> masked_cast(const MaskedTensor<From>& t) {
  std::vector<To> values(t.values().begin(), t.values().end());
  std::vector<std::uint8_t> mask(t.mask().begin(), t.mask().end());
  return MaskedTensor<To>(t.shape(), std::move(values), std::move(mask));
}

}  // namespace nest

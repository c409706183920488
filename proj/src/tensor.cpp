#include "nest/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace nest {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
MaskedTensor<T>::MaskedTensor(Shape shape, std::vector<T> values, std::vector<std::uint8_t> mask)
    : shape_(std::move(shape)), values_(values.begin(), values.end()), mask_(std::move(mask)) {
  const std::size_t n = element_count(shape_);
  if (values_.size() != n || mask_.size() != n) {
    throw DimensionError("masked tensor arrays do not match shape " + shape_string(shape_));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask_[i] == 0) values_[i] = T{0};
    else mask_[i] = 1;
  }
}

template <typename T>
std::size_t MaskedTensor<T>::active_count() const {
  return static_cast<std::size_t>(std::count_if(mask_.begin(), mask_.end(), [](auto m) { return m != 0; }));
}

template <typename T>
bool MaskedTensor<T>::invariant_holds() const {
  if (values_.size() != mask_.size() || values_.size() != element_count(shape_)) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    // Bitwise check: -0.0 on a dormant position also breaks the invariant.
    if (mask_[i] == 0 && !(values_[i] == T{0} && !std::signbit(values_[i]))) return false;
  }
  return true;
}

template class MaskedTensor<float>;
template class MaskedTensor<double>;

}  // namespace nest

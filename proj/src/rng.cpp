#include "nest/rng.hpp"

#include <sstream>

#include "nest/errors.hpp"

namespace nest {

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw InvalidParameterError("Rng::below requires n > 0");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw FormatError("malformed rng state");
}

}  // namespace nest

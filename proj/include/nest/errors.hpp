#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nest {

// Base of every error raised by the library. `category()` is the short tag
// written into machine-readable error records by the CLI.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* category() const noexcept { return "error"; }
};

#define NEST_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(what) {}          \
    const char* category() const noexcept override { return tag; }   \
  };

NEST_DEFINE_ERROR(DimensionError, "dimension")
NEST_DEFINE_ERROR(InvalidParameterError, "invalid-parameter")
NEST_DEFINE_ERROR(InputError, "input")
NEST_DEFINE_ERROR(StructuralError, "structural")
NEST_DEFINE_ERROR(PruneExhaustedError, "prune-exhausted")
NEST_DEFINE_ERROR(FormatError, "format")
NEST_DEFINE_ERROR(ConsistencyError, "consistency")
NEST_DEFINE_ERROR(LengthError, "length")
NEST_DEFINE_ERROR(IoError, "io")
NEST_DEFINE_ERROR(AccountingError, "accounting")

#undef NEST_DEFINE_ERROR

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const char* category() const noexcept override { return "config"; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class NumericError : public Error {
 public:
  NumericError(std::size_t layer, const std::string& what)
      : Error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  const char* category() const noexcept override { return "numeric"; }
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

// Raised when Algorithm-1 style neuron growth selects no pair with a
// non-zero bridging gradient; the neuron slot is not kept.
class GrowthDegenerateError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "growth-degenerate"; }
};

class GrowthBudgetError : public Error {
 public:
  GrowthBudgetError(double best_accuracy, const std::string& what)
      : Error(what), best_accuracy_(best_accuracy) {}
  const char* category() const noexcept override { return "growth-budget"; }
  double best_accuracy() const noexcept { return best_accuracy_; }

 private:
  double best_accuracy_;
};

}  // namespace nest

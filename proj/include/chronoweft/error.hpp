#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace chronoweft {

/// Base for every error raised by the library.  `category()` decides the CLI
/// exit status: validation problems exit with 2, numerical failures with 3.
class Error : public std::runtime_error {
 public:
  enum class Category { validation, numerical };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  [[nodiscard]] Category category() const noexcept { return category_; }

 private:
  Category category_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(Category::validation, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(Category::numerical, what) {}
};

/// Tensor shapes do not conform for an operation.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// The vector field returned a non-finite derivative.
class IntegrationError : public NumericalError {
 public:
  IntegrationError(const std::string& what, std::vector<double> state)
      : NumericalError(what), state_(std::move(state)) {}

  [[nodiscard]] const std::vector<double>& state() const noexcept { return state_; }

 private:
  std::vector<double> state_;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& system, std::size_t step)
      : NumericalError("trajectory of '" + system + "' diverged at step " + std::to_string(step)),
        system_(system),
        step_(step) {}

  [[nodiscard]] const std::string& system() const noexcept { return system_; }
  [[nodiscard]] std::size_t step() const noexcept { return step_; }

 private:
  std::string system_;
  std::size_t step_;
};

class DegenerateNormalizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SequenceLengthError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class OptimizerError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateReservoirError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class RegularizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InsufficientDataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UndefinedMetricError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class WindowMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SearchExhaustedError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace chronoweft

#pragma once

#include <stdexcept>
#include <string>

namespace inforesp {

/// Base of every error raised by the library. `category()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Category { usage, numerical };

  explicit Error(const std::string& what, Category category = Category::numerical)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

/// Invalid argument or violated precondition.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what, Category::usage) {}
};

/// Configuration or CLI problem (unknown keys, bad tolerances, unwritable paths).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, Category::usage) {}
};

/// Interaction matrix has an eigenvalue with non-positive real part.
class StabilityError : public Error {
 public:
  using Error::Error;
};

/// Ill-conditioned or failed linear solve.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Singular conditioning block or zero residual variance.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// NaN or overflow during stochastic integration.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Nonparametric estimator cannot produce a value (duplicates, zero spread, rank deficiency).
class EstimatorError : public Error {
 public:
  using Error::Error;
};

/// The epsilon ladder does not behave quadratically.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace inforesp

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rpmeas {

// Parameter or precondition violation. `field` names the offending input.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// A trajectory left the finite region |x| <= 1e9 or produced NaN/Inf.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::int64_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

// Requested time lies outside the sampled noise window.
class WindowError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Time points that do not fall on the integration grid.
class GridError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical degeneracy in a density surrogate (singular covariance, zero bandwidth).
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rpmeas

#ifndef MEDSIM_ERROR_HPP_
#define MEDSIM_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace medsim {

// Argument outside the mathematical domain of a function (k >= 1, t_inc <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// The coil geometry puts a quadrature node on a singular point of the integrand.
class SingularGeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied malformed input (dimension mismatch, action out of range).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Method called in the wrong lifecycle state (step after done).
class LifecycleError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Non-finite loss or parameters during optimisation.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace medsim

#endif  // MEDSIM_ERROR_HPP_

#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace racbf {

/// Operand shapes do not agree (or a matrix is not square/symmetric when it must be).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A user-supplied parameter violates its documented range.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was invoked before its precondition was met.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite value produced during integration; carries the offending time.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double time)
      : std::runtime_error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// No point satisfies the constraint system handed to a QP.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what, std::vector<std::string> culprits = {})
      : std::runtime_error(what), culprits_(std::move(culprits)) {}
  const std::vector<std::string>& culprits() const noexcept { return culprits_; }

 private:
  std::vector<std::string> culprits_;
};

}  // namespace racbf

#pragma once

#include <stdexcept>
#include <string>

namespace uavcov {

/// Raised when a caller breaks an operation's precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Tensor or checkpoint dimensions disagree with what the consumer expects.
class ShapeMismatch : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

/// A loss, ratio or parameter went non-finite during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractViolation(what);
}

}  // namespace uavcov

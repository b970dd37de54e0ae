#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace smoothcal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Thrown when a caller violates a documented precondition (dimension
// mismatch, parameter out of range, point outside a domain).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a numerical procedure cannot deliver its contract.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace smoothcal

#pragma once

#include <stdexcept>
#include <string>

namespace mot3d {

/// Input violated a documented precondition (non-finite values, bad sizes).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor or container shapes are incompatible for an operation.
class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Too few correspondences survived to estimate a pose.
class PoseFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point configuration does not determine a similarity transform.
class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric was requested whose denominator is zero.
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or unsupported file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mot3d

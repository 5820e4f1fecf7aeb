#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace sbical {

// Sample matrices are [n x d] with one draw per row. Eigen's default
// column-major storage keeps each coordinate contiguous, which is the layout
// the KDE kernel consumes.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Requested capability the object does not have, e.g. a density from a
// sample-only surrogate.
class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A sampler gave up (rejection cap reached, degenerate observation).
class SamplingFailure : public Error {
 public:
  using Error::Error;
};

void require_dim(const char* what, Eigen::Index got, Eigen::Index expected);

}  // namespace sbical

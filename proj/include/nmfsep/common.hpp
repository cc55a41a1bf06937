#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmfsep {

using Complex = std::complex<double>;
using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using Signal = std::vector<double>;

/// Floor applied to NMF factors and MUR denominators.
inline constexpr double kEpsilon = 1e-12;

/// Selects between the OpenMP kernel and its serial reference.
///
/// Both paths compute identical values bit for bit; the serial path is kept
/// as the reference the parallel kernels are tested against.
enum class ExecPolicy { serial, parallel };

/// Base for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// A numerical procedure could not produce a valid result (NaN, collapse).
class NumericalError : public Error {
public:
  using Error::Error;
};

inline void require(bool condition, const std::string &message) {
  if (!condition) {
    throw InvalidArgument(message);
  }
}

bool all_finite(const RealMatrix &m);
bool all_finite(const ComplexMatrix &m);

} // namespace nmfsep

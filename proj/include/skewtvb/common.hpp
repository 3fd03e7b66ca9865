#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skewtvb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Degrees of freedom at or above this value are treated as infinite
/// (Gaussian mixing, Lambda fixed to identity).
inline constexpr double kInfiniteNu = 1e12;

inline bool is_infinite_nu(double nu) { return !(nu < kInfiniteNu); }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class DegenerateDimension : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class InfiniteVariance : public Error {
 public:
  using Error::Error;
};

class OracleInfeasible : public Error {
 public:
  using Error::Error;
};

class UnsupportedDimension : public Error {
 public:
  using Error::Error;
};

class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, int iteration)
      : Error(what + " (VB iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

class AccuracyError : public Error {
 public:
  AccuracyError(const std::string& what, double estimate, double error_estimate)
      : Error(what), estimate_(estimate), error_estimate_(error_estimate) {}
  double estimate() const { return estimate_; }
  double error_estimate() const { return error_estimate_; }

 private:
  double estimate_;
  double error_estimate_;
};

class ParticleDepletion : public Error {
 public:
  ParticleDepletion(const std::string& what, std::size_t n_particles)
      : Error(what), n_particles_(n_particles) {}
  std::size_t n_particles() const { return n_particles_; }

 private:
  std::size_t n_particles_;
};

}  // namespace skewtvb

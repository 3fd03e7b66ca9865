#pragma once

// Bayesian Cramer-Rao bounds for linear models with skew-t measurement noise.
// The noise enters only through the information core E and the spread
// Omega = R + Delta Delta^T: I(x) = C^T Omega^{-T/2} E Omega^{-1/2} C.

#include "skewtvb/common.hpp"
#include "skewtvb/skewt.hpp"
#include "skewtvb/ssm.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace skewtvb {

/// Information core for one univariate component, r ~ ST(0, 1 - theta^2,
/// theta, nu). Adaptive Gauss-Kronrod over r in [-200, 200]; throws
/// AccuracyError when the error estimate exceeds `tol`.
double fisher_univariate_E(double theta, double nu, double tol = 1e-8);

struct FisherEstimate {
  Matrix E;
  Matrix stderr_;  // elementwise Monte-Carlo standard error
};

/// Monte-Carlo information core of the normalized multivariate skew-t with
/// shape Theta (n <= 3, else UnsupportedDimension).
FisherEstimate fisher_mvst_E(const Matrix& Theta, double nu, std::uint64_t n_mc,
                             std::uint64_t seed);

struct FisherContext {
  Matrix Theta;
  Matrix Omega;
  Matrix Omega_sqrt;  // lower Cholesky factor
  Matrix L;
  double nu = 0.0;  // multivariate mode only; independent mode keeps per-component values
  Matrix E;
  Matrix E_stderr;
};

struct FisherOptions {
  double quad_tol = 1e-8;
  std::uint64_t n_mc = 20000;
  std::uint64_t seed = 0x5eed;
};

FisherContext fisher_context(const SkewTNoise& noise, const FisherOptions& opts = {});

/// C^T Omega^{-T/2} E Omega^{-1/2} C.
Matrix measurement_information(const Matrix& C, const FisherContext& ctx);

/// Omega^{1/2} E^-1 Omega^{T/2}: the Gaussian measurement covariance with the
/// same information.
Matrix effective_measurement_cov(const FisherContext& ctx);

enum class CrlbForm { Information, Kalman };

struct CrlbTrack {
  std::vector<Matrix> B_pred;
  std::vector<Matrix> B_filt;
  std::vector<Matrix> B_smooth;
  bool used_pseudo_inverse = false;
};

/// Filtering bounds for steps 0..K-1 starting from B_pred[0] = P0.
CrlbTrack crlb_filter_recursion(const StateSpaceModel& model, const FisherContext& ctx,
                                std::size_t K, CrlbForm form = CrlbForm::Information);

/// Backward recursion B_{k|K} = B_{k|k} + G_k (B_{k+1|K} - B_{k+1|k}) G_k^T.
std::vector<Matrix> crlb_smoother_recursion(std::span<const Matrix> B_filt,
                                            std::span<const Matrix> A, std::span<const Matrix> Q,
                                            bool* used_pseudo_inverse = nullptr);

}  // namespace skewtvb

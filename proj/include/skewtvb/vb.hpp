#pragma once

// Variational-Bayes skew-t filter and smoother. The state x and the skewness
// variable u share one joint Gaussian factor whose positivity constraint on u
// is handled by sequential truncation; the mixing precisions Lambda form the
// second factor.

#include "skewtvb/common.hpp"
#include "skewtvb/skewt.hpp"
#include "skewtvb/ssm.hpp"
#include "skewtvb/tmnd.hpp"
#include "skewtvb/track.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace skewtvb {

struct VBConfig {
  int max_iters = 5;
  /// Stop when the largest absolute change of the state mean between two
  /// successive iterations falls below this.
  double convergence_tol = 1e-6;
  /// Optimal or Random; Random seeds are re-derived per (step, iteration).
  TruncationOrdering ordering = ordering::Optimal{};

  void validate() const;
};

/// Stacked (x, u) posterior; state block first.
struct AugmentedBelief {
  Vector z;
  Matrix Z;

  GaussianBelief x_marginal(Index n_x) const;
  GaussianBelief u_marginal(Index n_x) const;
};

/// Expected mixing precisions: one per component (independent mode) or a
/// common value repeated n_y times (multivariate mode).
struct LambdaState {
  Vector diag;
};

/// Psi = (y - Cz z)(y - Cz z)^T R^-1 + Cz Z Cz^T R^-1 + u u^T + U with
/// Cz = [C Delta]. Throws InvalidParameter if R is singular.
Matrix psi_compute(const Vector& y, const Vector& z, const Matrix& Z, const Matrix& C,
                   const Matrix& Delta, const Matrix& R);

LambdaState lambda_update(const Matrix& psi, const SkewTNoise& noise);

struct VbStepResult {
  GaussianBelief posterior;
  AugmentedBelief joint;
  LambdaState lambda;
  int iterations = 0;
  bool converged = false;
  std::vector<double> mean_changes;
  int underflow_hits = 0;
};

/// Untruncated Kalman update of blockdiag(P, Lambda^-1) for z = (x, u); the
/// u components are marked for truncation.
TruncationProblem joint_truncation_problem(const GaussianBelief& prior, const Matrix& C,
                                           const SkewTNoise& noise, const Vector& y,
                                           const LambdaState& lambda);

/// Builds the truncated joint (x, u) update for a given Lambda: the Kalman
/// update of blockdiag(P, Lambda^-1) followed by sequential truncation of u.
AugmentedBelief joint_update(const GaussianBelief& prior, const Matrix& C, const SkewTNoise& noise,
                             const Vector& y, const LambdaState& lambda,
                             const TruncationOrdering& order, int* underflow_hits = nullptr,
                             int iteration = 0);

/// One filter measurement update. `y` is already in the linear model frame
/// (linearization offset removed); the noise location is removed here.
VbStepResult stf_step(const GaussianBelief& prior, const Matrix& C, const SkewTNoise& noise,
                      const Vector& y, const VBConfig& cfg, std::uint64_t step_tag = 0);

EstimateTrack stf_run(const StateSpaceModel& model, std::span<const Vector> ys,
                      const VBConfig& cfg);

EstimateTrack sts_run(const StateSpaceModel& model, std::span<const Vector> ys,
                      const VBConfig& cfg);

/// Gated Kalman filter and RTS smoother baselines using the noise mean and
/// variance as Gaussian moments (independent mode only).
EstimateTrack kf_gated_run(const StateSpaceModel& model, std::span<const Vector> ys,
                           double gate_quantile);
EstimateTrack rtss_gated_run(const StateSpaceModel& model, std::span<const Vector> ys,
                             double gate_quantile);

}  // namespace skewtvb

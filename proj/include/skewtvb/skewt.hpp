#pragma once

// Univariate skew-t and canonical fundamental multivariate skew-t (CFUST)
// densities, the multivariate-t CDF they need, and hierarchical samplers.

#include "skewtvb/common.hpp"
#include "skewtvb/rng.hpp"

#include <cstdint>
#include <limits>

namespace skewtvb {

/// ST(mu, sigma2, delta, nu). nu >= kInfiniteNu gives the skew-normal limit.
struct UnivariateSkewT {
  double mu = 0.0;
  double sigma2 = 1.0;
  double delta = 0.0;
  double nu = std::numeric_limits<double>::infinity();

  void validate() const;
};

struct MultivariateSkewT {
  Vector mu;
  Matrix R;
  Matrix Delta;
  double nu = std::numeric_limits<double>::infinity();

  Index dim() const { return mu.size(); }
  /// Checks R, Omega = R + Delta Delta^T and L = I - Delta^T Omega^-1 Delta
  /// are positive definite.
  void validate() const;
};

enum class NoiseMode { IndependentUnivariate, Multivariate };

/// Measurement noise e = location + Delta u + Lambda^{-1/2} eps with
/// eps ~ N(0, R), u | Lambda ~ N+(0, Lambda^{-1}).
/// Independent mode: R and Delta diagonal, one nu per component.
/// Multivariate mode: Lambda = lambda I with a single nu (stored in nu(0)).
struct SkewTNoise {
  NoiseMode mode = NoiseMode::IndependentUnivariate;
  Vector location;
  Matrix R;
  Matrix Delta;
  Vector nu;

  static SkewTNoise independent(const Vector& r_diag, const Vector& delta_diag, const Vector& nu,
                                const Vector& location = Vector());
  static SkewTNoise multivariate(const Matrix& R, const Matrix& Delta, double nu,
                                 const Vector& location = Vector());

  Index dim() const { return R.rows(); }
  void validate() const;
  UnivariateSkewT component(Index i) const;
  MultivariateSkewT joint() const;
};

/// Cached evaluator of log ST(z; mu, sigma2, delta, nu).
class SkewTLogDensity {
 public:
  explicit SkewTLogDensity(const UnivariateSkewT& d);
  double operator()(double z) const;

 private:
  UnivariateSkewT d_;
  bool gaussian_;
  double omega2_;
  double log_norm_;  // log 2 + log t normalizer at scale sqrt(omega2)
  double skew_scale_;
};

double st_logpdf(const UnivariateSkewT& d, double z);

/// Mean and variance of ST. Mean needs nu > 1, variance nu > 2
/// (InfiniteVariance otherwise).
double st_mean(const UnivariateSkewT& d);
double st_variance(const UnivariateSkewT& d);

/// gamma = sqrt(nu/pi) Gamma((nu-1)/2) / Gamma(nu/2), sqrt(2/pi) at nu = inf.
double skew_mean_factor(double nu);

/// Central multivariate-t CDF P(X <= upper), X ~ t_nu(0, L). Exact for n = 1,
/// nested Gauss-Legendre over the conditional decomposition for n = 2, 3, and
/// a fixed-seed 1e5-sample Monte-Carlo estimate above that.
double mvt_cdf(const Vector& upper, const Matrix& L, double nu);

/// Gradient of mvt_cdf with respect to `upper` (n <= 3).
Vector mvt_cdf_gradient(const Vector& upper, const Matrix& L, double nu);

struct McEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

McEstimate mvt_cdf_mc(const Vector& upper, const Matrix& L, double nu, std::uint64_t n_samples,
                      std::uint64_t seed);

/// Cached evaluator of log MVST(z; mu, R, Delta, nu).
class MvstLogDensity {
 public:
  explicit MvstLogDensity(const MultivariateSkewT& d);
  double operator()(const Vector& z) const;

 private:
  MultivariateSkewT d_;
  Matrix omega_chol_;
  Matrix skew_map_;  // Delta^T Omega^-1
  Matrix L_;
  double log_norm_;
};

double mvst_logpdf(const MultivariateSkewT& d, const Vector& z);

/// One noise vector from the hierarchy.
Vector draw_noise(const SkewTNoise& noise, Rng& rng);

/// n_y x k_steps matrix, one column per time step.
Matrix sample_noise(const SkewTNoise& noise, Index k_steps, std::uint64_t seed);

/// Zero-mean skew-t with variance omega2 and shape ratio delta_c = delta/sigma.
UnivariateSkewT zero_mean_reparam(double delta_c, double nu, double omega2);

}  // namespace skewtvb

#pragma once

// Bootstrap particle filter with systematic resampling.

#include "skewtvb/common.hpp"
#include "skewtvb/rng.hpp"
#include "skewtvb/skewt.hpp"
#include "skewtvb/ssm.hpp"
#include "skewtvb/track.hpp"

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace skewtvb {

struct ParticleCloud {
  Matrix states;  // n_p x n_x
  Vector log_weights;
  Rng rng;

  Index size() const { return states.rows(); }
  /// Normalized weights (sum to one).
  Vector weights() const;
  double ess() const;
  GaussianBelief moments() const;
};

/// Measurement log-likelihood shared with the skew-t density code.
class NoiseLogLikelihood {
 public:
  explicit NoiseLogLikelihood(const SkewTNoise& noise);
  double operator()(const Vector& residual) const;
  /// Adds the log-likelihood of each row of `residuals` to `log_w`.
  void accumulate(const Matrix& residuals, Vector& log_w) const;

 private:
  std::vector<SkewTLogDensity> components_;
  std::vector<MvstLogDensity> joint_;
};

ParticleCloud pf_init(const GaussianBelief& prior, Index n_particles, std::uint64_t seed);

void pf_predict(ParticleCloud& cloud, const Matrix& A, const Matrix& Q);

/// Reweights by p(y | x) and resamples systematically when ESS < n_p / 2.
/// Throws ParticleDepletion when every weight is zero. Returns the ESS before
/// any resampling; `posterior` receives the weighted moments before resampling.
double pf_update(ParticleCloud& cloud, const StateSpaceModel& model, std::size_t k,
                 const Vector& y, const NoiseLogLikelihood& loglik,
                 GaussianBelief* posterior = nullptr);

void systematic_resample(ParticleCloud& cloud);

/// Update at step k followed by the transition to k + 1.
double pf_step(ParticleCloud& cloud, const StateSpaceModel& model, std::size_t k, const Vector& y,
               const NoiseLogLikelihood& loglik);

EstimateTrack pf_run(const StateSpaceModel& model, std::span<const Vector> ys, Index n_particles,
                     std::uint64_t seed);

}  // namespace skewtvb

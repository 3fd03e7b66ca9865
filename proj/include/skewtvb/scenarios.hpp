#pragma once

// Simulation studies: synthetic pseudorange constellations, outlier
// injection, Monte-Carlo estimator comparisons with common random numbers,
// and the two-state model used for the bound study.

#include "skewtvb/common.hpp"
#include "skewtvb/rng.hpp"
#include "skewtvb/ssm.hpp"
#include "skewtvb/tmnd.hpp"
#include "skewtvb/track.hpp"
#include "skewtvb/vb.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace skewtvb {

constexpr double kSatelliteRange = 2.0e7;
constexpr std::uint64_t kPresetConstellationSeed = 2015;

/// 8 x 3 satellite positions around a receiver at the origin, elevation above
/// 10 degrees over the local z axis. Redraws until the geometry is well
/// conditioned, so the output is a deterministic function of the seed.
Matrix gen_constellation(std::uint64_t seed, Index n_sats = 8);
Matrix preset_constellation();

/// Geometric dilution of precision of the pseudorange geometry at the origin.
double gdop(const Matrix& sat_positions);

struct OutlierInjection {
  Vector e;
  Index index = 0;
};

/// e_j = min(min(e), 0) - c sqrt(1 + delta^2) at a uniformly drawn j.
OutlierInjection inject_negative_outlier(const Vector& e, double c, std::uint64_t seed,
                                         double delta = 20.0);

struct PseudorangeScenario {
  Matrix sat_positions;
  GaussianBelief prior;
  Matrix Q;
  SkewTNoise noise;
  std::size_t K = 1;

  StateSpaceModel model() const;
};

/// Random-walk tracking scenario: Q = diag(q^2, q^2, 0.2^2, 0), per-component
/// ST(0, 1, delta, nu) noise, prior diag(20^2, 20^2, 0.22^2, 0.75^2).
PseudorangeScenario tracking_scenario(double q, double delta, double nu, std::size_t K,
                                      const Matrix& sats);

/// One-epoch scenario with prior diag(20^2, 20^2, 0.22^2, 0.1^2) and
/// skew-normal noise ST(0, 1, delta, inf).
PseudorangeScenario single_epoch_scenario(double delta, const Matrix& sats);

/// Two-state constant-velocity model with zero-mean skew-t noise of variance
/// 25 and shape ratio delta_c; prior N(0, 100 I).
StateSpaceModel crlb_study_model(double delta_c, double nu);

struct SimulatedRun {
  std::vector<Vector> x;
  std::vector<Vector> y;
};

/// Draws x_0 from the prior, propagates the dynamics and measures k = 0..K-1.
SimulatedRun simulate(const StateSpaceModel& model, std::size_t K, std::uint64_t seed);

enum class EstimatorKind { STF, STS, KFGated, RTSSGated, PF };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& name);

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::STF;
  VBConfig vb;
  Index n_particles = 2000;
  double gate_quantile = 0.99;
  /// Report label; defaults to the kind name.
  std::string label;

  std::string name() const { return label.empty() ? to_string(kind) : label; }
};

/// Runs one estimator; `pf_seed` seeds the particle filter only.
EstimateTrack run_estimator(const EstimatorSpec& spec, const StateSpaceModel& model,
                            std::span<const Vector> ys, std::uint64_t pf_seed);

struct MetricReport {
  std::string estimator;
  std::size_t n_runs = 0;
  std::size_t n_failed = 0;
  /// Mean over runs of the per-run RMSE over the error block.
  double rmse = 0.0;
  double rmse_se = 0.0;
  /// Squared error of the error block at the final step, averaged over runs.
  double final_mse = 0.0;
  double final_mse_se = 0.0;
  double nees_mean = 0.0;
  /// NEES quantiles at 5, 25, 50, 75, 95 percent.
  std::vector<double> nees_quantiles;
  /// Per run; NaN for failed runs.
  std::vector<double> per_run_rmse;
  std::vector<double> per_run_final_sq_error;
  std::vector<std::uint64_t> run_seeds;
  std::vector<std::string> failures;
};

struct McStudy {
  StateSpaceModel model;
  std::size_t K = 1;
  /// Errors, RMSE and NEES use the leading `error_dims` state components.
  Index error_dims = 3;
};

/// Per-run seed for the truth/measurement draw; the particle filter gets its
/// own child stream so adding or reordering estimators changes nothing else.
std::uint64_t run_seed(std::uint64_t root, std::size_t run);
std::uint64_t pf_seed(std::uint64_t root, std::size_t run, EstimatorKind kind);

struct EstimatorResults {
  MetricReport report;
  /// Per run; empty when tracks were not kept or the run failed.
  std::vector<std::optional<EstimateTrack>> tracks;
};

/// Runs every estimator on every simulated run and scores it against the
/// truth. Results do not depend on `jobs`.
std::vector<EstimatorResults> evaluate_estimators(const StateSpaceModel& model, Index error_dims,
                                                  const std::vector<SimulatedRun>& runs,
                                                  const std::vector<EstimatorSpec>& estimators,
                                                  std::uint64_t seed, int jobs, bool keep_tracks);

/// Simulates run r from run_seed(seed, r) for r < n_runs.
std::vector<SimulatedRun> simulate_runs(const StateSpaceModel& model, std::size_t K,
                                        std::size_t n_runs, std::uint64_t seed, int jobs = 1);

std::vector<MetricReport> run_mc_study(const McStudy& study,
                                       const std::vector<EstimatorSpec>& estimators,
                                       std::size_t n_runs, std::uint64_t seed, int jobs = 1);

/// Calls body(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

/// Two-sided exact binomial sign test on paired differences (zeros dropped).
struct SignTest {
  std::size_t positive = 0;
  std::size_t negative = 0;
  double p_value = 1.0;
};
SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b);

struct OutlierCase {
  TruncationProblem problem;
  Vector truth;
  Index outlier_index = 0;
  Index n_x = 0;
};

/// Single-epoch measurement update problem with an injected negative outlier.
OutlierCase outlier_case(const PseudorangeScenario& scenario, double c, std::uint64_t seed);

struct OutlierComparison {
  double dist_topt = 0.0;
  double dist_trand = 0.0;
  /// Largest batch-means standard error of the oracle position mean.
  double oracle_se = 0.0;
};

/// Position distances of TOPT and TRAND posterior means to a Gibbs-sampling
/// oracle of the exact posterior mean.
OutlierComparison compare_orderings(const OutlierCase& c, std::uint64_t seed,
                                    std::uint64_t n_sweeps = 20000);

/// Random n-dimensional problem with every component truncated.
TruncationProblem random_truncation_problem(Index n, Rng& rng);

/// Empirical quantile with linear interpolation.
double quantile(std::vector<double> v, double p);

}  // namespace skewtvb

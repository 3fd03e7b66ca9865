#pragma once

// Moments of a multivariate normal truncated to the positive orthant on a
// subset of its components, approximated by sequential one-constraint
// truncation with greedy ordering.

#include "skewtvb/common.hpp"
#include "skewtvb/rng.hpp"

#include <cstdint>
#include <variant>
#include <vector>

namespace skewtvb {

struct TruncationProblem {
  Vector mu;
  Matrix sigma;
  /// Zero-based indices of the components constrained to be >= 0.
  std::vector<Index> truncated;

  /// Throws InvalidParameter on shape mismatch, asymmetric or clearly
  /// indefinite sigma, or bad/duplicate indices.
  void validate() const;
};

struct TruncationResult {
  Vector mu;
  Matrix sigma;
  std::vector<Index> order;
  int underflow_hits = 0;
};

/// Below this standardized location the CDF is treated as underflowed and the
/// asymptotic update is used.
inline constexpr double kTruncationUnderflowXi = -37.0;
/// Diagonal entries at or below this are degenerate.
inline constexpr double kDegenerateVariance = 1e-300;

namespace ordering {
/// Greedy choice: argmin mu_i / sqrt(sigma_ii), lowest index on ties.
struct Optimal {};
/// Uniformly random among the remaining non-optimal constraints (the greedy
/// choice is excluded while at least two remain).
struct Random {
  std::uint64_t seed = 0;
};
/// Caller-provided order; must be a permutation of the truncated set.
struct Fixed {
  std::vector<Index> sequence;
};
}  // namespace ordering

using TruncationOrdering = std::variant<ordering::Optimal, ordering::Random, ordering::Fixed>;

/// Index among `remaining` minimizing mu_i / sqrt(sigma_ii); ties go to the
/// lowest index.
Index greedy_choice(const Vector& mu, const Matrix& sigma, const std::vector<Index>& remaining);

/// Applies the single constraint z_k >= 0 by moment matching and removes k
/// from the truncated set. Set `used_limit` to learn whether the underflow
/// branch was taken.
TruncationProblem truncate_once(const TruncationProblem& problem, Index k,
                                bool* used_limit = nullptr);

TruncationResult rec_trunc(const TruncationProblem& problem,
                           const TruncationOrdering& order = ordering::Optimal{});

struct OracleMoments {
  Vector mean;
  Matrix cov;
  Vector mean_se;
  Matrix cov_se;
  double acceptance = 0.0;
  std::uint64_t proposals = 0;
};

/// Rejection-sampling estimate of the exact truncated moments from
/// `n_samples` accepted draws. Standard errors come from 50 batch means.
/// Throws OracleInfeasible when the acceptance rate is below 1e-6, or when
/// more than `max_proposals` draws are needed (0: n_samples / 1e-6).
OracleMoments tmnd_moments_oracle(const TruncationProblem& problem, std::uint64_t n_samples,
                                  std::uint64_t seed, std::uint64_t max_proposals = 0);

/// Gibbs-sampling estimate for problems where rejection is hopeless. `start`
/// must satisfy the constraints. Runs n_sweeps / 10 burn-in sweeps, then n_sweeps recorded sweeps;
/// standard errors from 50 batch means.
OracleMoments tmnd_moments_gibbs(const TruncationProblem& problem, const Vector& start,
                                 std::uint64_t n_sweeps, std::uint64_t seed);

/// Draw from N(mean, sd^2) restricted to [0, inf).
double draw_positive_normal(double mean, double sd, Rng& rng);

}  // namespace skewtvb

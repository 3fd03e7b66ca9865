#include "skewtvb/tmnd.hpp"

#include "skewtvb/linalg.hpp"
#include "skewtvb/rng.hpp"
#include "skewtvb/special.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace skewtvb {

void TruncationProblem::validate() const {
  const Index n = mu.size();
  if (sigma.rows() != n || sigma.cols() != n) {
    throw InvalidParameter("truncation problem: sigma must be " + std::to_string(n) + "x" +
                           std::to_string(n));
  }
  if (!mu.allFinite() || !sigma.allFinite()) {
    throw InvalidParameter("truncation problem: non-finite mu or sigma");
  }
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw InvalidParameter("truncation problem: sigma is not symmetric");
  }
  if (n > 0 && min_eigenvalue(sigma) < -1e-8 * std::max(1e-300, max_eigenvalue(sigma))) {
    throw InvalidParameter("truncation problem: sigma is not positive semidefinite");
  }
  std::set<Index> seen;
  for (Index k : truncated) {
    if (k < 0 || k >= n) {
      throw InvalidParameter("truncation problem: index " + std::to_string(k) + " out of range");
    }
    if (!seen.insert(k).second) {
      throw InvalidParameter("truncation problem: duplicate index " + std::to_string(k));
    }
  }
}

Index greedy_choice(const Vector& mu, const Matrix& sigma, const std::vector<Index>& remaining) {
  Index best = -1;
  double best_score = 0.0;
  for (Index i : remaining) {
    const double score = mu(i) / std::sqrt(sigma(i, i));
    if (best < 0 || score < best_score || (score == best_score && i < best)) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

TruncationProblem truncate_once(const TruncationProblem& problem, Index k, bool* used_limit) {
  auto it = std::find(problem.truncated.begin(), problem.truncated.end(), k);
  if (it == problem.truncated.end()) {
    throw InvalidParameter("truncate_once: index " + std::to_string(k) +
                           " is not in the truncated set");
  }
  const double s_kk = problem.sigma(k, k);
  if (!(s_kk > kDegenerateVariance)) {
    throw DegenerateDimension("truncate_once: variance of component " + std::to_string(k) +
                              " is not positive");
  }
  TruncationProblem out = problem;
  out.truncated.erase(out.truncated.begin() + (it - problem.truncated.begin()));

  const double sd = std::sqrt(s_kk);
  const double xi = problem.mu(k) / sd;
  double mean_gain = 0.0;
  double cov_gain = 0.0;
  if (xi >= kTruncationUnderflowXi) {
    const double eps = phi_over_Phi(xi);
    mean_gain = eps / sd;
    cov_gain = (xi * eps + eps * eps) / s_kk;
    if (used_limit) *used_limit = false;
  } else {
    mean_gain = -xi / sd;
    cov_gain = 1.0 / s_kk;
    if (used_limit) *used_limit = true;
  }
  const Vector col = problem.sigma.col(k);
  out.mu += mean_gain * col;
  out.sigma.noalias() -= cov_gain * (col * col.transpose());
  symmetrize(out.sigma);
  return out;
}

namespace {

struct OrderPicker {
  const TruncationOrdering& order;
  Rng rng;
  std::size_t fixed_pos = 0;

  explicit OrderPicker(const TruncationOrdering& o)
      : order(o), rng(std::holds_alternative<ordering::Random>(o)
                          ? std::get<ordering::Random>(o).seed
                          : 0) {}

  Index next(const Vector& mu, const Matrix& sigma, const std::vector<Index>& remaining) {
    if (std::holds_alternative<ordering::Optimal>(order)) {
      return greedy_choice(mu, sigma, remaining);
    }
    if (const auto* fixed = std::get_if<ordering::Fixed>(&order)) {
      if (fixed_pos >= fixed->sequence.size()) {
        throw InvalidParameter("rec_trunc: fixed ordering shorter than the truncated set");
      }
      const Index k = fixed->sequence[fixed_pos++];
      if (std::find(remaining.begin(), remaining.end(), k) == remaining.end()) {
        throw InvalidParameter("rec_trunc: fixed ordering is not a permutation of the truncated set");
      }
      return k;
    }
    if (remaining.size() == 1) return remaining.front();
    const Index best = greedy_choice(mu, sigma, remaining);
    std::vector<Index> others;
    others.reserve(remaining.size() - 1);
    for (Index i : remaining) {
      if (i != best) others.push_back(i);
    }
    std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
    return others[pick(rng)];
  }
};

}  // namespace

TruncationResult rec_trunc(const TruncationProblem& problem, const TruncationOrdering& order) {
  problem.validate();
  if (const auto* fixed = std::get_if<ordering::Fixed>(&order)) {
    if (fixed->sequence.size() != problem.truncated.size()) {
      throw InvalidParameter("rec_trunc: fixed ordering length differs from the truncated set");
    }
  }
  TruncationProblem current = problem;
  symmetrize(current.sigma);
  TruncationResult result;
  result.order.reserve(problem.truncated.size());
  OrderPicker picker(order);
  while (!current.truncated.empty()) {
    const Index k = picker.next(current.mu, current.sigma, current.truncated);
    bool limit = false;
    current = truncate_once(current, k, &limit);
    if (limit) ++result.underflow_hits;
    result.order.push_back(k);
  }
  result.mu = std::move(current.mu);
  result.sigma = std::move(current.sigma);
  return result;
}

namespace {

Matrix covariance_factor(const Matrix& sigma) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  const Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

}  // namespace

OracleMoments tmnd_moments_oracle(const TruncationProblem& problem, std::uint64_t n_samples,
                                  std::uint64_t seed, std::uint64_t proposal_budget) {
  problem.validate();
  constexpr std::uint64_t kBatches = 50;
  constexpr double kMinAcceptance = 1e-6;
  constexpr std::uint64_t kPilot = 1000000;
  if (n_samples < 2 * kBatches) {
    throw InvalidParameter("tmnd_moments_oracle: need at least 100 samples");
  }
  const Index n = problem.mu.size();
  const Matrix factor = covariance_factor(symmetrized(problem.sigma));
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::uint64_t per_batch = n_samples / kBatches;
  const auto max_proposals =
      proposal_budget > 0 ? proposal_budget
                          : static_cast<std::uint64_t>(std::max<double>(
                                kPilot, static_cast<double>(n_samples) / kMinAcceptance));

  std::vector<Vector> batch_means;
  std::vector<Matrix> batch_covs;
  Vector z(n);
  Vector x(n);
  std::uint64_t proposals = 0;
  std::uint64_t accepted_total = 0;
  for (std::uint64_t b = 0; b < kBatches; ++b) {
    Vector mean = Vector::Zero(n);
    Matrix m2 = Matrix::Zero(n, n);
    std::uint64_t count = 0;
    while (count < per_batch) {
      for (Index i = 0; i < n; ++i) z(i) = normal(rng);
      x.noalias() = problem.mu + factor * z;
      ++proposals;
      if (proposals == kPilot &&
          static_cast<double>(accepted_total) / static_cast<double>(proposals) < kMinAcceptance) {
        throw OracleInfeasible("tmnd_moments_oracle: orthant acceptance rate below 1e-6");
      }
      if (proposals > max_proposals) {
        throw OracleInfeasible("tmnd_moments_oracle: proposal budget exhausted");
      }
      bool inside = true;
      for (Index k : problem.truncated) {
        if (x(k) < 0.0) {
          inside = false;
          break;
        }
      }
      if (!inside) continue;
      ++count;
      ++accepted_total;
      const Vector delta = x - mean;
      mean += delta / static_cast<double>(count);
      m2.noalias() += delta * (x - mean).transpose();
    }
    batch_means.push_back(mean);
    batch_covs.push_back(m2 / static_cast<double>(count - 1));
  }

  OracleMoments out;
  out.mean = Vector::Zero(n);
  out.cov = Matrix::Zero(n, n);
  for (std::uint64_t b = 0; b < kBatches; ++b) {
    out.mean += batch_means[b];
    out.cov += batch_covs[b];
  }
  out.mean /= static_cast<double>(kBatches);
  out.cov /= static_cast<double>(kBatches);
  Vector mean_var = Vector::Zero(n);
  Matrix cov_var = Matrix::Zero(n, n);
  for (std::uint64_t b = 0; b < kBatches; ++b) {
    mean_var += (batch_means[b] - out.mean).cwiseAbs2();
    cov_var += (batch_covs[b] - out.cov).cwiseAbs2();
  }
  const double denom = static_cast<double>(kBatches) * static_cast<double>(kBatches - 1);
  out.mean_se = (mean_var / denom).cwiseSqrt();
  out.cov_se = (cov_var / denom).cwiseSqrt();
  out.acceptance = static_cast<double>(accepted_total) / static_cast<double>(proposals);
  out.proposals = proposals;
  symmetrize(out.cov);
  return out;
}

double draw_positive_normal(double mean, double sd, Rng& rng) {
  const double a = -mean / sd;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (a < 0.45) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
      const double z = normal(rng);
      if (z >= a) return mean + sd * z;
    }
  }
  // Exponential proposal for the far tail (Robert 1995).
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  std::exponential_distribution<double> expo(alpha);
  for (;;) {
    const double z = a + expo(rng);
    if (unif(rng) <= std::exp(-0.5 * (z - alpha) * (z - alpha))) return mean + sd * z;
  }
}

OracleMoments tmnd_moments_gibbs(const TruncationProblem& problem, const Vector& start,
                                 std::uint64_t n_sweeps, std::uint64_t seed) {
  problem.validate();
  constexpr std::uint64_t kBatches = 50;
  if (n_sweeps < 2 * kBatches) {
    throw InvalidParameter("tmnd_moments_gibbs: need at least 100 sweeps");
  }
  const Index n = problem.mu.size();
  if (start.size() != n) throw InvalidParameter("tmnd_moments_gibbs: start has the wrong size");
  std::vector<bool> constrained(static_cast<std::size_t>(n), false);
  for (Index k : problem.truncated) {
    constrained[static_cast<std::size_t>(k)] = true;
    if (!(start(k) >= 0.0)) throw InvalidParameter("tmnd_moments_gibbs: start violates a bound");
  }
  Eigen::LLT<Matrix> llt(symmetrized(problem.sigma));
  if (llt.info() != Eigen::Success) {
    throw InvalidParameter("tmnd_moments_gibbs: sigma must be positive definite");
  }
  const Matrix precision = llt.solve(Matrix::Identity(n, n));
  Vector cond_sd(n);
  for (Index i = 0; i < n; ++i) cond_sd(i) = 1.0 / std::sqrt(precision(i, i));

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x = start;
  Vector d = x - problem.mu;
  auto sweep = [&] {
    for (Index i = 0; i < n; ++i) {
      const double shift = (precision.row(i).dot(d) - precision(i, i) * d(i)) / precision(i, i);
      const double m = problem.mu(i) - shift;
      x(i) = constrained[static_cast<std::size_t>(i)] ? draw_positive_normal(m, cond_sd(i), rng)
                                                      : m + cond_sd(i) * normal(rng);
      d(i) = x(i) - problem.mu(i);
    }
  };
  for (std::uint64_t s = 0; s < n_sweeps / 10; ++s) sweep();

  const std::uint64_t per_batch = n_sweeps / kBatches;
  std::vector<Vector> batch_means;
  std::vector<Matrix> batch_covs;
  for (std::uint64_t b = 0; b < kBatches; ++b) {
    Vector mean = Vector::Zero(n);
    Matrix m2 = Matrix::Zero(n, n);
    for (std::uint64_t c = 1; c <= per_batch; ++c) {
      sweep();
      const Vector delta = x - mean;
      mean += delta / static_cast<double>(c);
      m2.noalias() += delta * (x - mean).transpose();
    }
    batch_means.push_back(mean);
    batch_covs.push_back(m2 / static_cast<double>(per_batch - 1));
  }
  OracleMoments out;
  out.mean = Vector::Zero(n);
  out.cov = Matrix::Zero(n, n);
  for (std::uint64_t b = 0; b < kBatches; ++b) {
    out.mean += batch_means[b];
    out.cov += batch_covs[b];
  }
  out.mean /= static_cast<double>(kBatches);
  out.cov /= static_cast<double>(kBatches);
  Vector mean_var = Vector::Zero(n);
  Matrix cov_var = Matrix::Zero(n, n);
  for (std::uint64_t b = 0; b < kBatches; ++b) {
    mean_var += (batch_means[b] - out.mean).cwiseAbs2();
    cov_var += (batch_covs[b] - out.cov).cwiseAbs2();
  }
  const double denom = static_cast<double>(kBatches) * static_cast<double>(kBatches - 1);
  out.mean_se = (mean_var / denom).cwiseSqrt();
  out.cov_se = (cov_var / denom).cwiseSqrt();
  out.acceptance = 1.0;
  out.proposals = per_batch * kBatches;
  symmetrize(out.cov);
  return out;
}

}  // namespace skewtvb

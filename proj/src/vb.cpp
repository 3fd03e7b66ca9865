#include "skewtvb/vb.hpp"

#include "skewtvb/linalg.hpp"
#include "skewtvb/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace skewtvb {

void VBConfig::validate() const {
  if (max_iters < 1) throw InvalidParameter("VBConfig: max_iters must be at least 1");
  if (!(convergence_tol >= 0.0)) throw InvalidParameter("VBConfig: convergence_tol must be >= 0");
  if (std::holds_alternative<ordering::Fixed>(ordering)) {
    throw InvalidParameter("VBConfig: ordering must be optimal or random");
  }
}

GaussianBelief AugmentedBelief::x_marginal(Index n_x) const {
  return {z.head(n_x), Z.topLeftCorner(n_x, n_x)};
}

GaussianBelief AugmentedBelief::u_marginal(Index n_x) const {
  const Index n_y = z.size() - n_x;
  return {z.tail(n_y), Z.bottomRightCorner(n_y, n_y)};
}

Matrix psi_compute(const Vector& y, const Vector& z, const Matrix& Z, const Matrix& C,
                   const Matrix& Delta, const Matrix& R) {
  const Index n_x = C.cols();
  const Index n_y = C.rows();
  Matrix Cz(n_y, n_x + n_y);
  Cz << C, Delta;
  Eigen::LLT<Matrix> llt(symmetrized(R));
  if (llt.info() != Eigen::Success) throw InvalidParameter("psi_compute: R is not invertible");
  const Matrix R_inv = llt.solve(Matrix::Identity(n_y, n_y));
  const Vector resid = y - Cz * z;
  const Vector u = z.tail(n_y);
  return (resid * resid.transpose() + Cz * Z * Cz.transpose()) * R_inv + u * u.transpose() +
         Z.bottomRightCorner(n_y, n_y);
}

LambdaState lambda_update(const Matrix& psi, const SkewTNoise& noise) {
  const Index n_y = psi.rows();
  LambdaState out;
  out.diag.resize(n_y);
  if (noise.mode == NoiseMode::IndependentUnivariate) {
    for (Index i = 0; i < n_y; ++i) {
      const double nu = noise.nu(i);
      out.diag(i) = is_infinite_nu(nu) ? 1.0 : (nu + 2.0) / (nu + psi(i, i));
    }
    return out;
  }
  const double nu = noise.nu(0);
  const double lambda = is_infinite_nu(nu) ? 1.0
                                           : (nu + 2.0 * static_cast<double>(n_y)) /
                                                 (nu + psi.trace());
  out.diag.setConstant(lambda);
  return out;
}

namespace {

TruncationOrdering ordering_for(const TruncationOrdering& base, std::uint64_t step,
                                int iteration) {
  if (const auto* r = std::get_if<ordering::Random>(&base)) {
    return ordering::Random{
        derive_seed(r->seed, {step, static_cast<std::uint64_t>(iteration)})};
  }
  return base;
}

bool all_gaussian_mixing(const SkewTNoise& noise) {
  for (Index i = 0; i < noise.nu.size(); ++i) {
    if (!is_infinite_nu(noise.nu(i))) return false;
  }
  return true;
}

void check_finite(const AugmentedBelief& b, int iteration) {
  if (!b.z.allFinite() || !b.Z.allFinite()) {
    throw NumericFailure("non-finite joint posterior", iteration);
  }
  const double scale = std::max(1.0, b.Z.diagonal().cwiseAbs().maxCoeff());
  if (b.Z.diagonal().minCoeff() < -1e-9 * scale) {
    throw NumericFailure("joint posterior covariance lost positive semidefiniteness", iteration);
  }
}

}  // namespace

TruncationProblem joint_truncation_problem(const GaussianBelief& prior, const Matrix& C,
                                           const SkewTNoise& noise, const Vector& y,
                                           const LambdaState& lambda) {
  const Index n_x = prior.mean.size();
  const Index n_y = C.rows();
  const Matrix& Delta = noise.Delta;
  const Vector lambda_inv = lambda.diag.cwiseInverse();

  Matrix Cz(n_y, n_x + n_y);
  Cz << C, Delta;
  const Matrix Z_pred = block_diag(prior.cov, Matrix(lambda_inv.asDiagonal()));
  const Matrix PCt = prior.cov * C.transpose();
  Matrix S = C * PCt + Delta * lambda_inv.asDiagonal() * Delta.transpose() +
             lambda_inv.asDiagonal() * noise.R;
  symmetrize(S);
  const Matrix ZCzt = Z_pred * Cz.transpose();
  const Matrix K = spd_right_solve(ZCzt, S);

  TruncationProblem problem;
  problem.mu = Vector::Zero(n_x + n_y);
  problem.mu.head(n_x) = prior.mean;
  problem.mu += K * (y - C * prior.mean);
  problem.sigma = Z_pred - K * ZCzt.transpose();
  symmetrize(problem.sigma);
  problem.truncated.resize(static_cast<std::size_t>(n_y));
  for (Index i = 0; i < n_y; ++i) problem.truncated[static_cast<std::size_t>(i)] = n_x + i;
  return problem;
}

AugmentedBelief joint_update(const GaussianBelief& prior, const Matrix& C, const SkewTNoise& noise,
                             const Vector& y, const LambdaState& lambda,
                             const TruncationOrdering& order, int* underflow_hits,
                             int iteration) {
  const TruncationProblem problem = joint_truncation_problem(prior, C, noise, y, lambda);
  check_finite(AugmentedBelief{problem.mu, problem.sigma}, iteration);

  TruncationResult trunc;
  try {
    trunc = rec_trunc(problem, order);
  } catch (const DegenerateDimension& e) {
    throw NumericFailure(e.what(), iteration);
  } catch (const InvalidParameter& e) {
    throw NumericFailure(e.what(), iteration);
  }
  if (underflow_hits) *underflow_hits += trunc.underflow_hits;
  AugmentedBelief out{std::move(trunc.mu), std::move(trunc.sigma)};
  check_finite(out, iteration);
  return out;
}

VbStepResult stf_step(const GaussianBelief& prior, const Matrix& C, const SkewTNoise& noise,
                      const Vector& y, const VBConfig& cfg, std::uint64_t step_tag) {
  cfg.validate();
  const Index n_x = prior.mean.size();
  const Index n_y = C.rows();
  if (C.cols() != n_x || y.size() != n_y || noise.dim() != n_y) {
    throw InvalidParameter("stf_step: inconsistent dimensions");
  }
  const Vector y_c = y - noise.location;
  const bool fixed_lambda = all_gaussian_mixing(noise);

  VbStepResult out;
  out.lambda.diag = Vector::Ones(n_y);
  Vector x_prev = prior.mean;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    out.joint = joint_update(prior, C, noise, y_c, out.lambda, ordering_for(cfg.ordering, step_tag, it),
                             &out.underflow_hits, it);
    out.iterations = it;
    const Matrix psi = psi_compute(y_c, out.joint.z, out.joint.Z, C, noise.Delta, noise.R);
    out.lambda = lambda_update(psi, noise);
    const Vector x_new = out.joint.z.head(n_x);
    const double change = (x_new - x_prev).cwiseAbs().maxCoeff();
    x_prev = x_new;
    if (it > 1) out.mean_changes.push_back(change);
    if (fixed_lambda || (it > 1 && change < cfg.convergence_tol)) {
      out.converged = true;
      break;
    }
  }
  out.posterior = out.joint.x_marginal(n_x);
  return out;
}

EstimateTrack stf_run(const StateSpaceModel& model, std::span<const Vector> ys,
                      const VBConfig& cfg) {
  model.validate();
  EstimateTrack track;
  GaussianBelief pred = model.prior();
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const LinearizedMeasurement lin = model.measurement_at(k, pred.mean);
    const VbStepResult step = stf_step(pred, lin.C, model.noise, lin.shifted(ys[k]), cfg, k);
    track.mean.push_back(step.posterior.mean);
    track.cov.push_back(step.posterior.cov);
    StepDiagnostics d;
    d.vb_iterations = step.iterations;
    d.lambda = step.lambda.diag;
    d.underflow_hits = step.underflow_hits;
    track.diagnostics.push_back(std::move(d));
    pred = kf_predict(step.posterior, model.A_at(k), model.Q_at(k));
  }
  return track;
}

EstimateTrack sts_run(const StateSpaceModel& model, std::span<const Vector> ys,
                      const VBConfig& cfg) {
  model.validate();
  cfg.validate();
  const std::size_t K = ys.size();
  EstimateTrack track;
  if (K == 0) return track;
  const Index n_x = model.state_dim();
  const Index n_y = model.meas_dim();
  const SkewTNoise& noise = model.noise;
  const bool fixed_lambda = all_gaussian_mixing(noise);

  std::vector<LambdaState> lambdas(K, LambdaState{Vector::Ones(n_y)});
  std::vector<LinearizedMeasurement> lins(K);
  std::vector<Vector> y_c(K);
  std::vector<AugmentedBelief> smoothed;
  std::vector<Vector> x_prev;
  std::vector<int> underflow(K, 0);

  Matrix Az = Matrix::Zero(n_x + n_y, n_x + n_y);
  int g = 1;
  for (; g <= cfg.max_iters; ++g) {
    // Forward pass over the augmented state.
    std::vector<GaussianBelief> filtered(K);
    std::vector<Matrix> As(K > 0 ? K - 1 : 0);
    std::vector<Matrix> Qs(K > 0 ? K - 1 : 0);
    GaussianBelief pred = model.prior();
    for (std::size_t k = 0; k < K; ++k) {
      if (g == 1) {
        lins[k] = model.measurement_at(k, pred.mean);
        y_c[k] = lins[k].shifted(ys[k]) - noise.location;
      }
      const AugmentedBelief joint =
          joint_update(pred, lins[k].C, noise, y_c[k], lambdas[k],
                       ordering_for(cfg.ordering, k, g), &underflow[k], g);
      filtered[k] = GaussianBelief{joint.z, joint.Z};
      const GaussianBelief x_filt = joint.x_marginal(n_x);
      if (k + 1 < K) {
        Az.topLeftCorner(n_x, n_x) = model.A_at(k);
        As[k] = Az;
        Qs[k] = block_diag(model.Q_at(k), Matrix(lambdas[k + 1].diag.cwiseInverse().asDiagonal()));
        pred = kf_predict(x_filt, model.A_at(k), model.Q_at(k));
      }
    }
    SmootherResult back = rtss_backward(filtered, As, Qs);

    smoothed.clear();
    double change = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      AugmentedBelief s{back.smoothed[k].mean, back.smoothed[k].cov};
      const Matrix psi = psi_compute(y_c[k], s.z, s.Z, lins[k].C, noise.Delta, noise.R);
      lambdas[k] = lambda_update(psi, noise);
      if (!x_prev.empty()) {
        change = std::max(change, (s.z.head(n_x) - x_prev[k]).cwiseAbs().maxCoeff());
      }
      smoothed.push_back(std::move(s));
    }
    x_prev.resize(K);
    for (std::size_t k = 0; k < K; ++k) x_prev[k] = smoothed[k].z.head(n_x);
    if (g > 1) track.iteration_changes.push_back(change);
    if (fixed_lambda || (g > 1 && change < cfg.convergence_tol)) break;
  }
  track.global_iterations = std::min(g, cfg.max_iters);
  for (std::size_t k = 0; k < K; ++k) {
    const GaussianBelief x = smoothed[k].x_marginal(n_x);
    track.mean.push_back(x.mean);
    track.cov.push_back(x.cov);
    StepDiagnostics d;
    d.vb_iterations = *track.global_iterations;
    d.lambda = lambdas[k].diag;
    d.underflow_hits = underflow[k];
    track.diagnostics.push_back(std::move(d));
  }
  return track;
}

namespace {

struct GaussianMoments {
  Vector mean;
  Matrix R;
};

GaussianMoments noise_moments(const SkewTNoise& noise) {
  if (noise.mode != NoiseMode::IndependentUnivariate) {
    throw InvalidParameter("gated Kalman baseline requires independent noise components");
  }
  const Index n = noise.dim();
  GaussianMoments m{Vector(n), Matrix::Zero(n, n)};
  for (Index i = 0; i < n; ++i) {
    const UnivariateSkewT c = noise.component(i);
    m.mean(i) = st_mean(c);
    m.R(i, i) = st_variance(c);
  }
  return m;
}

std::vector<GaussianBelief> kf_gated_forward(const StateSpaceModel& model,
                                             std::span<const Vector> ys, double gate_quantile,
                                             EstimateTrack& track) {
  model.validate();
  const GaussianMoments moments = noise_moments(model.noise);
  std::vector<GaussianBelief> filtered;
  GaussianBelief pred = model.prior();
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const LinearizedMeasurement lin = model.measurement_at(k, pred.mean);
    const GatedUpdate upd =
        kf_update_gated(pred, lin.C, moments.R, lin.shifted(ys[k]) - moments.mean, gate_quantile);
    filtered.push_back(upd.belief);
    StepDiagnostics d;
    d.rejected_components = static_cast<int>(upd.rejected.size());
    track.diagnostics.push_back(std::move(d));
    pred = kf_predict(upd.belief, model.A_at(k), model.Q_at(k));
  }
  return filtered;
}

}  // namespace

EstimateTrack kf_gated_run(const StateSpaceModel& model, std::span<const Vector> ys,
                           double gate_quantile) {
  EstimateTrack track;
  for (GaussianBelief& b : kf_gated_forward(model, ys, gate_quantile, track)) {
    track.mean.push_back(std::move(b.mean));
    track.cov.push_back(std::move(b.cov));
  }
  return track;
}

EstimateTrack rtss_gated_run(const StateSpaceModel& model, std::span<const Vector> ys,
                             double gate_quantile) {
  EstimateTrack track;
  const std::vector<GaussianBelief> filtered = kf_gated_forward(model, ys, gate_quantile, track);
  std::vector<Matrix> As;
  std::vector<Matrix> Qs;
  for (std::size_t k = 0; k + 1 < filtered.size(); ++k) {
    As.push_back(model.A_at(k));
    Qs.push_back(model.Q_at(k));
  }
  SmootherResult back = rtss_backward(filtered, As, Qs);
  for (GaussianBelief& b : back.smoothed) {
    track.mean.push_back(std::move(b.mean));
    track.cov.push_back(std::move(b.cov));
  }
  return track;
}

}  // namespace skewtvb

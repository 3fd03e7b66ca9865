#include "skewtvb/pf.hpp"

#include "skewtvb/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace skewtvb {

namespace {

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).unaryExpr([](double t) { return std::exp(t); }).sum());
}

}  // namespace

Vector ParticleCloud::weights() const {
  const double lse = log_sum_exp(log_weights);
  return (log_weights.array() - lse).unaryExpr([](double t) { return std::exp(t); }).matrix();
}

double ParticleCloud::ess() const {
  const Vector w = weights();
  return 1.0 / w.squaredNorm();
}

GaussianBelief ParticleCloud::moments() const {
  const Vector w = weights();
  GaussianBelief b;
  b.mean = states.transpose() * w;
  const Matrix centered = states.rowwise() - b.mean.transpose();
  b.cov = centered.transpose() * w.asDiagonal() * centered;
  b.cov = 0.5 * (b.cov + b.cov.transpose());
  return b;
}

NoiseLogLikelihood::NoiseLogLikelihood(const SkewTNoise& noise) {
  noise.validate();
  if (noise.mode == NoiseMode::IndependentUnivariate) {
    for (Index i = 0; i < noise.dim(); ++i) components_.emplace_back(noise.component(i));
  } else {
    joint_.emplace_back(noise.joint());
  }
}

double NoiseLogLikelihood::operator()(const Vector& residual) const {
  if (!joint_.empty()) return joint_.front()(residual);
  double s = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    s += components_[i](residual(static_cast<Index>(i)));
  }
  return s;
}

void NoiseLogLikelihood::accumulate(const Matrix& residuals, Vector& log_w) const {
  if (!joint_.empty()) {
    for (Index p = 0; p < residuals.rows(); ++p) {
      log_w(p) += joint_.front()(residuals.row(p).transpose());
    }
    return;
  }
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const SkewTLogDensity& f = components_[i];
    const auto col = residuals.col(static_cast<Index>(i));
    for (Index p = 0; p < residuals.rows(); ++p) log_w(p) += f(col(p));
  }
}

ParticleCloud pf_init(const GaussianBelief& prior, Index n_particles, std::uint64_t seed) {
  if (n_particles < 1) throw InvalidParameter("pf_init: need at least one particle");
  ParticleCloud cloud{Matrix(n_particles, prior.mean.size()), Vector::Zero(n_particles),
                      Rng(seed)};
  const Matrix S = psd_factor(prior.cov);
  for (Index p = 0; p < n_particles; ++p) {
    cloud.states.row(p) =
        (prior.mean + S * standard_normal_vector(prior.mean.size(), cloud.rng)).transpose();
  }
  return cloud;
}

void pf_predict(ParticleCloud& cloud, const Matrix& A, const Matrix& Q) {
  const Matrix S = psd_factor(Q);
  const Index n_x = A.rows();
  Matrix noise(cloud.size(), n_x);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index p = 0; p < cloud.size(); ++p) {
    for (Index j = 0; j < n_x; ++j) noise(p, j) = normal(cloud.rng);
  }
  cloud.states = cloud.states * A.transpose() + noise * S.transpose();
}

void systematic_resample(ParticleCloud& cloud) {
  const Index n = cloud.size();
  const Vector w = cloud.weights();
  std::uniform_real_distribution<double> unif(0.0, 1.0 / static_cast<double>(n));
  double u = unif(cloud.rng);
  Matrix out(n, cloud.states.cols());
  double cum = w(0);
  Index i = 0;
  for (Index p = 0; p < n; ++p) {
    while (u > cum && i + 1 < n) cum += w(++i);
    out.row(p) = cloud.states.row(i);
    u += 1.0 / static_cast<double>(n);
  }
  cloud.states = std::move(out);
  cloud.log_weights.setZero();
}

double pf_update(ParticleCloud& cloud, const StateSpaceModel& model, std::size_t k,
                 const Vector& y, const NoiseLogLikelihood& loglik,
                 GaussianBelief* posterior) {
  const Index n = cloud.size();
  Matrix residuals;
  if (model.measurement) {
    residuals = model.measurement->evaluate_rows(k, cloud.states);
  } else {
    residuals = cloud.states * (k < model.C_steps.size() ? model.C_steps[k] : model.C).transpose();
  }
  residuals = (-residuals).rowwise() + y.transpose();
  loglik.accumulate(residuals, cloud.log_weights);
  if (!std::isfinite(cloud.log_weights.maxCoeff())) {
    throw ParticleDepletion("pf_update: all particle weights vanished at step " + std::to_string(k),
                            static_cast<std::size_t>(n));
  }
  cloud.log_weights.array() -= log_sum_exp(cloud.log_weights);
  const double ess = cloud.ess();
  if (posterior) *posterior = cloud.moments();
  if (ess < 0.5 * static_cast<double>(n)) systematic_resample(cloud);
  return ess;
}

double pf_step(ParticleCloud& cloud, const StateSpaceModel& model, std::size_t k, const Vector& y,
               const NoiseLogLikelihood& loglik) {
  const double ess = pf_update(cloud, model, k, y, loglik);
  pf_predict(cloud, model.A_at(k), model.Q_at(k));
  return ess;
}

EstimateTrack pf_run(const StateSpaceModel& model, std::span<const Vector> ys, Index n_particles,
                     std::uint64_t seed) {
  model.validate();
  const NoiseLogLikelihood loglik(model.noise);
  ParticleCloud cloud = pf_init(model.prior(), n_particles, seed);
  EstimateTrack track;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    GaussianBelief b;
    const double ess = pf_update(cloud, model, k, ys[k], loglik, &b);
    track.mean.push_back(std::move(b.mean));
    track.cov.push_back(std::move(b.cov));
    StepDiagnostics d;
    d.ess = ess;
    track.diagnostics.push_back(std::move(d));
    if (k + 1 < ys.size()) pf_predict(cloud, model.A_at(k), model.Q_at(k));
  }
  return track;
}

}  // namespace skewtvb

#include "doctest.h"

#include "skewtvb/pf.hpp"
#include "skewtvb/scenarios.hpp"

#include <cmath>
#include <limits>

using namespace skewtvb;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

StateSpaceModel scalar_model(double q, double r, double delta, double nu) {
  StateSpaceModel m;
  m.A = Matrix::Constant(1, 1, 0.9);
  m.Q = Matrix::Constant(1, 1, q);
  m.C = Matrix::Ones(1, 1);
  m.noise = SkewTNoise::independent(Vector::Constant(1, r), Vector::Constant(1, delta), Vector::Constant(1, nu));
  m.x0 = Vector::Zero(1);
  m.P0 = Matrix::Constant(1, 1, 4.0);
  return m;
}

}  // namespace

TEST_CASE("flat likelihood and no process noise keep the cloud") {
  StateSpaceModel m = scalar_model(0.0, 1e14, 0.0, kInf);
  m.A = Matrix::Ones(1, 1);
  ParticleCloud cloud = pf_init(m.prior(), 5000, 3);
  const Matrix start = cloud.states;
  const NoiseLogLikelihood loglik(m.noise);
  for (std::size_t k = 0; k < 5; ++k) {
    const double ess = pf_step(cloud, m, k, Vector::Constant(1, 0.3), loglik);
    CHECK(ess == doctest::Approx(5000.0).epsilon(1e-6));
  }
  CHECK((cloud.states - start).norm() == 0.0);
  const GaussianBelief b = cloud.moments();
  CHECK(b.mean(0) == doctest::Approx(start.col(0).mean()).epsilon(1e-12));
}

TEST_CASE("linear-Gaussian model agrees with the Kalman filter") {
  const StateSpaceModel m = scalar_model(0.5, 1.0, 0.0, kInf);
  const SimulatedRun sim = simulate(m, 6, 9);
  const EstimateTrack pf = pf_run(m, sim.y, 100000, 12);
  GaussianBelief b = m.prior();
  for (std::size_t k = 0; k < sim.y.size(); ++k) {
    if (k > 0) b = kf_predict(b, m.A, m.Q);
    b = kf_update(b, m.C, m.noise.R, sim.y[k]);
    const double se = std::sqrt(b.cov(0, 0) / *pf.diagnostics[k].ess);
    CAPTURE(k);
    CHECK(std::abs(pf.mean[k](0) - b.mean(0)) < 3.0 * se);
    CHECK(pf.cov[k](0, 0) == doctest::Approx(b.cov(0, 0)).epsilon(0.03));
  }
}

TEST_CASE("fixed seed reproduces the run") {
  const StateSpaceModel m = scalar_model(0.5, 1.0, 3.0, 4.0);
  const SimulatedRun sim = simulate(m, 20, 1);
  const EstimateTrack a = pf_run(m, sim.y, 500, 77);
  const EstimateTrack b = pf_run(m, sim.y, 500, 77);
  const EstimateTrack c = pf_run(m, sim.y, 500, 78);
  bool differs = false;
  for (std::size_t k = 0; k < 20; ++k) {
    CHECK(a.mean[k] == b.mean[k]);
    CHECK(a.cov[k] == b.cov[k]);
    differs = differs || a.mean[k] != c.mean[k];
  }
  CHECK(differs);
}

TEST_CASE("systematic resampling") {
  ParticleCloud cloud = pf_init({Vector::Zero(2), Matrix::Identity(2, 2)}, 1000, 4);
  for (Index i = 0; i < cloud.size(); ++i) cloud.log_weights(i) = -0.01 * static_cast<double>(i);
  const GaussianBelief before = cloud.moments();
  CHECK(cloud.ess() < 1000.0);
  systematic_resample(cloud);
  CHECK(cloud.ess() == doctest::Approx(1000.0));
  CHECK(cloud.weights().sum() == doctest::Approx(1.0));
  // Systematic resampling keeps particle counts within one of n * w_i, so the
  // mean moves by at most max |x| / n per particle.
  const GaussianBelief after = cloud.moments();
  CHECK((after.mean - before.mean).norm() < 0.1);
}

TEST_CASE("weights and ESS") {
  ParticleCloud cloud = pf_init({Vector::Zero(1), Matrix::Identity(1, 1)}, 4, 1);
  cloud.log_weights << 0.0, std::log(3.0), -kInf, 0.0;
  const Vector w = cloud.weights();
  CHECK(w(0) == doctest::Approx(0.2));
  CHECK(w(1) == doctest::Approx(0.6));
  CHECK(w(2) == 0.0);
  CHECK(cloud.ess() == doctest::Approx(1.0 / (0.04 + 0.36 + 0.04)));
}

TEST_CASE("likelihood matches the skew-t density") {
  const SkewTNoise noise = SkewTNoise::independent(Vector(Eigen::Vector2d(1.0, 2.0)),
                                                   Vector(Eigen::Vector2d(3.0, -1.0)),
                                                   Vector(Eigen::Vector2d(4.0, kInf)));
  const NoiseLogLikelihood ll(noise);
  Matrix res(3, 2);
  res << 0.5, -1.0, 3.0, 2.0, -4.0, 0.1;
  Vector acc = Vector::Zero(3);
  ll.accumulate(res, acc);
  for (Index p = 0; p < 3; ++p) {
    const double ref = st_logpdf(noise.component(0), res(p, 0)) + st_logpdf(noise.component(1), res(p, 1));
    CHECK(ll(res.row(p).transpose()) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(acc(p) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("depletion is reported") {
  StateSpaceModel m = scalar_model(0.0, 1e-6, 0.0, kInf);
  ParticleCloud cloud = pf_init({Vector::Zero(1), Matrix::Constant(1, 1, 1e-6)}, 50, 2);
  const NoiseLogLikelihood ll(m.noise);
  CHECK_THROWS_AS(pf_update(cloud, m, 0, Vector::Constant(1, kInf), ll), ParticleDepletion);
}

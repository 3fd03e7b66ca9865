#include "doctest.h"

#include "skewtvb/linalg.hpp"
#include "skewtvb/rng.hpp"
#include "skewtvb/ssm.hpp"

#include <cmath>

using namespace skewtvb;

namespace {

Matrix random_spd(Index n, Rng& rng, double ridge = 0.1) {
  const Matrix B = standard_normal_vector(n * n, rng).reshaped(n, n);
  return B * B.transpose() + ridge * Matrix::Identity(n, n);
}

// Joint-Gaussian conditioning of the stacked states on all measurements.
struct BatchPosterior {
  Vector mean;
  Matrix cov;
};

BatchPosterior batch_smoother(const Matrix& A, const Matrix& Q, const Matrix& C, const Matrix& R,
                              const Vector& x0, const Matrix& P0, const std::vector<Vector>& ys) {
  const Index n = A.rows(), m = C.rows();
  const Index K = static_cast<Index>(ys.size());
  // Prior over (x_0..x_{K-1}).
  Matrix T = Matrix::Zero(n * K, n * K);  // x = T w with w = (x_0, w_0, ..., w_{K-2})
  Matrix W = Matrix::Zero(n * K, n * K);
  W.topLeftCorner(n, n) = P0;
  for (Index k = 1; k < K; ++k) W.block(n * k, n * k, n, n) = Q;
  for (Index k = 0; k < K; ++k) {
    Matrix Phi = Matrix::Identity(n, n);
    for (Index j = k; j >= 0; --j) {
      T.block(n * k, n * j, n, n) = Phi;
      Phi = Phi * A;
    }
  }
  Vector mean_prior(n * K);
  Vector m0 = x0;
  for (Index k = 0; k < K; ++k) {
    mean_prior.segment(n * k, n) = m0;
    m0 = A * m0;
  }
  const Matrix S = T * W * T.transpose();
  Matrix H = Matrix::Zero(m * K, n * K);
  Matrix RR = Matrix::Zero(m * K, m * K);
  Vector y(m * K);
  for (Index k = 0; k < K; ++k) {
    H.block(m * k, n * k, m, n) = C;
    RR.block(m * k, m * k, m, m) = R;
    y.segment(m * k, m) = ys[k];
  }
  const Matrix G = S * H.transpose() * (H * S * H.transpose() + RR).inverse();
  return {mean_prior + G * (y - H * mean_prior), S - G * H * S};
}

std::vector<GaussianBelief> kalman_filter(const Matrix& A, const Matrix& Q, const Matrix& C,
                                          const Matrix& R, GaussianBelief b,
                                          const std::vector<Vector>& ys) {
  std::vector<GaussianBelief> out;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (k > 0) b = kf_predict(b, A, Q);
    b = kf_update(b, C, R, ys[k]);
    out.push_back(b);
  }
  return out;
}

long double range_ld(const Matrix& sats, Index i, const Vector& x) {
  long double s = 0.0L;
  for (Index c = 0; c < 3; ++c) {
    const long double d = static_cast<long double>(sats(i, c)) - static_cast<long double>(x(c));
    s += d * d;
  }
  return std::sqrt(s) + static_cast<long double>(x(3));
}

bool loewner_leq(const Matrix& a, const Matrix& b, double tol) {
  return min_eigenvalue(symmetrized(b - a)) >= -tol;
}

}  // namespace

TEST_CASE("predict with identity dynamics and no noise") {
  Rng rng(1);
  const GaussianBelief b{standard_normal_vector(3, rng), random_spd(3, rng)};
  const GaussianBelief p = kf_predict(b, Matrix::Identity(3, 3), Matrix::Zero(3, 3));
  CHECK(p.mean == b.mean);
  CHECK((p.cov - b.cov).norm() < 1e-15);
  const Matrix Q = random_spd(3, rng);
  const GaussianBelief z = kf_predict(b, Matrix::Zero(3, 3), Q);
  CHECK(z.mean.isZero());
  CHECK(z.cov == Q);
}

TEST_CASE("two predictions of the constant-velocity model") {
  Matrix A(2, 2);
  A << 1.0, 1.0, 0.0, 1.0;
  Matrix Q(2, 2);
  Q << 1.0 / 3.0, 0.5, 0.5, 1.0;
  GaussianBelief b{Vector(2), Matrix(2, 2)};
  b.mean << 1.0, 2.0;
  b.cov << 4.0, 1.0, 1.0, 3.0;
  const GaussianBelief p = kf_predict(kf_predict(b, A, Q), A, Q);
  // Mean: position advances by 2 * velocity.
  CHECK(p.mean(0) == doctest::Approx(5.0));
  CHECK(p.mean(1) == doctest::Approx(2.0));
  // A^2 = [[1,2],[0,1]]; cov = A^2 P A^2' + A Q A' + Q.
  const double p00 = 4.0 + 4.0 * 1.0 + 4.0 * 3.0 + (1.0 / 3.0 + 1.0 + 1.0) + 1.0 / 3.0;
  const double p01 = 1.0 + 2.0 * 3.0 + (0.5 + 1.0) + 0.5;
  const double p11 = 3.0 + 1.0 + 1.0;
  CHECK(p.cov(0, 0) == doctest::Approx(p00).epsilon(1e-14));
  CHECK(p.cov(0, 1) == doctest::Approx(p01).epsilon(1e-14));
  CHECK(p.cov(1, 1) == doctest::Approx(p11).epsilon(1e-14));
}

TEST_CASE("gated update") {
  Rng rng(2);
  const GaussianBelief b{standard_normal_vector(3, rng), random_spd(3, rng)};
  const Matrix C = standard_normal_vector(6, rng).reshaped(2, 3);
  const Matrix R = Vector(Eigen::Vector2d(0.5, 2.0)).asDiagonal();

  SUBCASE("zero innovation is applied") {
    const Vector y = C * b.mean;
    const GatedUpdate g = kf_update_gated(b, C, R, y, 0.99);
    CHECK(g.rejected.empty());
    CHECK((g.belief.cov - kf_update(b, C, R, y).cov).norm() < 1e-10);
  }
  SUBCASE("gate of one equals the joint update") {
    for (int rep = 0; rep < 50; ++rep) {
      const Vector y = C * b.mean + 10.0 * standard_normal_vector(2, rng);
      const GatedUpdate g = kf_update_gated(b, C, R, y, 1.0);
      const GaussianBelief j = kf_update(b, C, R, y);
      CHECK(g.rejected.empty());
      CHECK((g.belief.mean - j.mean).norm() < 1e-10);
      CHECK((g.belief.cov - j.cov).norm() < 1e-10);
    }
  }
  SUBCASE("large normalized innovation is dropped") {
    const GaussianBelief s{Vector::Zero(1), Matrix::Constant(1, 1, 0.5)};
    const Matrix c = Matrix::Ones(1, 1), r = Matrix::Constant(1, 1, 0.5);
    // innovation^2 / S = 7 > 6.635.
    const GatedUpdate g = kf_update_gated(s, c, r, Vector::Constant(1, std::sqrt(7.0)), 0.99);
    CHECK(g.rejected == std::vector<Index>{0});
    CHECK(g.belief.mean == s.mean);
    CHECK(g.belief.cov == s.cov);
    const GatedUpdate h = kf_update_gated(s, c, r, Vector::Constant(1, std::sqrt(6.5)), 0.99);
    CHECK(h.rejected.empty());
  }
  SUBCASE("non-diagonal R is rejected") {
    Matrix Rf = R;
    Rf(0, 1) = Rf(1, 0) = 0.1;
    CHECK_THROWS_AS(kf_update_gated(b, C, Rf, C * b.mean, 0.99), InvalidParameter);
  }
}

TEST_CASE("RTS smoother with one step returns the filter") {
  Rng rng(3);
  const std::vector<GaussianBelief> f{{standard_normal_vector(2, rng), random_spd(2, rng)}};
  const SmootherResult s = rtss_backward(f, Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  CHECK(s.smoothed.size() == 1);
  CHECK(s.smoothed[0].mean == f[0].mean);
  CHECK(s.gains.empty());
}

TEST_CASE("RTS smoother matches batch conditioning") {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const Index n = 2, m = 1 + rep % 2;
    const Index K = 2 + rep % 7;
    const Matrix A = 0.9 * standard_normal_vector(n * n, rng).reshaped(n, n) / std::sqrt(2.0);
    const Matrix Q = random_spd(n, rng);
    const Matrix C = standard_normal_vector(m * n, rng).reshaped(m, n);
    const Matrix R = random_spd(m, rng, 0.5);
    const Vector x0 = standard_normal_vector(n, rng);
    const Matrix P0 = random_spd(n, rng);
    std::vector<Vector> ys;
    for (Index k = 0; k < K; ++k) ys.push_back(standard_normal_vector(m, rng));
    const auto filt = kalman_filter(A, Q, C, R, {x0, P0}, ys);
    const SmootherResult s = rtss_backward(filt, A, Q);
    const BatchPosterior batch = batch_smoother(A, Q, C, R, x0, P0, ys);
    for (Index k = 0; k < K; ++k) {
      CHECK((s.smoothed[k].mean - batch.mean.segment(n * k, n)).norm() < 1e-8);
      CHECK((s.smoothed[k].cov - batch.cov.block(n * k, n * k, n, n)).norm() < 1e-8);
    }
    // The filter marginal at the last step is also the batch marginal.
    CHECK((filt.back().mean - batch.mean.tail(n)).norm() < 1e-8);
  }
}

TEST_CASE("smoothing tends to filtering as process noise grows") {
  Rng rng(5);
  const Matrix A = Matrix::Identity(2, 2);
  const Matrix C = Matrix::Identity(2, 2);
  const Matrix R = Matrix::Identity(2, 2);
  std::vector<Vector> ys;
  for (int k = 0; k < 5; ++k) ys.push_back(standard_normal_vector(2, rng));
  double prev = INFINITY;
  for (double q : {1.0, 1e2, 1e4, 1e6}) {
    const Matrix Q = q * Matrix::Identity(2, 2);
    const auto filt = kalman_filter(A, Q, C, R, {Vector::Zero(2), Matrix::Identity(2, 2)}, ys);
    const SmootherResult s = rtss_backward(filt, A, Q);
    double gap = 0.0;
    for (int k = 0; k < 5; ++k) gap = std::max(gap, (s.smoothed[k].mean - filt[k].mean).norm());
    CHECK(gap < prev);
    prev = gap;
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("smoothed covariance is below the filtered one") {
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 1 + rep % 4, m = 1 + rep % 3;
    Matrix A = standard_normal_vector(n * n, rng).reshaped(n, n);
    A *= 0.95 / std::max(1e-12, Eigen::EigenSolver<Matrix>(A).eigenvalues().cwiseAbs().maxCoeff());
    const Matrix Q = random_spd(n, rng);
    const Matrix C = standard_normal_vector(m * n, rng).reshaped(m, n);
    const Matrix R = random_spd(m, rng);
    std::vector<Vector> ys;
    for (int k = 0; k < 15; ++k) ys.push_back(standard_normal_vector(m, rng));
    const auto filt = kalman_filter(A, Q, C, R, {Vector::Zero(n), random_spd(n, rng)}, ys);
    const SmootherResult s = rtss_backward(filt, A, Q);
    for (std::size_t k = 0; k < filt.size(); ++k) {
      CHECK(loewner_leq(s.smoothed[k].cov, filt[k].cov, 1e-9));
      CHECK((s.smoothed[k].cov - s.smoothed[k].cov.transpose()).norm() == 0.0);
      CHECK(min_eigenvalue(s.smoothed[k].cov) > -1e-10);
    }
  }
}

TEST_CASE("singular predicted covariance uses the pseudo-inverse") {
  const std::vector<GaussianBelief> f{{Vector::Zero(2), Matrix::Zero(2, 2)},
                                      {Vector::Ones(2), Matrix::Zero(2, 2)}};
  const SmootherResult s = rtss_backward(f, Matrix::Identity(2, 2), Matrix::Zero(2, 2));
  CHECK(s.used_pseudo_inverse);
  CHECK(s.smoothed[0].mean.allFinite());
}

TEST_CASE("pseudorange linearization") {
  SUBCASE("axis-aligned satellite") {
    Matrix sats(1, 3);
    sats << 2e7, 0.0, 0.0;
    const LinearizedMeasurement lin = linearize_pseudorange(sats, 3, Vector::Zero(4));
    CHECK(lin.C(0, 0) == -1.0);
    CHECK(lin.C(0, 1) == 0.0);
    CHECK(lin.C(0, 2) == 0.0);
    CHECK(lin.C(0, 3) == 1.0);
  }
  SUBCASE("Jacobian against central differences") {
    Rng rng(7);
    Matrix sats(6, 3);
    for (Index i = 0; i < 6; ++i) sats.row(i) = 2e7 * standard_normal_vector(3, rng).normalized().transpose();
    const PseudorangeMeasurement h(sats, 3, 5);
    for (int rep = 0; rep < 10; ++rep) {
      Vector x = 100.0 * standard_normal_vector(5, rng);
      const LinearizedMeasurement lin = h.linearize(0, x);
      for (Index j = 0; j < 5; ++j) {
        Vector up = x, dn = x;
        up(j) += 1e-3;
        dn(j) -= 1e-3;
        // Ranges of 2e7 m leave double-precision differences at the 1e-6 level,
        // so the difference quotient is formed in extended precision.
        Vector fd(6);
        for (Index i = 0; i < 6; ++i) fd(i) = static_cast<double>((range_ld(sats, i, up) - range_ld(sats, i, dn)) / 2e-3L);
        for (Index i = 0; i < 6; ++i) {
          const double ref = fd(i);
          // Position columns are unit-vector components; compare relative to their scale.
          CHECK(std::abs(lin.C(i, j) - ref) < 1e-6 * std::max(1.0, std::abs(ref)));
        }
      }
      // The expansion reproduces h at the linearization point.
      CHECK((lin.offset + lin.C * x - h.evaluate(0, x)).norm() < 1e-6);
      for (Index i = 0; i < 6; ++i) {
        CHECK(h.evaluate(0, x)(i) == doctest::Approx((sats.row(i).transpose() - x.head(3)).norm() + x(3)));
      }
    }
  }
  SUBCASE("batch evaluation matches single evaluation") {
    Rng rng(8);
    Matrix sats(4, 3);
    for (Index i = 0; i < 4; ++i) sats.row(i) = 2e7 * standard_normal_vector(3, rng).normalized().transpose();
    const PseudorangeMeasurement h(sats, 3, 4);
    const Matrix states = 50.0 * standard_normal_vector(40, rng).reshaped(10, 4);
    const Matrix rows = h.evaluate_rows(0, states);
    for (Index p = 0; p < 10; ++p) {
      CHECK((rows.row(p).transpose() - h.evaluate(0, states.row(p).transpose())).norm() < 1e-6);
    }
  }
  SUBCASE("coincident satellite") {
    Matrix sats(1, 3);
    sats << 1.0, 2.0, 3.0;
    Vector x = Vector::Zero(4);
    x.head(3) << 1.0, 2.0, 3.0;
    CHECK_THROWS_AS(linearize_pseudorange(sats, 3, x), DegenerateGeometry);
  }
}

TEST_CASE("model validation") {
  StateSpaceModel m;
  m.A = Matrix::Identity(2, 2);
  m.Q = Matrix::Identity(2, 2);
  m.C = Matrix::Ones(1, 2);
  m.noise = SkewTNoise::independent(Vector::Ones(1), Vector::Zero(1), Vector::Constant(1, 4.0));
  m.x0 = Vector::Zero(2);
  m.P0 = Matrix::Identity(2, 2);
  CHECK_NOTHROW(m.validate());
  m.Q(0, 0) = -1.0;
  CHECK_THROWS_AS(m.validate(), InvalidParameter);
  m.Q(0, 0) = 1.0;
  m.C = Matrix::Ones(2, 2);
  CHECK_THROWS_AS(m.validate(), InvalidParameter);
}

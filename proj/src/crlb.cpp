#include "skewtvb/crlb.hpp"

#include "skewtvb/linalg.hpp"
#include "skewtvb/rng.hpp"
#include "skewtvb/special.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace skewtvb {

namespace {

constexpr double kFisherDomain = 20.0;

double log_tau(double w, double dof) {
  if (is_infinite_nu(dof)) return normal_logpdf(w) - normal_logcdf(w);
  return student_t_logpdf(w, dof) - student_t_logcdf(w, dof);
}

}  // namespace

double fisher_univariate_E(double theta, double nu, double tol) {
  if (!(std::abs(theta) < 1.0)) throw InvalidParameter("fisher_univariate_E: need |theta| < 1");
  if (!(nu > 0.0)) throw InvalidParameter("fisher_univariate_E: need nu > 0");
  const double L = 1.0 - theta * theta;
  const double ratio = theta * theta / L;
  const bool gaussian = is_infinite_nu(nu);
  const SkewTLogDensity density(UnivariateSkewT{0.0, L, theta, gaussian ? kInfiniteNu : nu});

  auto integrand = [&](double r) {
    const double p = std::exp(density(r));
    if (p == 0.0) return 0.0;
    if (gaussian) {
      const double w = theta * r / std::sqrt(L);
      const double tau = theta == 0.0 ? 0.0 : std::exp(log_tau(w, kInfiniteNu));
      return p * (1.0 + ratio * tau * tau);
    }
    const double q = nu + r * r;
    double skew = 0.0;
    if (theta != 0.0) {
      const double w = theta * r * std::sqrt((nu + 1.0) / q) / std::sqrt(L);
      const double tau = std::exp(log_tau(w, nu + 1.0));
      skew = ratio * nu * nu / (q * q * q) * tau * tau;
    }
    return p * (nu + 1.0) * ((nu - r * r) / (q * q) + skew);
  };

  using boost::math::quadrature::gauss_kronrod;
  const double cuts[] = {-kFisherDomain, -2.0, 0.0, 2.0, kFisherDomain};
  double total = 0.0;
  double err_total = 0.0;
  for (int i = 0; i + 1 < 5; ++i) {
    double err = 0.0;
    total += gauss_kronrod<double, 61>::integrate(integrand, cuts[i], cuts[i + 1], 20, 1e-13, &err);
    err_total += err;
  }
  // Polynomial tails for small nu.
  boost::math::quadrature::exp_sinh<double> tails;
  for (double side : {-1.0, 1.0}) {
    double err = 0.0;
    total += tails.integrate([&](double t) { return integrand(side * t); }, kFisherDomain,
                             std::numeric_limits<double>::infinity(), 1e-13, &err);
    err_total += err;
  }
  if (!std::isfinite(total) || err_total > tol * std::max(1.0, std::abs(total))) {
    throw AccuracyError("fisher_univariate_E: quadrature did not reach tolerance", total, err_total);
  }
  return total;
}

FisherEstimate fisher_mvst_E(const Matrix& Theta, double nu, std::uint64_t n_mc,
                             std::uint64_t seed) {
  const Index n = Theta.rows();
  if (Theta.cols() != n) throw InvalidParameter("fisher_mvst_E: Theta must be square");
  if (n > 3) throw UnsupportedDimension("fisher_mvst_E: only n_y <= 3 is supported");
  if (!(nu > 0.0)) throw InvalidParameter("fisher_mvst_E: need nu > 0");
  if (n_mc < 2) throw InvalidParameter("fisher_mvst_E: need at least two samples");
  const Matrix I = Matrix::Identity(n, n);
  const Matrix L = symmetrized(I - Theta.transpose() * Theta);
  const Matrix eps_factor = cholesky_lower(symmetrized(I - Theta * Theta.transpose()),
                                           "fisher_mvst_E: I - Theta Theta^T");
  cholesky_lower(L, "fisher_mvst_E: I - Theta^T Theta");
  const bool gaussian = is_infinite_nu(nu);
  const double dn = static_cast<double>(n);
  const double dof = gaussian ? kInfiniteNu : nu + dn;

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix sum = Matrix::Zero(n, n);
  Matrix sum_sq = Matrix::Zero(n, n);
  Vector z(n);
  for (std::uint64_t s = 0; s < n_mc; ++s) {
    for (Index i = 0; i < n; ++i) z(i) = std::abs(normal(rng));
    Vector r = Theta * z + eps_factor * standard_normal_vector(n, rng);
    Matrix M;
    if (gaussian) {
      const Vector w = Theta.transpose() * r;
      const Vector rt = Theta * mvt_cdf_gradient(w, L, dof) / mvt_cdf(w, L, dof);
      M = I + rt * rt.transpose();
    } else {
      r /= std::sqrt(gamma_draw(0.5 * nu, 0.5 * nu, rng));
      const double q = nu + r.squaredNorm();
      const Vector w = Theta.transpose() * r * std::sqrt((nu + dn) / q);
      const Matrix proj = I - r * r.transpose() / q;
      const Vector rt = proj * Theta * mvt_cdf_gradient(w, L, dof) / mvt_cdf(w, L, dof);
      M = (nu + dn) / q * (I - 2.0 * r * r.transpose() / q + rt * rt.transpose());
    }
    sum += M;
    sum_sq += M.cwiseProduct(M);
  }
  const double N = static_cast<double>(n_mc);
  FisherEstimate out;
  out.E = sum / N;
  const Matrix var = (sum_sq / N - out.E.cwiseProduct(out.E)) * (N / (N - 1.0));
  out.stderr_ = (var.cwiseMax(0.0) / N).cwiseSqrt();
  out.E = symmetrized(out.E);
  return out;
}

FisherContext fisher_context(const SkewTNoise& noise, const FisherOptions& opts) {
  noise.validate();
  const Index n = noise.dim();
  FisherContext ctx;
  ctx.Omega = symmetrized(noise.R + noise.Delta * noise.Delta.transpose());
  ctx.Omega_sqrt = cholesky_lower(ctx.Omega, "fisher_context: Omega");
  ctx.Theta = ctx.Omega_sqrt.triangularView<Eigen::Lower>().solve(noise.Delta);
  ctx.L = symmetrized(Matrix::Identity(n, n) - ctx.Theta.transpose() * ctx.Theta);
  if (noise.mode == NoiseMode::IndependentUnivariate) {
    ctx.nu = noise.nu.minCoeff();
    ctx.E = Matrix::Zero(n, n);
    ctx.E_stderr = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      ctx.E(i, i) = fisher_univariate_E(ctx.Theta(i, i), noise.nu(i), opts.quad_tol);
    }
  } else {
    ctx.nu = noise.nu(0);
    FisherEstimate est = fisher_mvst_E(ctx.Theta, ctx.nu, opts.n_mc, opts.seed);
    ctx.E = std::move(est.E);
    ctx.E_stderr = std::move(est.stderr_);
  }
  return ctx;
}

Matrix measurement_information(const Matrix& C, const FisherContext& ctx) {
  const Matrix W = ctx.Omega_sqrt.triangularView<Eigen::Lower>().solve(C);
  return symmetrized(W.transpose() * ctx.E * W);
}

Matrix effective_measurement_cov(const FisherContext& ctx) {
  return symmetrized(ctx.Omega_sqrt * spd_inverse(ctx.E) * ctx.Omega_sqrt.transpose());
}

CrlbTrack crlb_filter_recursion(const StateSpaceModel& model, const FisherContext& ctx,
                                std::size_t K, CrlbForm form) {
  model.validate();
  if (model.measurement) {
    throw InvalidParameter("crlb_filter_recursion: only linear measurement models are supported");
  }
  CrlbTrack out;
  Matrix B_pred = symmetrized(model.P0);
  const Matrix R_eff = form == CrlbForm::Kalman ? effective_measurement_cov(ctx) : Matrix();
  for (std::size_t k = 0; k < K; ++k) {
    const Matrix& C = k < model.C_steps.size() ? model.C_steps[k] : model.C;
    Matrix B;
    bool pinv = false;
    if (form == CrlbForm::Information) {
      const Matrix info = spd_inverse(B_pred, &pinv) + measurement_information(C, ctx);
      bool pinv2 = false;
      B = spd_inverse(symmetrized(info), &pinv2);
      pinv = pinv || pinv2;
    } else {
      const Matrix PCt = B_pred * C.transpose();
      const Matrix gain = spd_right_solve(PCt, symmetrized(C * PCt + R_eff), &pinv);
      B = B_pred - gain * PCt.transpose();
    }
    symmetrize(B);
    out.used_pseudo_inverse = out.used_pseudo_inverse || pinv;
    out.B_pred.push_back(B_pred);
    out.B_filt.push_back(B);
    const Matrix& A = model.A_at(k);
    B_pred = symmetrized(A * B * A.transpose() + model.Q_at(k));
  }
  std::vector<Matrix> As;
  std::vector<Matrix> Qs;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    As.push_back(model.A_at(k));
    Qs.push_back(model.Q_at(k));
  }
  bool pinv = false;
  out.B_smooth = crlb_smoother_recursion(out.B_filt, As, Qs, &pinv);
  out.used_pseudo_inverse = out.used_pseudo_inverse || pinv;
  return out;
}

std::vector<Matrix> crlb_smoother_recursion(std::span<const Matrix> B_filt,
                                            std::span<const Matrix> A, std::span<const Matrix> Q,
                                            bool* used_pseudo_inverse) {
  std::vector<GaussianBelief> beliefs;
  beliefs.reserve(B_filt.size());
  for (const Matrix& B : B_filt) beliefs.push_back({Vector::Zero(B.rows()), B});
  SmootherResult res = rtss_backward(beliefs, A, Q);
  if (used_pseudo_inverse) *used_pseudo_inverse = res.used_pseudo_inverse;
  std::vector<Matrix> out;
  out.reserve(res.smoothed.size());
  for (GaussianBelief& b : res.smoothed) out.push_back(std::move(b.cov));
  return out;
}

}  // namespace skewtvb

#include "skewtvb/skewt.hpp"

#include "skewtvb/linalg.hpp"
#include "skewtvb/quadrature.hpp"
#include "skewtvb/special.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace skewtvb {

namespace {

bool is_diagonal(const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (i != j && m(i, j) != 0.0) return false;
    }
  }
  return true;
}

void require_pd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(symmetrized(m));
  if (llt.info() != Eigen::Success) {
    throw InvalidParameter(std::string(what) + " is not positive definite");
  }
}

}  // namespace

void UnivariateSkewT::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw InvalidParameter("skew-t: sigma2 must be positive and finite");
  }
  if (!(nu > 0.0)) throw InvalidParameter("skew-t: nu must be positive");
  if (!std::isfinite(mu) || !std::isfinite(delta)) {
    throw InvalidParameter("skew-t: mu and delta must be finite");
  }
}

void MultivariateSkewT::validate() const {
  const Index n = mu.size();
  if (R.rows() != n || R.cols() != n || Delta.rows() != n || Delta.cols() != n) {
    throw InvalidParameter("MVST: R and Delta must be square of the location dimension");
  }
  if (!(nu > 0.0)) throw InvalidParameter("MVST: nu must be positive");
  require_pd(R, "MVST R");
  const Matrix omega = R + Delta * Delta.transpose();
  require_pd(omega, "MVST Omega");
  const Matrix L =
      Matrix::Identity(n, n) - Delta.transpose() * symmetrized(omega).llt().solve(Delta);
  require_pd(L, "MVST L");
}

SkewTNoise SkewTNoise::independent(const Vector& r_diag, const Vector& delta_diag, const Vector& nu,
                                   const Vector& location) {
  SkewTNoise n;
  n.mode = NoiseMode::IndependentUnivariate;
  n.R = r_diag.asDiagonal();
  n.Delta = delta_diag.asDiagonal();
  n.nu = nu;
  n.location = location.size() == 0 ? Vector::Zero(r_diag.size()) : location;
  n.validate();
  return n;
}

SkewTNoise SkewTNoise::multivariate(const Matrix& R, const Matrix& Delta, double nu,
                                    const Vector& location) {
  SkewTNoise n;
  n.mode = NoiseMode::Multivariate;
  n.R = R;
  n.Delta = Delta;
  n.nu = Vector::Constant(1, nu);
  n.location = location.size() == 0 ? Vector::Zero(R.rows()) : location;
  n.validate();
  return n;
}

void SkewTNoise::validate() const {
  const Index n = R.rows();
  if (R.cols() != n || Delta.rows() != n || Delta.cols() != n) {
    throw InvalidParameter("noise: R and Delta must be square and of equal size");
  }
  if (location.size() != n) throw InvalidParameter("noise: location has the wrong size");
  if (mode == NoiseMode::IndependentUnivariate) {
    if (!is_diagonal(R) || !is_diagonal(Delta)) {
      throw InvalidParameter("noise: independent mode requires diagonal R and Delta");
    }
    if (nu.size() != n) throw InvalidParameter("noise: independent mode needs one nu per component");
    for (Index i = 0; i < n; ++i) {
      if (!(R(i, i) > 0.0)) throw InvalidParameter("noise: R diagonal must be positive");
      if (!(nu(i) > 0.0)) throw InvalidParameter("noise: nu must be positive");
    }
  } else {
    if (nu.size() != 1 || !(nu(0) > 0.0)) {
      throw InvalidParameter("noise: multivariate mode needs a single positive nu");
    }
    require_pd(R, "noise R");
  }
}

UnivariateSkewT SkewTNoise::component(Index i) const {
  if (mode != NoiseMode::IndependentUnivariate) {
    throw InvalidParameter("noise: component() requires independent mode");
  }
  return UnivariateSkewT{location(i), R(i, i), Delta(i, i), nu(i)};
}

MultivariateSkewT SkewTNoise::joint() const {
  const double joint_nu = mode == NoiseMode::Multivariate ? nu(0) : nu.minCoeff();
  if (mode == NoiseMode::IndependentUnivariate && dim() > 1 && nu.maxCoeff() != nu.minCoeff()) {
    throw InvalidParameter("noise: joint() of independent components needs a common nu");
  }
  return MultivariateSkewT{location, R, Delta, joint_nu};
}

SkewTLogDensity::SkewTLogDensity(const UnivariateSkewT& d) : d_(d) {
  d_.validate();
  gaussian_ = is_infinite_nu(d.nu);
  omega2_ = d.sigma2 + d.delta * d.delta;
  const double sigma = std::sqrt(d.sigma2);
  if (gaussian_) {
    log_norm_ = std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi * omega2_);
    skew_scale_ = d.delta / (sigma * std::sqrt(omega2_));
  } else {
    log_norm_ = std::log(2.0) + std::lgamma(0.5 * (d.nu + 1.0)) - std::lgamma(0.5 * d.nu) -
                0.5 * std::log(d.nu * std::numbers::pi * omega2_);
    skew_scale_ = d.delta / sigma;
  }
}

double SkewTLogDensity::operator()(double z) const {
  const double r = z - d_.mu;
  if (gaussian_) {
    return log_norm_ - 0.5 * r * r / omega2_ + normal_logcdf(skew_scale_ * r);
  }
  const double nu = d_.nu;
  const double body = -0.5 * (nu + 1.0) * std::log1p(r * r / (nu * omega2_));
  const double ztilde = skew_scale_ * r * std::sqrt((nu + 1.0) / (nu * omega2_ + r * r));
  return log_norm_ + body + student_t_logcdf(ztilde, nu + 1.0);
}

double st_logpdf(const UnivariateSkewT& d, double z) { return SkewTLogDensity(d)(z); }

double skew_mean_factor(double nu) {
  if (is_infinite_nu(nu)) return std::sqrt(2.0 / std::numbers::pi);
  if (!(nu > 1.0)) throw InfiniteVariance("skew-t mean requires nu > 1");
  return std::sqrt(nu / std::numbers::pi) *
         std::exp(std::lgamma(0.5 * (nu - 1.0)) - std::lgamma(0.5 * nu));
}

double st_mean(const UnivariateSkewT& d) { return d.mu + skew_mean_factor(d.nu) * d.delta; }

double st_variance(const UnivariateSkewT& d) {
  if (!is_infinite_nu(d.nu) && !(d.nu > 2.0)) {
    throw InfiniteVariance("skew-t variance requires nu > 2");
  }
  const double g = skew_mean_factor(d.nu);
  const double scale = is_infinite_nu(d.nu) ? 1.0 : d.nu / (d.nu - 2.0);
  return scale * (d.sigma2 + d.delta * d.delta) - g * g * d.delta * d.delta;
}

namespace {

constexpr std::size_t kPanels = 8;
constexpr std::size_t kPoints = 16;
constexpr double kTinyVariance = 1e-300;

Vector drop(const Vector& v, Index j) {
  Vector out(v.size() - 1);
  for (Index i = 0, p = 0; i < v.size(); ++i) {
    if (i != j) out(p++) = v(i);
  }
  return out;
}

struct Conditional {
  Vector shift;  // multiplies x_j
  Matrix scale;  // Schur complement before the dof factor
};

Conditional conditional_on(const Matrix& L, Index j) {
  const Index n = L.rows();
  Conditional c;
  c.shift.resize(n - 1);
  c.scale.resize(n - 1, n - 1);
  Vector cross(n - 1);
  for (Index i = 0, p = 0; i < n; ++i) {
    if (i == j) continue;
    cross(p++) = L(i, j);
  }
  c.shift = cross / L(j, j);
  for (Index a = 0, pa = 0; a < n; ++a) {
    if (a == j) continue;
    for (Index b = 0, pb = 0; b < n; ++b) {
      if (b == j) continue;
      c.scale(pa, pb) = L(a, b) - L(a, j) * L(j, b) / L(j, j);
      ++pb;
    }
    ++pa;
  }
  return c;
}

double mvt_cdf_det(const Vector& u, const Matrix& L, double nu);

// CDF of the remaining components given the standardized value s of
// component j.
double conditional_cdf(const Vector& u_rest, const Conditional& c, double s, double sd_j,
                       double nu) {
  const bool gaussian = is_infinite_nu(nu);
  const double factor = gaussian ? 1.0 : (nu + s * s) / (nu + 1.0);
  const double nu_c = gaussian ? nu : nu + 1.0;
  return mvt_cdf_det(u_rest - c.shift * (s * sd_j), factor * c.scale, nu_c);
}

double mvt_cdf_det(const Vector& u, const Matrix& L, double nu) {
  const Index n = u.size();
  if (n == 0) return 1.0;
  if (n == 1) {
    if (!(L(0, 0) > kTinyVariance)) return u(0) >= 0.0 ? 1.0 : 0.0;
    return student_t_cdf(u(0) / std::sqrt(L(0, 0)), nu);
  }
  // Outer variable: the most restrictive standardized bound.
  Index j = 0;
  double best = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double s = u(i) / std::sqrt(std::max(L(i, i), kTinyVariance));
    if (i == 0 || s < best) {
      best = s;
      j = i;
    }
  }
  const double sd_j = std::sqrt(std::max(L(j, j), kTinyVariance));
  const double s_upper = u(j) / sd_j;
  const Vector u_rest = drop(u, j);
  const Conditional cond = conditional_on(L, j);

  if (is_infinite_nu(nu)) {
    const double p_upper = normal_cdf(s_upper);
    if (!(p_upper > 0.0)) return 0.0;
    auto integrand = [&](double p) {
      return conditional_cdf(u_rest, cond, normal_quantile(p), sd_j, nu);
    };
    return integrate_gl(integrand, 0.0, p_upper, kPanels, kPoints);
  }
  // s = sqrt(nu) tan(theta); the t density becomes c sqrt(nu) cos^(nu-1)(theta).
  const double sqrt_nu = std::sqrt(nu);
  const double theta_upper = std::atan2(s_upper, sqrt_nu);
  const double log_c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                       0.5 * std::log(std::numbers::pi);
  auto integrand = [&](double theta) {
    const double cth = std::cos(theta);
    if (!(cth > 0.0)) return 0.0;
    const double s = sqrt_nu * std::tan(theta);
    const double weight = std::exp(log_c + (nu - 1.0) * std::log(cth));
    return weight * conditional_cdf(u_rest, cond, s, sd_j, nu);
  };
  return integrate_gl(integrand, -0.5 * std::numbers::pi, theta_upper, kPanels, kPoints);
}

}  // namespace

McEstimate mvt_cdf_mc(const Vector& upper, const Matrix& L, double nu, std::uint64_t n_samples,
                      std::uint64_t seed) {
  const Index n = upper.size();
  if (L.rows() != n || L.cols() != n) throw InvalidParameter("mvt_cdf_mc: L has the wrong size");
  if (n_samples < 2) throw InvalidParameter("mvt_cdf_mc: need at least two samples");
  const Matrix chol = cholesky_lower(L, "mvt_cdf_mc L");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi2(is_infinite_nu(nu) ? 1.0 : nu);
  Vector z(n);
  std::uint64_t hits = 0;
  for (std::uint64_t s = 0; s < n_samples; ++s) {
    for (Index i = 0; i < n; ++i) z(i) = normal(rng);
    Vector x = chol * z;
    if (!is_infinite_nu(nu)) x /= std::sqrt(chi2(rng) / nu);
    if (((upper - x).array() >= 0.0).all()) ++hits;
  }
  McEstimate out;
  const double p = static_cast<double>(hits) / static_cast<double>(n_samples);
  out.value = p;
  out.stderr_ = std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n_samples - 1));
  return out;
}

double mvt_cdf(const Vector& upper, const Matrix& L, double nu) {
  const Index n = upper.size();
  if (L.rows() != n || L.cols() != n) throw InvalidParameter("mvt_cdf: L has the wrong size");
  if (n <= 3) {
    cholesky_lower(L, "mvt_cdf L");
    return mvt_cdf_det(upper, L, nu);
  }
  return mvt_cdf_mc(upper, L, nu, 100000, 0x5EEDCDFULL).value;
}

Vector mvt_cdf_gradient(const Vector& upper, const Matrix& L, double nu) {
  const Index n = upper.size();
  if (n > 3) throw UnsupportedDimension("mvt_cdf_gradient: dimension above 3 is not supported");
  if (L.rows() != n || L.cols() != n) {
    throw InvalidParameter("mvt_cdf_gradient: L has the wrong size");
  }
  cholesky_lower(L, "mvt_cdf_gradient L");
  Vector grad(n);
  for (Index j = 0; j < n; ++j) {
    const double sd_j = std::sqrt(L(j, j));
    const double s = upper(j) / sd_j;
    const double density = student_t_pdf(s, nu) / sd_j;
    if (n == 1) {
      grad(j) = density;
      continue;
    }
    const Conditional cond = conditional_on(L, j);
    grad(j) = density * conditional_cdf(drop(upper, j), cond, s, sd_j, nu);
  }
  return grad;
}

MvstLogDensity::MvstLogDensity(const MultivariateSkewT& d) : d_(d) {
  d_.validate();
  const Index n = d.dim();
  const Matrix omega = symmetrized(d.R + d.Delta * d.Delta.transpose());
  omega_chol_ = cholesky_lower(omega, "MVST Omega");
  const Matrix omega_inv_delta = omega.llt().solve(d.Delta);
  skew_map_ = omega_inv_delta.transpose();
  L_ = symmetrized(Matrix::Identity(n, n) - d.Delta.transpose() * omega_inv_delta);
  double log_det = 0.0;
  for (Index i = 0; i < n; ++i) log_det += 2.0 * std::log(omega_chol_(i, i));
  const double dn = static_cast<double>(n);
  if (is_infinite_nu(d.nu)) {
    log_norm_ = dn * std::log(2.0) - 0.5 * dn * std::log(2.0 * std::numbers::pi) - 0.5 * log_det;
  } else {
    log_norm_ = dn * std::log(2.0) + std::lgamma(0.5 * (d.nu + dn)) - std::lgamma(0.5 * d.nu) -
                0.5 * dn * std::log(d.nu * std::numbers::pi) - 0.5 * log_det;
  }
}

double MvstLogDensity::operator()(const Vector& z) const {
  const Index n = d_.dim();
  if (z.size() != n) throw InvalidParameter("mvst_logpdf: dimension mismatch");
  const Vector r = z - d_.mu;
  const Vector w = omega_chol_.triangularView<Eigen::Lower>().solve(r);
  const double q = w.squaredNorm();
  const double dn = static_cast<double>(n);
  double body = 0.0;
  Vector zbar = skew_map_ * r;
  double nu_cdf = d_.nu;
  if (is_infinite_nu(d_.nu)) {
    body = -0.5 * q;
  } else {
    body = -0.5 * (d_.nu + dn) * std::log1p(q / d_.nu);
    zbar *= std::sqrt((d_.nu + dn) / (d_.nu + q));
    nu_cdf = d_.nu + dn;
  }
  double log_cdf = 0.0;
  if (n == 1) {
    log_cdf = student_t_logcdf(zbar(0) / std::sqrt(L_(0, 0)), nu_cdf);
  } else {
    log_cdf = std::log(mvt_cdf(zbar, L_, nu_cdf));
  }
  return log_norm_ + body + log_cdf;
}

double mvst_logpdf(const MultivariateSkewT& d, const Vector& z) { return MvstLogDensity(d)(z); }

Vector draw_noise(const SkewTNoise& noise, Rng& rng) {
  const Index n = noise.dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector e(n);
  if (noise.mode == NoiseMode::IndependentUnivariate) {
    for (Index i = 0; i < n; ++i) {
      const double nu = noise.nu(i);
      const double lambda = is_infinite_nu(nu) ? 1.0 : gamma_draw(0.5 * nu, 0.5 * nu, rng);
      const double scale = 1.0 / std::sqrt(lambda);
      const double u = std::abs(normal(rng)) * scale;
      const double eps = normal(rng) * std::sqrt(noise.R(i, i)) * scale;
      e(i) = noise.location(i) + noise.Delta(i, i) * u + eps;
    }
    return e;
  }
  const double nu = noise.nu(0);
  const double lambda = is_infinite_nu(nu) ? 1.0 : gamma_draw(0.5 * nu, 0.5 * nu, rng);
  const double scale = 1.0 / std::sqrt(lambda);
  Vector u(n);
  Vector eps(n);
  for (Index i = 0; i < n; ++i) u(i) = std::abs(normal(rng)) * scale;
  for (Index i = 0; i < n; ++i) eps(i) = normal(rng);
  const Matrix chol = cholesky_lower(noise.R, "noise R");
  return noise.location + noise.Delta * u + chol * eps * scale;
}

Matrix sample_noise(const SkewTNoise& noise, Index k_steps, std::uint64_t seed) {
  noise.validate();
  Rng rng(seed);
  Matrix out(noise.dim(), k_steps);
  for (Index k = 0; k < k_steps; ++k) out.col(k) = draw_noise(noise, rng);
  return out;
}

UnivariateSkewT zero_mean_reparam(double delta_c, double nu, double omega2) {
  if (!is_infinite_nu(nu) && !(nu > 2.0)) {
    throw InfiniteVariance("zero_mean_reparam: nu must exceed 2");
  }
  if (!(omega2 > 0.0)) throw InvalidParameter("zero_mean_reparam: omega2 must be positive");
  const double g = skew_mean_factor(nu);
  const double scale = is_infinite_nu(nu) ? 1.0 : nu / (nu - 2.0);
  const double sigma2 = omega2 / (scale * (1.0 + delta_c * delta_c) - g * g * delta_c * delta_c);
  const double sigma = std::sqrt(sigma2);
  UnivariateSkewT d;
  d.mu = -g * delta_c * sigma;
  d.sigma2 = sigma2;
  d.delta = delta_c * sigma;
  d.nu = nu;
  return d;
}

}  // namespace skewtvb

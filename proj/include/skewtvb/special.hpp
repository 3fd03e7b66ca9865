#pragma once

namespace skewtvb {

/// Scaled complementary error function exp(x^2) * erfc(x).
/// Relative accuracy better than 1e-13 on [-26, 1e300]; overflows to +inf
/// below about -26.6.
double erfcx(double x);

double normal_pdf(double x);
double normal_logpdf(double x);
double normal_cdf(double x);
double normal_logcdf(double x);
/// Inverse of the standard normal CDF on (0, 1).
double normal_quantile(double p);

/// phi(xi) / Phi(xi) for the standard normal, via sqrt(2/pi) / erfcx(-xi/sqrt 2).
/// Finite and monotone decreasing on the whole real line.
double phi_over_Phi(double xi);

/// Regularized incomplete beta I_x(a, b); `one_minus_x` is passed explicitly
/// so callers can supply it without cancellation.
double beta_inc(double a, double b, double x, double one_minus_x);
double beta_inc(double a, double b, double x);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Standard Student-t with nu degrees of freedom. nu >= kInfiniteNu falls back
/// to the standard normal.
double student_t_logpdf(double t, double nu);
double student_t_pdf(double t, double nu);
double student_t_cdf(double t, double nu);
double student_t_logcdf(double t, double nu);

double chi2_cdf(double x, double dof);
/// Quantile of the chi-square distribution. p = 1 returns +inf.
double chi2_quantile(double p, double dof);

}  // namespace skewtvb

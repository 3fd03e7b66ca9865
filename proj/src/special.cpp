#include "skewtvb/special.hpp"

#include "skewtvb/common.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace skewtvb {
namespace {

constexpr double kInvSqrtPi = 0.56418958354775628695;  // 1/sqrt(pi)
constexpr double kTwoOverSqrtPi = 1.12837916709551257390;
constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kSqrt2OverPi = 0.79788456080286535588;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// exp(x^2) - (2/sqrt(pi)) * sum_n 2^n x^(2n+1) / (2n+1)!!, all terms positive.
double erfcx_series(double x) {
  const double x2 = x * x;
  double term = x;
  double sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= 2.0 * x2 / (2.0 * n + 1.0);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return std::exp(x2) - kTwoOverSqrtPi * sum;
}

// Continued fraction erfcx(x) = (1/sqrt(pi)) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))),
// modified Lentz.
double erfcx_cf(double x) {
  constexpr double tiny = 1e-300;
  double f = x;
  double c = x;
  double d = 0.0;
  for (int n = 1; n < 5000; ++n) {
    const double an = 0.5 * n;
    d = x + an * d;
    if (std::abs(d) < tiny) d = tiny;
    c = x + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return kInvSqrtPi / f;
}

double betacf(double a, double b, double x) {
  constexpr int max_iter = 10000;
  constexpr double eps = 1e-16;
  constexpr double fpmin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

double log_beta(double a, double b) {
  // Density evaluators call this with the same (a, b) millions of times.
  thread_local double last_a = -1.0;
  thread_local double last_b = -1.0;
  thread_local double last_value = 0.0;
  if (a != last_a || b != last_b) {
    last_value = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    last_a = a;
    last_b = b;
  }
  return last_value;
}

// log I_x(a,b) evaluated directly by the continued fraction; valid when
// x < (a+1)/(a+b+2).
double log_beta_inc_direct(double a, double b, double x, double one_minus_x) {
  return a * std::log(x) + b * std::log(one_minus_x) - log_beta(a, b) +
         std::log(betacf(a, b, x) / a);
}

// P(|T| <= t) for integer nu, closed-form trigonometric series.
double t_central_mass_integer(double t, int nu) {
  const double at = std::abs(t);
  const double denom = std::sqrt(nu + at * at);
  const double sin_th = at / denom;
  const double cos_th = std::sqrt(static_cast<double>(nu)) / denom;
  const double cos2 = cos_th * cos_th;
  if (nu % 2 == 1) {
    const double theta = std::atan2(at, std::sqrt(static_cast<double>(nu)));
    if (nu == 1) return 2.0 * theta / std::numbers::pi;
    double term = cos_th;
    double sum = term;
    for (int p = 1; p + 2 <= nu - 2; p += 2) {
      term *= cos2 * (p + 1.0) / (p + 2.0);
      sum += term;
    }
    return 2.0 / std::numbers::pi * (theta + sin_th * sum);
  }
  double term = 1.0;
  double sum = 1.0;
  for (int p = 0; p + 2 <= nu - 2; p += 2) {
    term *= cos2 * (p + 1.0) / (p + 2.0);
    sum += term;
  }
  return sin_th * sum;
}

bool small_integer(double nu, int& out) {
  if (nu > 60.0 || nu < 1.0) return false;
  const double r = std::round(nu);
  if (r != nu) return false;
  out = static_cast<int>(r);
  return true;
}

// Lower tail P(T <= -|t|) and whether it came back in log form.
double t_lower_tail(double at, double nu) {
  int inu = 0;
  if (small_integer(nu, inu)) {
    const double mass = t_central_mass_integer(at, inu);
    if (mass <= 0.98) return 0.5 * (1.0 - mass);
  }
  const double t2 = at * at;
  const double x = nu / (nu + t2);
  const double omx = t2 / (nu + t2);
  return 0.5 * beta_inc(0.5 * nu, 0.5, x, omx);
}

double t_log_lower_tail(double at, double nu) {
  int inu = 0;
  if (small_integer(nu, inu)) {
    const double mass = t_central_mass_integer(at, inu);
    if (mass <= 0.98) return std::log(0.5 * (1.0 - mass));
  }
  const double t2 = at * at;
  const double x = nu / (nu + t2);
  const double omx = t2 / (nu + t2);
  const double a = 0.5 * nu;
  const double b = 0.5;
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::log(0.5) + log_beta_inc_direct(a, b, x, omx);
  }
  return std::log(0.5 * beta_inc(a, b, x, omx));
}

}  // namespace

double erfcx(double x) {
  if (std::isnan(x)) return x;
  if (x < 0.0) {
    if (x < -26.7) return std::numeric_limits<double>::infinity();
    return 2.0 * std::exp(x * x) - erfcx(-x);
  }
  if (x < 2.0) return erfcx_series(x);
  if (x > 1e7) {
    const double ix2 = 1.0 / (x * x);
    return kInvSqrtPi / x * (1.0 - 0.5 * ix2);
  }
  return erfcx_cf(x);
}

double normal_pdf(double x) { return std::exp(normal_logpdf(x)); }

double normal_logpdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double normal_cdf(double x) {
  if (x <= 0.0) return 0.5 * std::exp(-0.5 * x * x) * erfcx(-x / kSqrt2);
  return 1.0 - 0.5 * std::exp(-0.5 * x * x) * erfcx(x / kSqrt2);
}

double normal_logcdf(double x) {
  if (x <= 0.0) return std::log(0.5) - 0.5 * x * x + std::log(erfcx(-x / kSqrt2));
  return std::log1p(-0.5 * std::exp(-0.5 * x * x) * erfcx(x / kSqrt2));
}

double normal_quantile(double p) {
  if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
  if (!(p < 1.0)) return std::numeric_limits<double>::infinity();
  // Acklam's rational approximation, then Halley refinement.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int it = 0; it < 2; ++it) {
    const double e = (x <= 0.0) ? normal_cdf(x) - p : (1.0 - p) - (1.0 - normal_cdf(x));
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double phi_over_Phi(double xi) { return kSqrt2OverPi / erfcx(-xi / kSqrt2); }

double beta_inc(double a, double b, double x, double one_minus_x) {
  if (x <= 0.0) return 0.0;
  if (one_minus_x <= 0.0) return 1.0;
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_beta_inc_direct(a, b, x, one_minus_x));
  }
  return 1.0 - std::exp(log_beta_inc_direct(b, a, one_minus_x, x));
}

double beta_inc(double a, double b, double x) { return beta_inc(a, b, x, 1.0 - x); }

double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 10000; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  constexpr double fpmin = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

double student_t_logpdf(double t, double nu) {
  if (is_infinite_nu(nu)) return normal_logpdf(t);
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi) - 0.5 * (nu + 1.0) * std::log1p(t * t / nu);
}

double student_t_pdf(double t, double nu) { return std::exp(student_t_logpdf(t, nu)); }

double student_t_cdf(double t, double nu) {
  if (is_infinite_nu(nu)) return normal_cdf(t);
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = t_lower_tail(std::abs(t), nu);
  return t < 0.0 ? tail : 1.0 - tail;
}

double student_t_logcdf(double t, double nu) {
  if (is_infinite_nu(nu)) return normal_logcdf(t);
  if (t < 0.0) return t_log_lower_tail(-t, nu);
  return std::log1p(-t_lower_tail(t, nu));
}

double chi2_cdf(double x, double dof) { return gamma_p(0.5 * dof, 0.5 * x); }

double chi2_quantile(double p, double dof) {
  if (!(dof > 0.0)) throw InvalidParameter("chi2_quantile: dof must be positive");
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  // Wilson-Hilferty start.
  const double z = normal_quantile(p);
  const double h = 2.0 / (9.0 * dof);
  double x = dof * std::pow(std::max(1.0 - h + z * std::sqrt(h), 1e-3), 3.0);
  const double k2 = 0.5 * dof;
  const double log_norm = k2 * std::log(2.0) + std::lgamma(k2);
  for (int it = 0; it < 100; ++it) {
    const double f = chi2_cdf(x, dof) - p;
    const double logpdf = (k2 - 1.0) * std::log(x) - 0.5 * x - log_norm;
    const double pdf = std::exp(logpdf);
    if (!(pdf > 0.0)) break;
    double step = f / pdf;
    double next = x - step;
    while (next <= 0.0) {
      step *= 0.5;
      next = x - step;
    }
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, x)) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

}  // namespace skewtvb

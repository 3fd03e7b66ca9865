#pragma once

#include <cstddef>
#include <vector>

namespace skewtvb {

struct GaussLegendreRule {
  std::vector<double> nodes;  // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule, cached per n. Thread-safe.
const GaussLegendreRule& gauss_legendre(std::size_t n);

/// Composite Gauss-Legendre over [a, b] with `panels` equal panels.
template <class F>
double integrate_gl(F&& f, double a, double b, std::size_t panels = 8, std::size_t points = 16) {
  const GaussLegendreRule& rule = gauss_legendre(points);
  const double h = (b - a) / static_cast<double>(panels);
  double total = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p);
    const double mid = lo + 0.5 * h;
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      s += rule.weights[i] * f(mid + 0.5 * h * rule.nodes[i]);
    }
    total += 0.5 * h * s;
  }
  return total;
}

}  // namespace skewtvb

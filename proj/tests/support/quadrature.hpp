#ifndef BLIPTEST_TESTS_QUADRATURE_HPP
#define BLIPTEST_TESTS_QUADRATURE_HPP

#include <cmath>
#include <functional>

// Test-only numerical integration oracle, independent of the library's
// incomplete-gamma implementation.

namespace testsupport {

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double fa, double fm, double fb, double whole, double tol,
                                   int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol, int depth = 60) {
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth);
}

// Upper-tail chi-square probability by integrating the density from w.
// The integrand decays like exp(-x/2); truncation at w + 260 leaves a
// remainder far below 1e-16 for df <= 12.
inline double chi2_survival_quadrature(double w, int df) {
  if (w <= 0.0) return 1.0;
  double a = 0.5 * df;
  double log_norm = -a * std::log(2.0) - std::lgamma(a);
  auto density = [&](double x) {
    if (x <= 0.0) return 0.0;
    return std::exp(log_norm + (a - 1.0) * std::log(x) - 0.5 * x);
  };
  double hi = w + 260.0;
  // split at a few scale points so the adaptive rule sees the decay
  double mid = std::min(hi, w + 20.0);
  double tail = adaptive_simpson(density, w, mid, 1e-15) +
                adaptive_simpson(density, mid, hi, 1e-15);
  return tail;
}

} // namespace testsupport

#endif

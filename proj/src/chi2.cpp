#include "bliptest/chi2.hpp"

#include <cmath>
#include <limits>

#include "bliptest/errors.hpp"

namespace bliptest {

namespace {
constexpr int kMaxIter = 2000;
const double kEps = std::numeric_limits<double>::epsilon();
const double kFpMin = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon();

// Series representation of P(a, x); converges fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 1; n <= kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps)
      return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
  }
  throw Error(ErrorKind::statistical, "incomplete gamma series did not converge");
}

// Continued fraction for Q(a, x) by modified Lentz; for x >= a + 1.
double gamma_q_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kFpMin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = b + an / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= kEps)
      return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
  }
  throw Error(ErrorKind::statistical, "incomplete gamma continued fraction did not converge");
}
} // namespace

double log_gamma(double x) {
  // Lanczos approximation, g = 7, n = 9.
  static const double coef[9] = {
      0.99999999999980993,      676.5203681218851,     -1259.1392167224028,
      771.32342877765313,       -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,     9.9843695780195716e-6, 1.5056327351493116e-7};
  if (!(x > 0.0)) throw Error(ErrorKind::domain, "log_gamma requires a positive argument");
  if (x < 0.5) {
    // Reflection keeps accuracy for small arguments.
    return std::log(3.141592653589793238462643 / std::sin(3.141592653589793238462643 * x)) -
           log_gamma(1.0 - x);
  }
  double z = x - 1.0;
  double s = coef[0];
  for (int i = 1; i < 9; ++i) s += coef[i] / (z + i);
  double t = z + 7.5;
  return 0.5 * std::log(6.283185307179586476925287) + (z + 0.5) * std::log(t) - t + std::log(s);
}

double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw Error(ErrorKind::domain, "gamma_p requires x >= 0 and a > 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi2_survival(double w, int df) {
  if (df < 1) throw Error(ErrorKind::domain, "chi-square degrees of freedom must be >= 1");
  if (w < 0.0) throw Error(ErrorKind::domain, "chi-square statistic must be non-negative");
  if (w == 0.0) return 1.0;
  double a = 0.5 * df;
  double x = 0.5 * w;
  if (w < df + 2.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi2_upper_quantile(double p_upper, int df) {
  if (!(p_upper > 0.0 && p_upper < 1.0))
    throw Error(ErrorKind::domain, "quantile probability must lie in (0,1)");
  double lo = 0.0;
  double hi = df + 16.0;
  while (chi2_survival(hi, df) > p_upper) hi *= 2.0;
  // Bisection; the survival function is strictly decreasing.
  for (int it = 0; it < 200 && (hi - lo) > 1e-13 * (1.0 + hi); ++it) {
    double mid = 0.5 * (lo + hi);
    if (chi2_survival(mid, df) > p_upper)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

NoncentralTail noncentral_chi2_power(double lambda, int df, double alpha) {
  if (lambda < 0.0) throw Error(ErrorKind::domain, "noncentrality must be non-negative");
  double crit = chi2_upper_quantile(alpha, df);
  double half = 0.5 * lambda;
  // Poisson(lambda/2) weights in log space so large lambda cannot underflow.
  int mode = static_cast<int>(half);
  double span = 40.0 * std::sqrt(half + 1.0) + 40.0;
  int lo = std::max(0, static_cast<int>(half - span));
  int hi_bound = static_cast<int>(half + span) + 2;
  double mass = 0.0;
  double power = 0.0;
  for (int i = lo; i <= hi_bound; ++i) {
    double logw = (i == 0 && half == 0.0)
                      ? 0.0
                      : -half + i * std::log(half > 0 ? half : 1.0) - log_gamma(i + 1.0);
    double wgt = std::exp(logw);
    if (half == 0.0) wgt = (i == 0) ? 1.0 : 0.0;
    mass += wgt;
    if (wgt > 0.0) power += wgt * chi2_survival(crit, df + 2 * i);
    if (mass >= 1.0 - 1e-12 && i > mode) break;
  }
  return {lambda, power};
}

} // namespace bliptest

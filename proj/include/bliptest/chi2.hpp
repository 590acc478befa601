#ifndef BLIPTEST_CHI2_HPP
#define BLIPTEST_CHI2_HPP

namespace bliptest {

// log Gamma(x) for x > 0 (Lanczos).  Local implementation keeps results
// bit-identical across platforms and avoids the signgam global.
double log_gamma(double x);

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

// Upper-tail probability P(X > w) for X ~ chi-square with df degrees of
// freedom.  Series branch for w < df + 2, continued fraction otherwise;
// absolute error below 1e-12 over the tested range.
double chi2_survival(double w, int df);

// Upper quantile: the w with chi2_survival(w, df) == p_upper, by bisection.
double chi2_upper_quantile(double p_upper, int df);

struct NoncentralTail {
  double lambda; // noncentrality
  double power;  // P(chi2_{df,lambda} > critical)
};

// Tail probability of the noncentral chi-square at the central upper
// alpha quantile, evaluated as a Poisson(lambda/2) mixture of central
// chi-square tails truncated at mixture mass 1 - 1e-12.
NoncentralTail noncentral_chi2_power(double lambda, int df, double alpha);

} // namespace bliptest

#endif

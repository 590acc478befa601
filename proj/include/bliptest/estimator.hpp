#ifndef BLIPTEST_ESTIMATOR_HPP
#define BLIPTEST_ESTIMATOR_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "bliptest/blip_model.hpp"
#include "bliptest/point_effects.hpp"
#include "bliptest/seqdata.hpp"

namespace bliptest {

struct BlipEstimate {
  Eigen::VectorXd gamma;
  Eigen::MatrixXd cov_conditional;          // (C' Sigma^-1 C)^-1
  std::optional<Eigen::MatrixXd> cov_marginal; // bootstrap, when computed
  int n = 0;
  std::vector<Stratum> strata;              // row ordering of the design
  std::vector<std::string> basis_labels;
};

// Linear hypothesis H gamma = rho with H of full row rank l <= k.
struct Hypothesis {
  std::string name;
  Eigen::MatrixXd H;
  Eigen::VectorXd rho;

  int l() const { return static_cast<int>(H.rows()); }
  void validate(int k) const;
};

struct WaldResult {
  double W = 0.0;
  int df = 0;
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
};

// Generalized least squares of the point effects on the design matrix.
// Solved by whitening + SVD; the point-effect covariance must be positive
// definite (smallest eigenvalue > 1e-12 * largest) and the whitened design
// must have condition number below 1e12.
BlipEstimate gls(const PointEffectEstimate& effects, const DesignMatrix& design, int n = 0);

// Projection of the estimate onto {gamma : H gamma = rho} in the
// conditional-covariance metric; this is the GLS estimate under the
// constraint.  The returned conditional covariance is the projected one.
BlipEstimate restricted_gls(const BlipEstimate& est, const Hypothesis& hyp);

struct FitOptions {
  VarianceMode variance_mode = VarianceMode::sample;
};

// Full conditional pipeline: stratum means -> point effects -> empirical
// transitions -> design matrix -> GLS.
struct FitResult {
  BlipEstimate estimate;
  PointEffectEstimate point_effects;
  DesignMatrix design;
};

FitResult fit_blip(const SequentialDataset& ds, const SnmmSpec& snmm,
                   const FitOptions& options = {});

struct BootstrapResult {
  Eigen::MatrixXd cov;   // k x k marginal covariance of gamma
  int requested = 0;     // B
  int failed = 0;        // replicates dropped for estimability reasons
};

// Nonparametric bootstrap over subjects; each replicate reruns the full
// pipeline.  Replicates failing estimability are dropped; more than 10%
// failures aborts.  Output is identical for a fixed seed regardless of the
// worker count (per-replicate RNG streams, aggregation in replicate order).
BootstrapResult bootstrap_marginal_cov(const SequentialDataset& ds, const SnmmSpec& snmm, int B,
                                       uint64_t seed, const FitOptions& options = {},
                                       int threads = 1);

// Wald statistic W = (H g - rho)' {H cov(g) H'}^-1 (H g - rho) against the
// chi-square reference with l degrees of freedom; uses the marginal
// (bootstrap) covariance.
WaldResult wald(const BlipEstimate& est, const Hypothesis& hyp, double alpha);

struct PowerResult {
  double lambda = 0.0;
  double power = 0.0;
};

// Noncentrality and asymptotic power of the Wald test at a given truth.
PowerResult noncentral_power(const Hypothesis& hyp, const Eigen::VectorXd& gamma_true,
                             const Eigen::MatrixXd& cov, double alpha);

namespace detail {
// Shared solver; exposed for the medical workflow which assembles its own
// design and covariance blocks.
struct GlsCore {
  Eigen::VectorXd gamma;
  Eigen::MatrixXd cov;
  int rank = 0;
  double condition = 0.0;
};
GlsCore gls_solve(const Eigen::MatrixXd& C, const std::vector<Eigen::MatrixXd>& sigma_blocks,
                  const Eigen::VectorXd& theta);
} // namespace detail

} // namespace bliptest

#endif

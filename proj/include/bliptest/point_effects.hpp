#ifndef BLIPTEST_POINT_EFFECTS_HPP
#define BLIPTEST_POINT_EFFECTS_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "bliptest/seqdata.hpp"

namespace bliptest {

// Variance estimator for stratum means.
//   sample        per-cell sample variance / count (default, family-agnostic)
//   pooled_normal one pooled within-cell variance across all cells and times
//   plugin_family p(1-p)/n for bernoulli, mean/n for poisson
enum class VarianceMode { sample, pooled_normal, plugin_family };

VarianceMode variance_mode_from_string(const std::string& s);
std::string to_string(VarianceMode m);

struct CellStats {
  double mean = 0.0;
  int count = 0;
  double sample_variance = 0.0; // denominator count-1, 0 for singletons
};

std::map<Stratum, CellStats> stratum_means(const SequentialDataset& ds, int t);

struct PointEffectEntry {
  Stratum stratum; // z != 0
  double theta = 0.0;
};

// Point effects for one time with their covariance block.  Effects sharing
// a control cell are correlated through it; effects at different x are not.
struct TimePointEffects {
  std::vector<PointEffectEntry> entries;
  Eigen::MatrixXd sigma;
};

TimePointEffects estimate_point_effects(const SequentialDataset& ds, int t,
                                        VarianceMode mode = VarianceMode::sample);

// Stacked effects over all times in the fixed ordering (t, then x, then z)
// shared with the design matrix.  The covariance is block-diagonal across
// times: outcome resampling on fixed paths leaves cross-time blocks zero.
struct PointEffectEstimate {
  std::vector<PointEffectEntry> entries;
  std::vector<Eigen::MatrixXd> sigma_blocks; // one per time 1..T (possibly 0x0)

  std::vector<Stratum> strata() const;
  Eigen::VectorXd theta() const;
  Eigen::MatrixXd covariance() const; // block-diagonal assembly
};

PointEffectEstimate estimate_all_point_effects(const SequentialDataset& ds,
                                               VarianceMode mode = VarianceMode::sample);

// Identity-link quasi-likelihood mean model with binomial variance and
// dispersion fixed at 1, fitted by iteratively reweighted least squares.
// Terms name columns; "1" is the intercept and "z<t>" a treatment column.
struct MeanModelSpec {
  std::vector<std::string> terms;
  std::vector<std::string> treatment_terms;           // subset of terms carrying theta
  std::vector<std::pair<std::string, double>> subset; // fit on rows with column == value
};

struct RegressionFit {
  std::vector<std::string> terms;
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;
  int n = 0;
  int iterations = 0;
  bool clamped = false; // fitted mean left (0,1) at some iteration

  int term_index(const std::string& term) const;
  double coef(const std::string& term) const { return beta[term_index(term)]; }
  double var(const std::string& term) const {
    int j = term_index(term);
    return cov(j, j);
  }
};

RegressionFit regression_point_effects(const SequentialDataset& ds, const MeanModelSpec& spec);
RegressionFit regression_point_effects(const SequentialDataset& ds, const MeanModelSpec& spec,
                                       const Eigen::VectorXd* warm_start);

} // namespace bliptest

#endif

#ifndef BLIPTEST_MEDICAL_HPP
#define BLIPTEST_MEDICAL_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "bliptest/point_effects.hpp"
#include "bliptest/seqdata.hpp"

namespace bliptest {

// Two-period workflow for a bernoulli outcome with stationary covariates:
// identity-link quasi-likelihood mean models give the point effects
// (theta_1; theta_20, theta_21 per x2 level), proportions give the
// decomposition coefficients c_20, c_21, and the last period ties the blip
// effects to the point effects (gamma_2j = theta_2j).
struct MedicalOptions {
  std::vector<std::string> model1_covariates; // empty = all time-1 covariates
  std::vector<std::string> model2_covariates;
  bool auto_select = false;   // drop covariates with p > select_level, refit
  double select_level = 0.1;
  int bootstrap_B = 500;
  uint64_t seed = 1;
  double alpha = 0.05;
};

struct CoefficientReport {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;      // marginal (bootstrap)
  double ci_low = 0.0;  // estimate +- 1.96 se
  double ci_high = 0.0;
  double W = 0.0;       // Wald statistic for = 0
  double p_value = 1.0;
};

struct SelectionNote {
  std::string model;
  std::string term;
  double p_value = 1.0;
  bool dropped = false;
};

struct MedicalReport {
  // stage 1: fitted mean models
  RegressionFit model1;              // theta_1 = coefficient of z1
  RegressionFit model2_x2_0;         // theta_20 = coefficient of z2 on x2 = 0
  RegressionFit model2_x2_1;         // theta_21 = coefficient of z2 on x2 = 1
  std::vector<SelectionNote> selection;

  // stage 2: decomposition coefficients
  double c20 = 0.0;
  double c21 = 0.0;

  // stages 3-4
  Eigen::Vector3d theta;             // (theta_1, theta_20, theta_21)
  Eigen::Vector3d gamma;             // (gamma_1, gamma_20, gamma_21)
  Eigen::Matrix3d gamma_cov_marginal;
  Eigen::Matrix3d theta_cov_marginal;
  std::vector<CoefficientReport> blip;   // gamma_1, gamma_20, gamma_21 vs 0
  std::vector<CoefficientReport> point;  // theta_1, theta_20, theta_21 vs 0
  int bootstrap_requested = 0;
  int bootstrap_failed = 0;
  double alpha = 0.05;
};

MedicalReport run_medical(const SequentialDataset& ds, const MedicalOptions& opt, int threads);

} // namespace bliptest

#endif

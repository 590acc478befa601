#ifndef BLIPTEST_DETAIL_PIPELINE_HPP
#define BLIPTEST_DETAIL_PIPELINE_HPP

#include <Eigen/Dense>
#include <vector>

#include "bliptest/blip_model.hpp"
#include "bliptest/detail/encoded.hpp"
#include "bliptest/point_effects.hpp"

namespace bliptest::detail {

// Basis values tabulated per time and cell; shared across bootstrap
// replicates since they inherit the base dataset's level layout.
struct CompiledSnmm {
  int k = 0;
  std::vector<Eigen::MatrixXd> F; // per time: k x n_cells
};

CompiledSnmm compile_snmm(const SnmmSpec& snmm, const Encoded& e);

struct TransitionCounts {
  std::vector<std::vector<double>> base;  // per time: weight of each cell
  std::vector<std::vector<double>> joint; // per (t<s) pair: [cell_t * ncells_s + cell_s]
  int T = 0;

  int pair_index(int t, int s) const { // 1-based, t < s
    int a = t - 1, b = s - 1;
    return a * T - a * (a + 1) / 2 + (b - a - 1);
  }
};

TransitionCounts count_transitions(const Encoded& e);

struct GammaFit {
  Eigen::VectorXd gamma;
  Eigen::MatrixXd cov_conditional;
  std::vector<Stratum> strata;
  Eigen::VectorXd theta;
  std::vector<Eigen::MatrixXd> sigma_blocks;
  Eigen::MatrixXd C;
  int rank = 0;
  double condition = 0.0;
};

// The conditional pipeline on encoded data; the hot path for bootstrap and
// Monte Carlo loops.
GammaFit fit_gamma(const Encoded& e, const CompiledSnmm& snmm, VarianceMode mode);

double pooled_variance(const Encoded& e);
TimePointEffects time_point_effects(const Encoded& e, int t, VarianceMode mode, double pooled);
PointEffectEstimate all_point_effects(const Encoded& e, VarianceMode mode);

} // namespace bliptest::detail

#endif

#ifndef BLIPTEST_BLIP_MODEL_HPP
#define BLIPTEST_BLIP_MODEL_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "bliptest/seqdata.hpp"

namespace bliptest {

// Basis function f_j(t, x_t, z_t) of the linear blip-effect model.
// Two representable shapes: an indicator of a (t, x-set, z-set) cell, and
// a linear term z_t * g(x_t) active on a set of times.  Both vanish at
// z = 0: the blip of control is zero by definition.
struct IndicatorBasis {
  int t = 0;
  std::vector<double> x_in;
  std::vector<double> z_in; // must not contain 0
};

struct LinearBasis {
  std::vector<int> t_set;
  std::map<double, double> g; // per-level slope; absent level -> 0
};

struct BasisFunction {
  std::variant<IndicatorBasis, LinearBasis> fn;
  std::string label;

  double eval(int t, double x, double z) const;
};

struct SnmmSpec {
  std::vector<BasisFunction> basis;

  int k() const { return static_cast<int>(basis.size()); }
  std::vector<std::string> labels() const;
  // Checks the control constraint f_j(t, x, 0) = 0 structurally.
  void validate() const;
};

// Empirical or exact conditional distributions P(x_s, z_s | x_t, z_t) for
// time pairs t < s, stored as joint and base weights (counts for data,
// probability mass for exact tables).
class TransitionTable {
public:
  struct TimeLevels {
    std::vector<double> x_levels;
    std::vector<double> z_levels;
  };

  static TransitionTable from_weights(std::vector<TimeLevels> levels,
                                      std::vector<std::vector<double>> base,
                                      std::map<std::pair<int, int>, std::vector<double>> joint);

  int times() const { return static_cast<int>(levels_.size()); }
  const std::vector<double>& x_levels(int t) const { return levels_.at(t - 1).x_levels; }
  const std::vector<double>& z_levels(int t) const { return levels_.at(t - 1).z_levels; }

  double base_weight(int t, double x, double z) const;
  bool defined(int t, double x, double z) const { return base_weight(t, x, z) > 0.0; }

  // P(x_s = xs, z_s = zs | x_t = x, z_t = z); throws an estimability error
  // when the conditioning cell carries no weight.
  double prob(int t, double x, double z, int s, double xs, double zs) const;

private:
  int cell(int t, double x, double z) const;
  std::vector<TimeLevels> levels_;
  std::vector<std::vector<double>> base_;                     // per time
  std::map<std::pair<int, int>, std::vector<double>> joint_;  // (t,s) -> [cell_t][cell_s]
};

TransitionTable empirical_transitions(const SequentialDataset& ds);

// One row of the point-effect design: c_j(x_t; z_t) = f_j(x_t, z_t)
// + sum_{s>t} E{f_j(x_s, z_s) | x_t, z_t} - sum_{s>t} E{f_j(x_s, z_s) | x_t, z_t = 0}.
Eigen::VectorXd design_row(const SnmmSpec& snmm, const TransitionTable& transitions,
                           const Stratum& stratum);

struct DesignMatrix {
  Eigen::MatrixXd C;
  std::vector<Stratum> strata;
  std::vector<std::string> column_labels;
  int rank = 0;
  double condition = 0.0; // largest / smallest singular value
};

// Stacks design rows in the given stratum order and verifies column rank k
// (relative tolerance 1e-10); rank deficiency names a dependent column.
DesignMatrix build_design_matrix(const SnmmSpec& snmm, const TransitionTable& transitions,
                                 const std::vector<Stratum>& strata_order);

// Advisory diagnostic for the assignment condition: within each x_t level,
// a Pearson chi-square test of independence between z_t and z_{t-1}.
struct AssignmentCell {
  int t = 0;
  double x_level = 0.0;
  bool applicable = false; // false for degenerate tables
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  int n = 0;
};

struct AssignmentDiagnostic {
  std::vector<AssignmentCell> cells;
};

AssignmentDiagnostic check_assignment_condition(const SequentialDataset& ds);

} // namespace bliptest

#endif

#ifndef BLIPTEST_ORACLE_DGP_HPP
#define BLIPTEST_ORACLE_DGP_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "bliptest/blip_model.hpp"
#include "bliptest/seqdata.hpp"

namespace bliptest {

// Covariate point effect zeta(history; x_t) as a linear function of the
// realized history: intercept + sum_s z_coef[s] * z_s + sum_s x_coef[s] * x_s.
struct LinearForm {
  double intercept = 0.0;
  std::map<int, double> z_coef; // time -> coefficient
  std::map<int, double> x_coef;

  double eval(const std::vector<double>& x_hist, const std::vector<double>& z_hist) const;
};

// Realized history prefix in temporal order: (x_1, z_1, x_2, z_2, ...).
// Keys for covariate tables stop before x_t; keys for general treatment
// tables stop after x_t.
using HistoryKey = std::vector<double>;

// Full generative specification: probability tables, the blip-effect model
// with its true parameter, covariate point effects and the grand mean.
// Treatment assignment normally depends on the latest covariate only
// (the standard form); a per-time general table keyed by the full history
// can override it, which lets tests construct assignment-condition
// violations.
struct DgpSpec {
  int T = 0;
  std::vector<std::vector<double>> x_levels; // per time, sorted; time 1 may be the dummy {0}
  std::vector<std::vector<double>> z_levels; // per time, sorted, containing 0

  // P(x_t | x_1, z_1, ..., z_{t-1}); key for t=1 is empty.
  std::vector<std::map<HistoryKey, std::vector<double>>> covariate_given_history;
  // Standard form: P(z_t | x_t).
  std::vector<std::map<double, std::vector<double>>> treatment_given_covariate;
  // Optional override: P(z_t | x_1, z_1, ..., x_t). Empty map = use standard.
  std::vector<std::map<HistoryKey, std::vector<double>>> treatment_given_history;

  SnmmSpec snmm;
  Eigen::VectorXd gamma_true;
  // zeta[t-2] maps x_t level -> linear form, for t = 2..T; the lowest level
  // is the baseline with zero effect.
  std::vector<std::map<double, LinearForm>> zeta;
  double grand_mean = 0.0;
  OutcomeFamily family = OutcomeFamily::normal;
  double sigma = 1.0; // outcome SD, normal family only

  void validate() const;
  bool uses_general_assignment(int t) const {
    return !treatment_given_history[t - 1].empty();
  }
  // True when every treatment assignment depends on the latest covariate only.
  bool latest_covariate_assignment() const;
};

// Exhaustive path table: P(path) and the standard parameter E(Y | path)
// for every realization (x_1, z_1, ..., x_T, z_T).
struct StandardParams {
  std::vector<std::vector<int>> path_x;  // per path: x level index per time
  std::vector<std::vector<int>> path_z;
  std::vector<double> prob;
  std::vector<double> mu;

  double expected_outcome() const; // sum mu * prob
  int find(const std::vector<int>& xi, const std::vector<int>& zi) const;
};

// Construct the standard parameters that realize the spec's blip effects,
// covariate effects and grand mean.  For bernoulli every mu(path) must lie
// in (0,1) and for poisson above 0; violations name the offending path.
StandardParams build_standard_params(const DgpSpec& spec);

struct FullHistoryEffect {
  int t = 0;
  HistoryKey history; // (x_1, z_1, ..., x_t)
  double z = 0.0;
  double theta = 0.0;
};

struct ExactEffects {
  std::vector<Stratum> strata;       // (t, x, z != 0), canonical order
  Eigen::VectorXd theta_closed;     // forward decomposition in gamma and probabilities
  Eigen::VectorXd theta_enumerated; // full-path enumeration through mu(path)
  double max_route_discrepancy = 0.0;
  std::vector<FullHistoryEffect> full_history; // closed-form theta per full history
};

// Point effects computed two independent ways; the routes agree to 1e-10
// whenever the assignment condition holds.
ExactEffects exact_point_effects(const DgpSpec& spec);

// Population transition table P(x_s, z_s | x_t, z_t) from the exact path
// distribution.
TransitionTable exact_transitions(const DgpSpec& spec);

struct DecompositionCheck {
  std::vector<Stratum> strata;
  Eigen::VectorXd c_gamma;     // rows of C (exact transitions) times gamma_true
  Eigen::VectorXd theta_exact; // enumeration route
  double residual_inf = 0.0;
  bool latest_covariate_condition = true;
};

// The central oracle identity: with exact transitions, C gamma equals the
// exact point effects.  Reported, never thrown, so violations constructed
// on purpose can be observed.
DecompositionCheck exact_blip_decomposition_check(const DgpSpec& spec);

// Spec with its standard parameters precomputed; lets Monte Carlo loops
// amortize the path-table construction across many generated datasets.
struct PreparedDgp {
  DgpSpec spec;
  StandardParams params;
};

PreparedDgp prepare_dgp(const DgpSpec& spec);

// Sample n subjects; deterministic for a fixed seed on any platform and
// any worker count (per-subject RNG streams).
SequentialDataset generate_dataset(const DgpSpec& spec, int n, uint64_t seed);
SequentialDataset generate_dataset(const PreparedDgp& prepared, int n, uint64_t seed);

// The three shipped simulation specs (normal / bernoulli / poisson).
DgpSpec builtin_dgp(OutcomeFamily family);

} // namespace bliptest

#endif

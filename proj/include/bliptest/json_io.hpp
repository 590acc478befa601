#ifndef BLIPTEST_JSON_IO_HPP
#define BLIPTEST_JSON_IO_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "bliptest/estimator.hpp"
#include "bliptest/oracle_dgp.hpp"

namespace bliptest {

using json = nlohmann::json;

// SNMM document: a JSON array of basis entries
//   {"type":"indicator", "t":2, "x_in":[0], "z_in":[1], "label":"gamma20"}
//   {"type":"linear", "t_set":[1,2,3], "g":{"0":1,"1":1}}
SnmmSpec snmm_from_json(const json& j);
json snmm_to_json(const SnmmSpec& snmm);
SnmmSpec load_snmm_file(const std::string& path);

// Hypothesis document: {"name":"A0", "H":[[...]], "rho":[...]}
Hypothesis hypothesis_from_json(const json& j);
json hypothesis_to_json(const Hypothesis& h);
Hypothesis load_hypothesis_file(const std::string& path);

// DgpSpec document; conditional tables are keyed by comma-joined history
// values in temporal order (see README for the schema).
DgpSpec dgp_from_json(const json& j);
json dgp_to_json(const DgpSpec& spec);
DgpSpec load_dgp_file(const std::string& path);

struct StudyConfig {
  DgpSpec dgp;
  std::vector<int> n_list;
  int mc_reps = 1000;
  int bootstrap_B = 500;
  double alpha = 0.05;
  uint64_t seed = 1;
  std::vector<Hypothesis> hypotheses;
  VarianceMode variance_mode = VarianceMode::sample;

  void validate() const;
};

StudyConfig study_config_from_json(const json& j);
json study_config_to_json(const StudyConfig& cfg);
StudyConfig load_study_config_file(const std::string& path);

// The simulation hypothesis battery: one single-component hypothesis per
// gamma component plus the cross-time equality block, each at shifts
// {0, c, 2c}.  Requires the 9-dimensional parameter layout
// (gamma1, gamma2_0..3, gamma3_0..3); names are A0..J2.
std::vector<Hypothesis> paper_battery(const Eigen::VectorXd& gamma0, double c);

json load_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Numbers in report documents pass through fixed 12-significant-digit
// formatting so byte-identical output is stable across runs.
json report_num(double v);

} // namespace bliptest

#endif

#ifndef BLIPTEST_MC_STUDY_HPP
#define BLIPTEST_MC_STUDY_HPP

#include <optional>
#include <string>
#include <vector>

#include "bliptest/json_io.hpp"

namespace bliptest {

struct HypothesisRate {
  std::string name;
  int rejections = 0;
  int reps = 0;
  double rate = 0.0;
  double mc_se = 0.0; // sqrt(r (1 - r) / reps)
};

struct ReplicateRecord {
  int replicate = 0;
  uint64_t dataset_seed = 0;
  uint64_t bootstrap_seed = 0;
  bool ok = false;
  std::string error;
};

struct SampleSizeResult {
  int n = 0;
  std::vector<HypothesisRate> rates;
  Eigen::VectorXd gamma_mean;
  Eigen::VectorXd gamma_var;
  bool has_restricted = false; // present when a hypothesis named J0 exists
  Eigen::VectorXd restricted_mean;
  Eigen::VectorXd restricted_var;
  int failed = 0;
  std::vector<ReplicateRecord> replicates;
};

struct StudyResult {
  std::vector<SampleSizeResult> by_n;
};

// Full study: per replicate generate -> fit -> bootstrap -> test the whole
// battery; additionally tracks the estimate restricted by J0.  Replicate
// work is parallel; aggregation runs in replicate order, so output is
// identical for any worker count.  Aborts when over 10% of replicates fail.
StudyResult run_study(const StudyConfig& cfg, int threads);

// rate0/rate1/rate2 grouping of battery-style names (A0, A1, A2, ...).
struct ErrorRateRow {
  std::string label;
  int n = 0;
  std::optional<HypothesisRate> shift[3];
};
std::vector<ErrorRateRow> grouped_rates(const SampleSizeResult& r);

json study_report_json(const StudyConfig& cfg, const StudyResult& res);
std::string rates_csv(const StudyConfig& cfg, const StudyResult& res);
std::string estimates_csv(const StudyConfig& cfg, const StudyResult& res);

} // namespace bliptest

#endif

#ifndef BLIPTEST_SEQDATA_HPP
#define BLIPTEST_SEQDATA_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bliptest/errors.hpp"

namespace bliptest {

enum class OutcomeFamily { normal, bernoulli, poisson };

OutcomeFamily family_from_string(const std::string& s);
std::string to_string(OutcomeFamily f);
bool outcome_valid(OutcomeFamily f, double y);

// Addresses the conditional cell (x_t, z_t) the method works in; the
// estimation conditions on the latest covariate only.
struct Stratum {
  int t = 0;  // 1-based time index
  double x = 0.0;
  double z = 0.0;

  friend bool operator==(const Stratum& a, const Stratum& b) {
    return a.t == b.t && a.x == b.x && a.z == b.z;
  }
  friend bool operator<(const Stratum& a, const Stratum& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.x != b.x) return a.x < b.x;
    return a.z < b.z;
  }
};

std::string to_string(const Stratum& s);

struct CovariateColumn {
  std::string name;           // full CSV column name, e.g. "x2" or "x1_age"
  std::vector<double> values; // one per subject
};

struct TimeSlice {
  std::vector<CovariateColumn> covariates; // may be empty (dummy level 0)
  std::vector<double> treatment;           // z_t per subject
  std::vector<double> covariate_levels;    // sorted distinct stratification values
  std::vector<double> treatment_levels;    // sorted distinct values, always incl. 0
};

// Immutable sequential treatment data: n subjects x (x_1, z_1, ..., x_T,
// z_T, y).  Construction validates all invariants; afterwards the object
// is safe to share across threads.
class SequentialDataset {
public:
  // `slices` carry covariate columns + treatments; level sets are derived.
  // `ids` may be empty (internal datasets, e.g. bootstrap resamples).
  static SequentialDataset from_columns(std::vector<TimeSlice> slices,
                                        std::vector<double> outcomes,
                                        OutcomeFamily family,
                                        std::vector<std::string> ids = {});

  int times() const { return static_cast<int>(slices_.size()); }
  int size() const { return static_cast<int>(y_.size()); }
  OutcomeFamily family() const { return family_; }
  const std::vector<double>& outcomes() const { return y_; }
  double outcome(int i) const { return y_[i]; }
  const TimeSlice& slice(int t) const; // 1-based, range-checked
  const std::vector<std::string>& ids() const { return ids_; }

  // Stratification covariate value of subject i at time t: the single
  // covariate column when there is exactly one, the constant dummy 0 when
  // there is none.  Times with several covariate columns have no
  // stratification covariate and are rejected here.
  double stratum_x(int t, int i) const;
  double treatment(int t, int i) const { return slice(t).treatment[i]; }
  bool has_stratum_covariate(int t) const { return slice(t).covariates.size() <= 1; }

  // Column lookup for regression models; returns nullptr when absent.
  const CovariateColumn* find_covariate(const std::string& name) const;

  // New dataset drawn from this one by subject index (with repeats);
  // ids are dropped.
  SequentialDataset resample(const std::vector<uint32_t>& indices) const;

private:
  SequentialDataset() = default;
  std::vector<TimeSlice> slices_;
  std::vector<double> y_;
  OutcomeFamily family_ = OutcomeFamily::normal;
  std::vector<std::string> ids_;
};

// CSV ingestion.  Header names columns `id, x1, z1, x2, z2, ..., y` in
// temporal order; covariate columns are optional per time and several per
// time are allowed (`x{t}_{name}` or `x{t}{suffix}`).
SequentialDataset parse_dataset(std::istream& in, OutcomeFamily family);
SequentialDataset parse_dataset(const std::string& text, OutcomeFamily family);
SequentialDataset parse_dataset_file(const std::string& path, OutcomeFamily family);

void serialize_dataset(const SequentialDataset& ds, std::ostream& out);
std::string serialize_dataset(const SequentialDataset& ds);
void write_dataset_file(const SequentialDataset& ds, const std::string& path);

// Partition of all subjects by (x_t, z_t).
std::map<Stratum, std::vector<uint32_t>> stratum_cells(const SequentialDataset& ds, int t);

} // namespace bliptest

#endif

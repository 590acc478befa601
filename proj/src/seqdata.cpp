#include "bliptest/seqdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "bliptest/util.hpp"

namespace bliptest {

OutcomeFamily family_from_string(const std::string& s) {
  if (s == "normal") return OutcomeFamily::normal;
  if (s == "bernoulli") return OutcomeFamily::bernoulli;
  if (s == "poisson") return OutcomeFamily::poisson;
  throw Error(ErrorKind::config, "unknown outcome family '" + s + "'");
}

std::string to_string(OutcomeFamily f) {
  switch (f) {
    case OutcomeFamily::normal: return "normal";
    case OutcomeFamily::bernoulli: return "bernoulli";
    case OutcomeFamily::poisson: return "poisson";
  }
  return "?";
}

bool outcome_valid(OutcomeFamily f, double y) {
  if (!std::isfinite(y)) return false;
  switch (f) {
    case OutcomeFamily::normal: return true;
    case OutcomeFamily::bernoulli: return y == 0.0 || y == 1.0;
    case OutcomeFamily::poisson: return y >= 0.0 && y == std::floor(y);
  }
  return false;
}

std::string to_string(const Stratum& s) {
  return strf("(t=%d, x=%s, z=%s)", s.t, format_level(s.x).c_str(), format_level(s.z).c_str());
}

namespace {

std::vector<double> sorted_distinct(const std::vector<double>& v) {
  std::vector<double> out(v);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

} // namespace

SequentialDataset SequentialDataset::from_columns(std::vector<TimeSlice> slices,
                                                  std::vector<double> outcomes,
                                                  OutcomeFamily family,
                                                  std::vector<std::string> ids) {
  if (slices.empty()) throw Error(ErrorKind::domain, "dataset needs at least one treatment time");
  size_t n = outcomes.size();
  if (n == 0) throw Error(ErrorKind::domain, "dataset is empty");
  for (size_t t = 0; t < slices.size(); ++t) {
    auto& sl = slices[t];
    if (sl.treatment.size() != n)
      throw Error(ErrorKind::domain,
                  strf("treatment column z%zu has %zu values, expected %zu", t + 1,
                       sl.treatment.size(), n));
    for (const auto& col : sl.covariates) {
      if (col.values.size() != n)
        throw Error(ErrorKind::domain,
                    strf("covariate column %s has %zu values, expected %zu", col.name.c_str(),
                         col.values.size(), n));
      for (double v : col.values)
        if (!std::isfinite(v))
          throw Error(ErrorKind::domain, "non-finite covariate value in column " + col.name);
    }
    for (double z : sl.treatment)
      if (!std::isfinite(z))
        throw Error(ErrorKind::domain, strf("non-finite treatment value at time %zu", t + 1));
    sl.treatment_levels = sorted_distinct(sl.treatment);
    // The control level is part of the design even when unobserved.
    if (!std::binary_search(sl.treatment_levels.begin(), sl.treatment_levels.end(), 0.0)) {
      sl.treatment_levels.insert(
          std::lower_bound(sl.treatment_levels.begin(), sl.treatment_levels.end(), 0.0), 0.0);
    }
    if (sl.covariates.size() == 1)
      sl.covariate_levels = sorted_distinct(sl.covariates[0].values);
    else if (sl.covariates.empty())
      sl.covariate_levels = {0.0};
    else
      sl.covariate_levels.clear(); // no single stratification covariate
  }
  for (size_t i = 0; i < n; ++i) {
    if (!outcome_valid(family, outcomes[i]))
      throw Error(ErrorKind::domain,
                  strf("outcome %s in row %zu is invalid for family %s",
                       format_double(outcomes[i]).c_str(), i + 1, to_string(family).c_str()));
  }
  if (!ids.empty()) {
    if (ids.size() != n) throw Error(ErrorKind::domain, "id column length mismatch");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
      if (!seen.insert(id).second)
        throw Error(ErrorKind::domain, "duplicate subject id '" + id + "'");
  }
  SequentialDataset ds;
  ds.slices_ = std::move(slices);
  ds.y_ = std::move(outcomes);
  ds.family_ = family;
  ds.ids_ = std::move(ids);
  return ds;
}

const TimeSlice& SequentialDataset::slice(int t) const {
  if (t < 1 || t > times())
    throw Error(ErrorKind::domain, strf("time index %d out of range 1..%d", t, times()));
  return slices_[t - 1];
}

double SequentialDataset::stratum_x(int t, int i) const {
  const TimeSlice& sl = slice(t);
  if (sl.covariates.empty()) return 0.0;
  if (sl.covariates.size() == 1) return sl.covariates[0].values[i];
  throw Error(ErrorKind::domain,
              strf("time %d has %zu covariate columns; stratified estimation needs at most one",
                   t, sl.covariates.size()));
}

const CovariateColumn* SequentialDataset::find_covariate(const std::string& name) const {
  for (const auto& sl : slices_)
    for (const auto& col : sl.covariates)
      if (col.name == name) return &col;
  return nullptr;
}

SequentialDataset SequentialDataset::resample(const std::vector<uint32_t>& indices) const {
  std::vector<TimeSlice> slices(slices_.size());
  for (size_t t = 0; t < slices_.size(); ++t) {
    const auto& src = slices_[t];
    auto& dst = slices[t];
    dst.covariates.resize(src.covariates.size());
    for (size_t c = 0; c < src.covariates.size(); ++c) {
      dst.covariates[c].name = src.covariates[c].name;
      dst.covariates[c].values.reserve(indices.size());
      for (uint32_t i : indices) dst.covariates[c].values.push_back(src.covariates[c].values[i]);
    }
    dst.treatment.reserve(indices.size());
    for (uint32_t i : indices) dst.treatment.push_back(src.treatment[i]);
  }
  std::vector<double> y;
  y.reserve(indices.size());
  for (uint32_t i : indices) y.push_back(y_[i]);
  return from_columns(std::move(slices), std::move(y), family_);
}

namespace {

struct ColumnRef {
  enum Kind { id, covariate, treatment, outcome } kind;
  int t = 0;         // time for covariate/treatment
  std::string name;  // full column name
};

// Header layout: id first, y last, z1..zT present exactly once.  A
// covariate column `x<digits>[rest]` belongs to the time given by the
// longest digit prefix that is a valid time index; this accepts both
// `x2_stage` and compact names like `x13` (time 1) when T < 13.
std::vector<ColumnRef> parse_header(const std::string& line) {
  std::vector<std::string> names;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\r')) tok.pop_back();
    while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
    names.push_back(tok);
  }
  if (names.size() < 3 || names.front() != "id" || names.back() != "y")
    throw Error(ErrorKind::parse, "header must start with 'id' and end with 'y'");

  int T = 0;
  for (const auto& nm : names) {
    if (nm.size() >= 2 && nm[0] == 'z' &&
        std::all_of(nm.begin() + 1, nm.end(), [](char c) { return c >= '0' && c <= '9'; }))
      T = std::max(T, std::atoi(nm.c_str() + 1));
  }
  if (T < 1) throw Error(ErrorKind::parse, "header has no treatment column z1..zT");

  std::vector<ColumnRef> cols;
  std::set<int> seen_z;
  for (size_t i = 0; i < names.size(); ++i) {
    const std::string& nm = names[i];
    if (i == 0) {
      cols.push_back({ColumnRef::id, 0, nm});
    } else if (i + 1 == names.size()) {
      cols.push_back({ColumnRef::outcome, 0, nm});
    } else if (nm.size() >= 2 && nm[0] == 'z' &&
               std::all_of(nm.begin() + 1, nm.end(),
                           [](char c) { return c >= '0' && c <= '9'; })) {
      int t = std::atoi(nm.c_str() + 1);
      if (t < 1 || t > T) throw Error(ErrorKind::parse, "treatment column out of range: " + nm);
      if (!seen_z.insert(t).second)
        throw Error(ErrorKind::parse, "duplicate treatment column " + nm);
      cols.push_back({ColumnRef::treatment, t, nm});
    } else if (nm.size() >= 2 && nm[0] == 'x' && nm[1] >= '0' && nm[1] <= '9') {
      size_t d = 1;
      while (d < nm.size() && nm[d] >= '0' && nm[d] <= '9') ++d;
      int t = 0;
      // longest digit prefix still a valid time index
      for (size_t len = d - 1; len >= 1; --len) {
        int cand = std::atoi(nm.substr(1, len).c_str());
        if (cand >= 1 && cand <= T) {
          t = cand;
          break;
        }
        if (len == 1) break;
      }
      if (t == 0) throw Error(ErrorKind::parse, "covariate column has no valid time index: " + nm);
      cols.push_back({ColumnRef::covariate, t, nm});
    } else {
      throw Error(ErrorKind::parse, "unrecognized column name '" + nm + "'");
    }
  }
  for (int t = 1; t <= T; ++t)
    if (!seen_z.count(t))
      throw Error(ErrorKind::parse, strf("missing treatment column z%d", t));
  return cols;
}

double parse_number(const std::string& tok, size_t line_no, const std::string& col) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw Error(ErrorKind::parse,
                strf("line %zu: cannot parse value '%s' in column %s", line_no, tok.c_str(),
                     col.c_str()));
  return v;
}

} // namespace

SequentialDataset parse_dataset(std::istream& in, OutcomeFamily family) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::parse, "missing header row");
  auto cols = parse_header(line);
  int T = 0;
  for (const auto& c : cols) T = std::max(T, c.t);

  std::vector<TimeSlice> slices(T);
  for (const auto& c : cols)
    if (c.kind == ColumnRef::covariate) slices[c.t - 1].covariates.push_back({c.name, {}});

  std::vector<double> y;
  std::vector<std::string> ids;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> toks;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) toks.push_back(tok);
    if (toks.size() != cols.size())
      throw Error(ErrorKind::parse,
                  strf("line %zu: expected %zu fields, found %zu", line_no, cols.size(),
                       toks.size()));
    size_t cov_slot = 0;
    std::vector<size_t> cov_count(T, 0);
    for (size_t c = 0; c < cols.size(); ++c) {
      const auto& ref = cols[c];
      switch (ref.kind) {
        case ColumnRef::id: ids.push_back(toks[c]); break;
        case ColumnRef::outcome: {
          double v = parse_number(toks[c], line_no, ref.name);
          if (!outcome_valid(family, v))
            throw Error(ErrorKind::domain,
                        strf("line %zu: outcome %s invalid for family %s", line_no,
                             toks[c].c_str(), to_string(family).c_str()));
          y.push_back(v);
          break;
        }
        case ColumnRef::treatment:
          slices[ref.t - 1].treatment.push_back(parse_number(toks[c], line_no, ref.name));
          break;
        case ColumnRef::covariate: {
          auto& sl = slices[ref.t - 1];
          sl.covariates[cov_count[ref.t - 1]++].values.push_back(
              parse_number(toks[c], line_no, ref.name));
          break;
        }
      }
    }
    (void)cov_slot;
  }
  if (y.empty()) throw Error(ErrorKind::parse, "dataset has a header but no rows");
  return SequentialDataset::from_columns(std::move(slices), std::move(y), family, std::move(ids));
}

SequentialDataset parse_dataset(const std::string& text, OutcomeFamily family) {
  std::istringstream ss(text);
  return parse_dataset(ss, family);
}

SequentialDataset parse_dataset_file(const std::string& path, OutcomeFamily family) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot open dataset file " + path);
  return parse_dataset(f, family);
}

void serialize_dataset(const SequentialDataset& ds, std::ostream& out) {
  out << "id";
  for (int t = 1; t <= ds.times(); ++t) {
    for (const auto& col : ds.slice(t).covariates) out << ',' << col.name;
    out << ",z" << t;
  }
  out << ",y\n";
  int n = ds.size();
  for (int i = 0; i < n; ++i) {
    if (ds.ids().empty())
      out << (i + 1);
    else
      out << ds.ids()[i];
    for (int t = 1; t <= ds.times(); ++t) {
      for (const auto& col : ds.slice(t).covariates) out << ',' << format_double(col.values[i]);
      out << ',' << format_double(ds.treatment(t, i));
    }
    out << ',' << format_double(ds.outcome(i)) << '\n';
  }
}

std::string serialize_dataset(const SequentialDataset& ds) {
  std::ostringstream ss;
  serialize_dataset(ds, ss);
  return ss.str();
}

void write_dataset_file(const SequentialDataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot write dataset file " + path);
  serialize_dataset(ds, f);
}

std::map<Stratum, std::vector<uint32_t>> stratum_cells(const SequentialDataset& ds, int t) {
  std::map<Stratum, std::vector<uint32_t>> cells;
  int n = ds.size();
  for (int i = 0; i < n; ++i) {
    Stratum s{t, ds.stratum_x(t, i), ds.treatment(t, i)};
    cells[s].push_back(static_cast<uint32_t>(i));
  }
  return cells;
}

} // namespace bliptest

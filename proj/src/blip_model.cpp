#include "bliptest/blip_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bliptest/chi2.hpp"
#include "bliptest/detail/encoded.hpp"
#include "bliptest/util.hpp"

namespace bliptest {

double BasisFunction::eval(int t, double x, double z) const {
  if (const auto* ind = std::get_if<IndicatorBasis>(&fn)) {
    if (t != ind->t) return 0.0;
    if (std::find(ind->x_in.begin(), ind->x_in.end(), x) == ind->x_in.end()) return 0.0;
    if (std::find(ind->z_in.begin(), ind->z_in.end(), z) == ind->z_in.end()) return 0.0;
    return 1.0;
  }
  const auto& lin = std::get<LinearBasis>(fn);
  if (std::find(lin.t_set.begin(), lin.t_set.end(), t) == lin.t_set.end()) return 0.0;
  auto it = lin.g.find(x);
  return it == lin.g.end() ? 0.0 : z * it->second;
}

std::vector<std::string> SnmmSpec::labels() const {
  std::vector<std::string> out;
  out.reserve(basis.size());
  for (size_t j = 0; j < basis.size(); ++j)
    out.push_back(basis[j].label.empty() ? strf("gamma%zu", j + 1) : basis[j].label);
  return out;
}

void SnmmSpec::validate() const {
  if (basis.empty()) throw Error(ErrorKind::config, "SNMM has no basis functions");
  for (size_t j = 0; j < basis.size(); ++j) {
    if (const auto* ind = std::get_if<IndicatorBasis>(&basis[j].fn)) {
      if (ind->t < 1)
        throw Error(ErrorKind::config, strf("basis %zu: indicator time must be >= 1", j + 1));
      if (ind->x_in.empty() || ind->z_in.empty())
        throw Error(ErrorKind::config, strf("basis %zu: empty indicator level set", j + 1));
      if (std::find(ind->z_in.begin(), ind->z_in.end(), 0.0) != ind->z_in.end())
        throw Error(ErrorKind::config,
                    strf("basis %zu: indicator includes the control level; the blip of "
                         "control is zero by definition",
                         j + 1));
    } else {
      const auto& lin = std::get<LinearBasis>(basis[j].fn);
      if (lin.t_set.empty())
        throw Error(ErrorKind::config, strf("basis %zu: linear term has an empty time set", j + 1));
    }
  }
}

TransitionTable TransitionTable::from_weights(
    std::vector<TimeLevels> levels, std::vector<std::vector<double>> base,
    std::map<std::pair<int, int>, std::vector<double>> joint) {
  TransitionTable t;
  t.levels_ = std::move(levels);
  t.base_ = std::move(base);
  t.joint_ = std::move(joint);
  return t;
}

int TransitionTable::cell(int t, double x, double z) const {
  const TimeLevels& lv = levels_.at(t - 1);
  auto xi = std::lower_bound(lv.x_levels.begin(), lv.x_levels.end(), x);
  auto zi = std::lower_bound(lv.z_levels.begin(), lv.z_levels.end(), z);
  if (xi == lv.x_levels.end() || *xi != x || zi == lv.z_levels.end() || *zi != z)
    throw Error(ErrorKind::domain,
                strf("level %s not present at time %d", to_string(Stratum{t, x, z}).c_str(), t));
  return static_cast<int>((xi - lv.x_levels.begin()) * lv.z_levels.size() +
                          (zi - lv.z_levels.begin()));
}

double TransitionTable::base_weight(int t, double x, double z) const {
  return base_.at(t - 1)[cell(t, x, z)];
}

double TransitionTable::prob(int t, double x, double z, int s, double xs, double zs) const {
  if (t >= s) throw Error(ErrorKind::domain, "transition requires t < s");
  double b = base_weight(t, x, z);
  if (b <= 0.0)
    throw Error(ErrorKind::estimability,
                "transition cell " + to_string(Stratum{t, x, z}) + " has no observations");
  auto it = joint_.find({t, s});
  if (it == joint_.end()) throw Error(ErrorKind::domain, "transition pair not tabulated");
  int ct = cell(t, x, z);
  int cs = cell(s, xs, zs);
  int ncs = static_cast<int>(levels_.at(s - 1).x_levels.size() * levels_.at(s - 1).z_levels.size());
  return it->second[static_cast<size_t>(ct) * ncs + cs] / b;
}

TransitionTable empirical_transitions(const SequentialDataset& ds) {
  detail::Encoded e = detail::encode(ds);
  std::vector<TransitionTable::TimeLevels> levels(e.T);
  std::vector<std::vector<double>> base(e.T);
  for (int t = 0; t < e.T; ++t) {
    levels[t] = {e.times[t].x_levels, e.times[t].z_levels};
    base[t].assign(e.times[t].n_cells(), 0.0);
    int nz = static_cast<int>(e.times[t].z_levels.size());
    for (int i = 0; i < e.n; ++i) base[t][e.times[t].xi[i] * nz + e.times[t].zi[i]] += 1.0;
  }
  std::map<std::pair<int, int>, std::vector<double>> joint;
  for (int t = 0; t < e.T; ++t) {
    int nzt = static_cast<int>(e.times[t].z_levels.size());
    for (int s = t + 1; s < e.T; ++s) {
      int nzs = static_cast<int>(e.times[s].z_levels.size());
      int ncs = e.times[s].n_cells();
      std::vector<double> m(static_cast<size_t>(e.times[t].n_cells()) * ncs, 0.0);
      for (int i = 0; i < e.n; ++i) {
        int ct = e.times[t].xi[i] * nzt + e.times[t].zi[i];
        int cs = e.times[s].xi[i] * nzs + e.times[s].zi[i];
        m[static_cast<size_t>(ct) * ncs + cs] += 1.0;
      }
      joint[{t + 1, s + 1}] = std::move(m);
    }
  }
  return TransitionTable::from_weights(std::move(levels), std::move(base), std::move(joint));
}

Eigen::VectorXd design_row(const SnmmSpec& snmm, const TransitionTable& transitions,
                           const Stratum& stratum) {
  if (stratum.z == 0.0)
    throw Error(ErrorKind::domain, "design rows exist only for treated strata (z != 0)");
  int T = transitions.times();
  int k = snmm.k();
  Eigen::VectorXd row(k);
  for (int j = 0; j < k; ++j) row[j] = snmm.basis[j].eval(stratum.t, stratum.x, stratum.z);
  if (stratum.t >= T) return row;
  for (const double z0 : {stratum.z, 0.0}) {
    if (!transitions.defined(stratum.t, stratum.x, z0))
      throw Error(ErrorKind::estimability,
                  "transition cell " + to_string(Stratum{stratum.t, stratum.x, z0}) +
                      " has no observations");
  }
  for (int s = stratum.t + 1; s <= T; ++s) {
    for (double xs : transitions.x_levels(s)) {
      for (double zs : transitions.z_levels(s)) {
        double p1 = transitions.prob(stratum.t, stratum.x, stratum.z, s, xs, zs);
        double p0 = transitions.prob(stratum.t, stratum.x, 0.0, s, xs, zs);
        if (p1 == 0.0 && p0 == 0.0) continue;
        for (int j = 0; j < k; ++j) {
          double f = snmm.basis[j].eval(s, xs, zs);
          if (f != 0.0) row[j] += f * (p1 - p0);
        }
      }
    }
  }
  return row;
}

DesignMatrix build_design_matrix(const SnmmSpec& snmm, const TransitionTable& transitions,
                                 const std::vector<Stratum>& strata_order) {
  int k = snmm.k();
  DesignMatrix d;
  d.strata = strata_order;
  d.column_labels = snmm.labels();
  d.C.resize(static_cast<Eigen::Index>(strata_order.size()), k);
  for (size_t r = 0; r < strata_order.size(); ++r)
    d.C.row(static_cast<Eigen::Index>(r)) = design_row(snmm, transitions, strata_order[r]).transpose();

  if (d.C.rows() < k)
    throw Error(ErrorKind::identifiability,
                strf("design has %d rows but %d parameters", static_cast<int>(d.C.rows()), k));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(d.C);
  double smax = svd.singularValues()(0);
  double tol = 1e-10 * smax;
  int rank = 0;
  for (int j = 0; j < svd.singularValues().size(); ++j)
    if (svd.singularValues()(j) > tol) ++rank;
  d.rank = rank;
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  d.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (rank < k) {
    // Column pivoting puts a dependent column last; report it by label.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.C);
    qr.setThreshold(1e-10);
    auto perm = qr.colsPermutation().indices();
    int dep = perm(k - 1);
    throw Error(ErrorKind::identifiability,
                strf("design matrix has rank %d < %d; column '%s' is linearly dependent "
                     "on the others",
                     rank, k, d.column_labels[dep].c_str()));
  }
  return d;
}

AssignmentDiagnostic check_assignment_condition(const SequentialDataset& ds) {
  AssignmentDiagnostic diag;
  detail::Encoded e = detail::encode(ds);
  for (int t = 2; t <= e.T; ++t) {
    const auto& cur = e.times[t - 1];
    const auto& prev = e.times[t - 2];
    int nr = static_cast<int>(prev.z_levels.size());
    int nc = static_cast<int>(cur.z_levels.size());
    for (size_t xl = 0; xl < cur.x_levels.size(); ++xl) {
      std::vector<double> table(static_cast<size_t>(nr) * nc, 0.0);
      int n = 0;
      for (int i = 0; i < e.n; ++i) {
        if (cur.xi[i] != xl) continue;
        table[static_cast<size_t>(prev.zi[i]) * nc + cur.zi[i]] += 1.0;
        ++n;
      }
      AssignmentCell cell;
      cell.t = t;
      cell.x_level = cur.x_levels[xl];
      cell.n = n;
      std::vector<double> rowsum(nr, 0.0), colsum(nc, 0.0);
      for (int r = 0; r < nr; ++r)
        for (int c = 0; c < nc; ++c) {
          rowsum[r] += table[static_cast<size_t>(r) * nc + c];
          colsum[c] += table[static_cast<size_t>(r) * nc + c];
        }
      int rows_used = static_cast<int>(std::count_if(rowsum.begin(), rowsum.end(),
                                                     [](double v) { return v > 0; }));
      int cols_used = static_cast<int>(std::count_if(colsum.begin(), colsum.end(),
                                                     [](double v) { return v > 0; }));
      if (n == 0 || rows_used < 2 || cols_used < 2) {
        cell.applicable = false;
        diag.cells.push_back(cell);
        continue;
      }
      double stat = 0.0;
      for (int r = 0; r < nr; ++r) {
        if (rowsum[r] == 0) continue;
        for (int c = 0; c < nc; ++c) {
          if (colsum[c] == 0) continue;
          double expect = rowsum[r] * colsum[c] / n;
          double obs = table[static_cast<size_t>(r) * nc + c];
          stat += (obs - expect) * (obs - expect) / expect;
        }
      }
      cell.applicable = true;
      cell.statistic = stat;
      cell.df = (rows_used - 1) * (cols_used - 1);
      cell.p_value = chi2_survival(stat, cell.df);
      diag.cells.push_back(cell);
    }
  }
  return diag;
}

} // namespace bliptest

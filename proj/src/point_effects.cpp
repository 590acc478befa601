#include "bliptest/point_effects.hpp"

#include <algorithm>
#include <cmath>

#include "bliptest/detail/encoded.hpp"
#include "bliptest/detail/pipeline.hpp"
#include "bliptest/util.hpp"

namespace bliptest {

VarianceMode variance_mode_from_string(const std::string& s) {
  if (s == "sample") return VarianceMode::sample;
  if (s == "pooled_normal") return VarianceMode::pooled_normal;
  if (s == "plugin_family") return VarianceMode::plugin_family;
  throw Error(ErrorKind::config, "unknown variance mode '" + s + "'");
}

std::string to_string(VarianceMode m) {
  switch (m) {
    case VarianceMode::sample: return "sample";
    case VarianceMode::pooled_normal: return "pooled_normal";
    case VarianceMode::plugin_family: return "plugin_family";
  }
  return "?";
}

std::map<Stratum, CellStats> stratum_means(const SequentialDataset& ds, int t) {
  detail::Encoded e = detail::encode(ds);
  detail::CellStatsArrays a = detail::cell_stats(e, t);
  const auto& et = e.times[t - 1];
  std::map<Stratum, CellStats> out;
  int nz = static_cast<int>(et.z_levels.size());
  for (size_t xi = 0; xi < et.x_levels.size(); ++xi) {
    for (int zi = 0; zi < nz; ++zi) {
      int c = static_cast<int>(xi) * nz + zi;
      if (a.count[c] == 0) continue;
      out[Stratum{t, et.x_levels[xi], et.z_levels[zi]}] =
          CellStats{a.mean[c], a.count[c], a.svar[c]};
    }
  }
  return out;
}

namespace detail {

// Pooled within-cell sample variance across all cells at all times.
double pooled_variance(const Encoded& e) {
  double ss = 0.0;
  long long df = 0;
  for (int t = 1; t <= e.T; ++t) {
    CellStatsArrays a = cell_stats(e, t);
    for (size_t c = 0; c < a.count.size(); ++c) {
      if (a.count[c] > 1) {
        ss += a.svar[c] * (a.count[c] - 1);
        df += a.count[c] - 1;
      }
    }
  }
  if (df <= 0)
    throw Error(ErrorKind::statistical, "pooled variance undefined: every cell is a singleton");
  return ss / static_cast<double>(df);
}

// Variance of one cell mean under the chosen mode.
double mean_variance(const CellStatsArrays& a, int cell, VarianceMode mode, OutcomeFamily family,
                     double pooled) {
  int n = a.count[cell];
  switch (mode) {
    case VarianceMode::sample: return a.svar[cell] / n;
    case VarianceMode::pooled_normal: return pooled / n;
    case VarianceMode::plugin_family:
      switch (family) {
        case OutcomeFamily::bernoulli: {
          double p = a.mean[cell];
          return p * (1.0 - p) / n;
        }
        case OutcomeFamily::poisson: return a.mean[cell] / n;
        case OutcomeFamily::normal:
          throw Error(ErrorKind::statistical,
                      "plugin_family variance is undefined for the normal family; use "
                      "sample or pooled_normal");
      }
  }
  return 0.0;
}

TimePointEffects time_point_effects(const Encoded& e, int t, VarianceMode mode, double pooled) {
  const EncodedTime& et = e.times[t - 1];
  CellStatsArrays a = cell_stats(e, t);
  int nz = static_cast<int>(et.z_levels.size());

  TimePointEffects out;
  struct Slot {
    int xi, zi, cell, control_cell;
  };
  std::vector<Slot> slots;
  for (size_t xi = 0; xi < et.x_levels.size(); ++xi) {
    int control_cell = static_cast<int>(xi) * nz + et.control;
    for (int zi = 0; zi < nz; ++zi) {
      if (zi == et.control) continue;
      int c = static_cast<int>(xi) * nz + zi;
      if (a.count[c] == 0) continue; // unobserved treated cell: nothing to report
      if (a.count[control_cell] == 0)
        throw Error(ErrorKind::estimability,
                    "stratum " + to_string(Stratum{t, et.x_levels[xi], et.z_levels[zi]}) +
                        " has no control observations (x=" + format_level(et.x_levels[xi]) +
                        ", z=0 cell is empty)");
      slots.push_back({static_cast<int>(xi), zi, c, control_cell});
      out.entries.push_back(
          {Stratum{t, et.x_levels[xi], et.z_levels[zi]}, a.mean[c] - a.mean[control_cell]});
    }
  }
  int m = static_cast<int>(slots.size());
  out.sigma = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    double v_treat = mean_variance(a, slots[i].cell, mode, e.family, pooled);
    double v_ctrl = mean_variance(a, slots[i].control_cell, mode, e.family, pooled);
    out.sigma(i, i) = v_treat + v_ctrl;
    for (int j = i + 1; j < m; ++j) {
      if (slots[j].xi == slots[i].xi) {
        // shared control cell
        out.sigma(i, j) = v_ctrl;
        out.sigma(j, i) = v_ctrl;
      }
    }
  }
  return out;
}

PointEffectEstimate all_point_effects(const Encoded& e, VarianceMode mode) {
  double pooled = mode == VarianceMode::pooled_normal ? pooled_variance(e) : 0.0;
  PointEffectEstimate out;
  out.sigma_blocks.reserve(e.T);
  for (int t = 1; t <= e.T; ++t) {
    TimePointEffects tp = time_point_effects(e, t, mode, pooled);
    out.entries.insert(out.entries.end(), tp.entries.begin(), tp.entries.end());
    out.sigma_blocks.push_back(std::move(tp.sigma));
  }
  return out;
}

} // namespace detail

TimePointEffects estimate_point_effects(const SequentialDataset& ds, int t, VarianceMode mode) {
  detail::Encoded e = detail::encode(ds);
  if (t < 1 || t > e.T)
    throw Error(ErrorKind::domain, strf("time index %d out of range 1..%d", t, e.T));
  double pooled = mode == VarianceMode::pooled_normal ? detail::pooled_variance(e) : 0.0;
  return detail::time_point_effects(e, t, mode, pooled);
}

PointEffectEstimate estimate_all_point_effects(const SequentialDataset& ds, VarianceMode mode) {
  detail::Encoded e = detail::encode(ds);
  return detail::all_point_effects(e, mode);
}

std::vector<Stratum> PointEffectEstimate::strata() const {
  std::vector<Stratum> out;
  out.reserve(entries.size());
  for (const auto& en : entries) out.push_back(en.stratum);
  return out;
}

Eigen::VectorXd PointEffectEstimate::theta() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(entries.size()));
  for (size_t i = 0; i < entries.size(); ++i) v[static_cast<Eigen::Index>(i)] = entries[i].theta;
  return v;
}

Eigen::MatrixXd PointEffectEstimate::covariance() const {
  Eigen::Index m = static_cast<Eigen::Index>(entries.size());
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
  Eigen::Index off = 0;
  for (const auto& blk : sigma_blocks) {
    S.block(off, off, blk.rows(), blk.cols()) = blk;
    off += blk.rows();
  }
  return S;
}

int RegressionFit::term_index(const std::string& term) const {
  for (size_t j = 0; j < terms.size(); ++j)
    if (terms[j] == term) return static_cast<int>(j);
  throw Error(ErrorKind::domain, "term '" + term + "' not in model");
}

namespace {

// Resolve a term/filter name to a column of values.
std::vector<double> column_values(const SequentialDataset& ds, const std::string& name) {
  if (name.size() >= 2 && name[0] == 'z' &&
      std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    int t = std::atoi(name.c_str() + 1);
    if (t < 1 || t > ds.times())
      throw Error(ErrorKind::config, "treatment term out of range: " + name);
    return ds.slice(t).treatment;
  }
  const CovariateColumn* col = ds.find_covariate(name);
  if (!col) throw Error(ErrorKind::config, "model references unknown column '" + name + "'");
  return col->values;
}

} // namespace

RegressionFit regression_point_effects(const SequentialDataset& ds, const MeanModelSpec& spec) {
  return regression_point_effects(ds, spec, nullptr);
}

RegressionFit regression_point_effects(const SequentialDataset& ds, const MeanModelSpec& spec,
                                       const Eigen::VectorXd* warm_start) {
  if (spec.terms.empty()) throw Error(ErrorKind::config, "mean model has no terms");

  // row filter
  std::vector<uint32_t> rows;
  {
    std::vector<std::pair<std::vector<double>, double>> filters;
    for (const auto& [col, val] : spec.subset) filters.emplace_back(column_values(ds, col), val);
    for (int i = 0; i < ds.size(); ++i) {
      bool keep = true;
      for (const auto& [vals, val] : filters)
        if (vals[i] != val) {
          keep = false;
          break;
        }
      if (keep) rows.push_back(static_cast<uint32_t>(i));
    }
  }
  int n = static_cast<int>(rows.size());
  int p = static_cast<int>(spec.terms.size());
  if (n < p)
    throw Error(ErrorKind::estimability,
                strf("mean model has %d terms but only %d rows after filtering", p, n));

  Eigen::MatrixXd X(n, p);
  for (int j = 0; j < p; ++j) {
    if (spec.terms[j] == "1") {
      X.col(j).setOnes();
    } else {
      std::vector<double> vals = column_values(ds, spec.terms[j]);
      for (int i = 0; i < n; ++i) X(i, j) = vals[rows[i]];
    }
  }
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = ds.outcome(rows[i]);

  constexpr double kMuMin = 1e-6;
  constexpr double kMuMax = 1.0 - 1e-6;
  constexpr double kTol = 1e-8;
  constexpr int kMaxIter = 100;

  RegressionFit fit;
  fit.terms = spec.terms;
  fit.n = n;

  Eigen::VectorXd beta;
  if (warm_start && warm_start->size() == p) {
    beta = *warm_start;
  } else {
    // start from the unweighted least-squares solution
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p)
      throw Error(ErrorKind::identifiability, "singular design: model terms are collinear");
    beta = qr.solve(y);
  }

  Eigen::VectorXd mu(n), w(n);
  Eigen::MatrixXd xtwx(p, p);
  for (int it = 1; it <= kMaxIter; ++it) {
    mu = X * beta;
    for (int i = 0; i < n; ++i) {
      if (mu[i] < kMuMin || mu[i] > kMuMax) {
        fit.clamped = true;
        mu[i] = std::clamp(mu[i], kMuMin, kMuMax);
      }
      w[i] = 1.0 / (mu[i] * (1.0 - mu[i]));
    }
    // identity link: one scoring step is the weighted LS solution on y
    xtwx = X.transpose() * w.asDiagonal() * X;
    Eigen::VectorXd xtwy = X.transpose() * (w.asDiagonal() * y);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
      throw Error(ErrorKind::identifiability, "singular design in weighted least squares");
    Eigen::VectorXd beta_new = ldlt.solve(xtwy);
    double delta = (beta_new - beta).cwiseAbs().maxCoeff();
    beta = beta_new;
    fit.iterations = it;
    if (delta < kTol) {
      // covariance at convergence, dispersion fixed at 1
      mu = X * beta;
      for (int i = 0; i < n; ++i) {
        double m = std::clamp(mu[i], kMuMin, kMuMax);
        w[i] = 1.0 / (m * (1.0 - m));
      }
      xtwx = X.transpose() * w.asDiagonal() * X;
      fit.beta = beta;
      fit.cov = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
      return fit;
    }
  }
  std::string last;
  for (int j = 0; j < p; ++j) last += (j ? "," : "") + format_g12(beta[j]);
  throw Error(ErrorKind::statistical,
              strf("quasi-likelihood fit did not converge after %d iterations; last iterate [%s]",
                   kMaxIter, last.c_str()));
}

} // namespace bliptest

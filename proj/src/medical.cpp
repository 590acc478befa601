#include "bliptest/medical.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "bliptest/chi2.hpp"
#include "bliptest/parallel.hpp"
#include "bliptest/rng.hpp"
#include "bliptest/util.hpp"

namespace bliptest {

namespace {

struct CoreFit {
  Eigen::Vector3d theta;
  Eigen::Vector3d theta_var; // model-based variances, diagonal blocks
  double c20 = 0.0, c21 = 0.0;
  Eigen::Vector3d gamma;
  Eigen::Matrix3d gamma_cov_conditional;
  RegressionFit m1, m20, m21;
};

void proportions(const SequentialDataset& ds, double& c20, double& c21) {
  // c_2j = P(x2 = j, z2 = 1 | z1 = 1) - P(x2 = j, z2 = 1 | z1 = 0)
  const CovariateColumn* x2 = ds.find_covariate("x2");
  if (!x2) throw Error(ErrorKind::parse, "medical data needs an x2 column");
  int n = ds.size();
  double n1 = 0, n0 = 0, j0_1 = 0, j0_0 = 0, j1_1 = 0, j1_0 = 0;
  for (int i = 0; i < n; ++i) {
    double z1 = ds.treatment(1, i);
    double z2 = ds.treatment(2, i);
    double x = x2->values[i];
    if (z1 == 1.0) {
      n1 += 1;
      if (z2 == 1.0) (x == 0.0 ? j0_1 : j1_1) += 1;
    } else {
      n0 += 1;
      if (z2 == 1.0) (x == 0.0 ? j0_0 : j1_0) += 1;
    }
  }
  if (n1 == 0 || n0 == 0)
    throw Error(ErrorKind::estimability, "one of the z1 groups is empty");
  c20 = j0_1 / n1 - j0_0 / n0;
  c21 = j1_1 / n1 - j1_0 / n0;
}

CoreFit fit_core(const SequentialDataset& ds, const std::vector<std::string>& m1_terms,
                 const std::vector<std::string>& m2_terms,
                 const std::array<const Eigen::VectorXd*, 3> warm) {
  CoreFit out;
  MeanModelSpec m1;
  m1.terms = m1_terms;
  m1.treatment_terms = {"z1"};
  out.m1 = regression_point_effects(ds, m1, warm[0]);
  out.theta[0] = out.m1.coef("z1");
  out.theta_var[0] = out.m1.var("z1");

  MeanModelSpec m2;
  m2.terms = m2_terms;
  m2.treatment_terms = {"z2"};
  m2.subset = {{"x2", 0.0}};
  out.m20 = regression_point_effects(ds, m2, warm[1]);
  out.theta[1] = out.m20.coef("z2");
  out.theta_var[1] = out.m20.var("z2");
  m2.subset = {{"x2", 1.0}};
  out.m21 = regression_point_effects(ds, m2, warm[2]);
  out.theta[2] = out.m21.coef("z2");
  out.theta_var[2] = out.m21.var("z2");

  proportions(ds, out.c20, out.c21);

  // theta_1 = gamma_1 + gamma_20 c_20 + gamma_21 c_21; the last-period
  // point effects equal the blip effects.  The system is unit triangular,
  // so solve by substitution: the identities gamma_2j = theta_2j hold
  // bitwise and the weighting is immaterial (just-identified).
  out.gamma[1] = out.theta[1];
  out.gamma[2] = out.theta[2];
  out.gamma[0] = out.theta[0] - out.gamma[1] * out.c20 - out.gamma[2] * out.c21;
  Eigen::Matrix3d Cinv;
  Cinv << 1, -out.c20, -out.c21, 0, 1, 0, 0, 0, 1;
  out.gamma_cov_conditional =
      Cinv * out.theta_var.asDiagonal() * Cinv.transpose();
  return out;
}

CoefficientReport coefficient_report(const std::string& name, double est, double var,
                                     double alpha) {
  CoefficientReport r;
  r.name = name;
  r.estimate = est;
  r.se = std::sqrt(var);
  r.ci_low = est - 1.96 * r.se;
  r.ci_high = est + 1.96 * r.se;
  if (var > 0) {
    r.W = est * est / var;
    r.p_value = chi2_survival(r.W, 1);
  }
  (void)alpha;
  return r;
}

} // namespace

MedicalReport run_medical(const SequentialDataset& ds, const MedicalOptions& opt, int threads) {
  if (ds.times() != 2)
    throw Error(ErrorKind::parse, "the two-period workflow needs exactly z1 and z2");
  if (ds.family() != OutcomeFamily::bernoulli)
    throw Error(ErrorKind::domain, "the two-period workflow expects a bernoulli outcome");
  const CovariateColumn* x2 = ds.find_covariate("x2");
  if (!x2) throw Error(ErrorKind::parse, "medical data needs an x2 column at time 2");
  for (double v : x2->values)
    if (v != 0.0 && v != 1.0)
      throw Error(ErrorKind::domain, "x2 must be dichotomous (0/1)");

  // default covariate pools: all time-1 covariate columns
  std::vector<std::string> pool;
  for (const auto& col : ds.slice(1).covariates) pool.push_back(col.name);
  std::vector<std::string> cov1 = opt.model1_covariates.empty() ? pool : opt.model1_covariates;
  std::vector<std::string> cov2 = opt.model2_covariates.empty() ? pool : opt.model2_covariates;
  for (const auto& c : cov1)
    if (!ds.find_covariate(c)) throw Error(ErrorKind::config, "unknown covariate " + c);
  for (const auto& c : cov2)
    if (!ds.find_covariate(c)) throw Error(ErrorKind::config, "unknown covariate " + c);

  auto terms1 = [&](const std::vector<std::string>& covs) {
    std::vector<std::string> t = {"1"};
    t.insert(t.end(), covs.begin(), covs.end());
    t.push_back("z1");
    return t;
  };
  auto terms2 = [&](const std::vector<std::string>& covs) {
    std::vector<std::string> t = {"1"};
    t.insert(t.end(), covs.begin(), covs.end());
    t.push_back("z1");
    t.push_back("z2");
    return t;
  };

  MedicalReport report;
  report.alpha = opt.alpha;

  // Significance of each candidate covariate, reported always, applied
  // only under auto selection.  The earlier treatment z1 always stays.
  CoreFit probe = fit_core(ds, terms1(cov1), terms2(cov2), {nullptr, nullptr, nullptr});
  auto note_model = [&](const RegressionFit& fit, const std::string& model,
                        const std::vector<std::string>& covs, std::vector<std::string>& kept) {
    for (const auto& c : covs) {
      double w = fit.coef(c) * fit.coef(c) / fit.var(c);
      SelectionNote note;
      note.model = model;
      note.term = c;
      note.p_value = chi2_survival(w, 1);
      note.dropped = opt.auto_select && note.p_value > opt.select_level;
      if (!note.dropped) kept.push_back(c);
      report.selection.push_back(note);
    }
  };
  std::vector<std::string> kept1, kept2a, kept2b;
  note_model(probe.m1, "mu(x,z1)", cov1, kept1);
  note_model(probe.m20, "mu(x,z1,x2=0,z2)", cov2, kept2a);
  note_model(probe.m21, "mu(x,z1,x2=1,z2)", cov2, kept2b);
  std::vector<std::string> cov2_kept;
  if (opt.auto_select) {
    // a covariate stays in the second-stage model if significant in either
    // x2 stratum
    for (const auto& c : cov2)
      if (std::find(kept2a.begin(), kept2a.end(), c) != kept2a.end() ||
          std::find(kept2b.begin(), kept2b.end(), c) != kept2b.end())
        cov2_kept.push_back(c);
  } else {
    cov2_kept = cov2;
  }
  std::vector<std::string> cov1_kept = opt.auto_select ? kept1 : cov1;

  std::vector<std::string> t1 = terms1(cov1_kept);
  std::vector<std::string> t2 = terms2(cov2_kept);
  CoreFit base = opt.auto_select ? fit_core(ds, t1, t2, {nullptr, nullptr, nullptr}) : probe;

  report.model1 = base.m1;
  report.model2_x2_0 = base.m20;
  report.model2_x2_1 = base.m21;
  report.c20 = base.c20;
  report.c21 = base.c21;
  report.theta = base.theta;
  report.gamma = base.gamma;

  // bootstrap the marginal covariance of (gamma, theta); term sets stay
  // fixed across replicates
  if (opt.bootstrap_B < 2) throw Error(ErrorKind::domain, "bootstrap needs B >= 2 replicates");
  const int B = opt.bootstrap_B;
  const uint32_t n = static_cast<uint32_t>(ds.size());
  struct Rep {
    bool ok = false;
    Eigen::Vector3d gamma, theta;
  };
  std::vector<Rep> reps(static_cast<size_t>(B));
  parallel_for(B, threads, [&](int b) {
    Rng rng = Rng::stream(opt.seed, static_cast<uint64_t>(b));
    std::vector<uint32_t> idx(n);
    for (uint32_t i = 0; i < n; ++i) idx[i] = rng.uniform_int(n);
    try {
      SequentialDataset rs = ds.resample(idx);
      CoreFit fit = fit_core(rs, t1, t2, {&base.m1.beta, &base.m20.beta, &base.m21.beta});
      reps[static_cast<size_t>(b)] = {true, fit.gamma, fit.theta};
    } catch (const Error& err) {
      if (!err.replicate_recoverable()) throw;
    }
  });
  int ok = 0;
  Eigen::Vector3d gmean = Eigen::Vector3d::Zero(), tmean = Eigen::Vector3d::Zero();
  for (const auto& r : reps)
    if (r.ok) {
      ++ok;
      gmean += r.gamma;
      tmean += r.theta;
    }
  report.bootstrap_requested = B;
  report.bootstrap_failed = B - ok;
  if (report.bootstrap_failed * 10 > B)
    throw Error(ErrorKind::statistical,
                strf("bootstrap failed on %d of %d replicates (more than 10%%)",
                     report.bootstrap_failed, B));
  if (ok < 2) throw Error(ErrorKind::statistical, "fewer than two successful bootstrap replicates");
  gmean /= ok;
  tmean /= ok;
  Eigen::Matrix3d gcov = Eigen::Matrix3d::Zero(), tcov = Eigen::Matrix3d::Zero();
  for (const auto& r : reps)
    if (r.ok) {
      gcov += (r.gamma - gmean) * (r.gamma - gmean).transpose();
      tcov += (r.theta - tmean) * (r.theta - tmean).transpose();
    }
  gcov /= (ok - 1);
  tcov /= (ok - 1);
  report.gamma_cov_marginal = gcov;
  report.theta_cov_marginal = tcov;

  const char* gnames[3] = {"gamma1", "gamma20", "gamma21"};
  const char* tnames[3] = {"theta1", "theta20", "theta21"};
  for (int i = 0; i < 3; ++i) {
    report.blip.push_back(coefficient_report(gnames[i], report.gamma[i], gcov(i, i), opt.alpha));
    report.point.push_back(coefficient_report(tnames[i], report.theta[i], tcov(i, i), opt.alpha));
  }
  return report;
}

} // namespace bliptest

#include <doctest.h>

#include <cmath>

#include "bliptest/estimator.hpp"
#include "bliptest/oracle_dgp.hpp"
#include "bliptest/parallel.hpp"
#include "bliptest/rng.hpp"

using namespace bliptest;

namespace {

PointEffectEstimate fake_effects(const Eigen::VectorXd& theta,
                                 const std::vector<Eigen::MatrixXd>& blocks) {
  PointEffectEstimate pe;
  int idx = 0;
  for (size_t t = 0; t < blocks.size(); ++t)
    for (Eigen::Index r = 0; r < blocks[t].rows(); ++r)
      pe.entries.push_back({Stratum{static_cast<int>(t) + 1, static_cast<double>(r), 1},
                            theta[idx++]});
  pe.sigma_blocks = blocks;
  return pe;
}

DesignMatrix fake_design(const Eigen::MatrixXd& C, const std::vector<Stratum>& strata) {
  DesignMatrix d;
  d.C = C;
  d.strata = strata;
  for (Eigen::Index j = 0; j < C.cols(); ++j) d.column_labels.push_back("g" + std::to_string(j));
  d.rank = static_cast<int>(C.cols());
  return d;
}

Eigen::MatrixXd random_pd(Rng& rng, int k) {
  Eigen::MatrixXd A(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) A(i, j) = rng.normal(0, 1);
  return A * A.transpose() + 0.25 * Eigen::MatrixXd::Identity(k, k);
}

} // namespace

TEST_CASE("gls with identity design and identity covariance returns theta") {
  Eigen::VectorXd theta(3);
  theta << 1.5, -2.0, 0.5;
  std::vector<Eigen::MatrixXd> blocks = {Eigen::MatrixXd::Identity(3, 3)};
  auto pe = fake_effects(theta, blocks);
  auto d = fake_design(Eigen::MatrixXd::Identity(3, 3), pe.strata());
  BlipEstimate est = gls(pe, d);
  CHECK((est.gamma - theta).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((est.cov_conditional - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("just-identified gls ignores the weighting") {
  Rng rng(2024);
  for (int rep = 0; rep < 20; ++rep) {
    int k = 3;
    Eigen::MatrixXd C(k, k);
    do {
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) C(i, j) = rng.normal(0, 1);
    } while (std::fabs(C.determinant()) < 0.1);
    Eigen::VectorXd theta(k);
    for (int i = 0; i < k; ++i) theta[i] = rng.normal(0, 2);
    std::vector<Eigen::MatrixXd> blocks = {random_pd(rng, 2), random_pd(rng, 1)};
    auto pe = fake_effects(theta, blocks);
    auto d = fake_design(C, pe.strata());
    BlipEstimate est = gls(pe, d);
    Eigen::VectorXd direct = C.lu().solve(theta);
    CHECK((est.gamma - direct).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("gls refuses a singular covariance with a helpful message") {
  Eigen::VectorXd theta(2);
  theta << 1, 2;
  Eigen::MatrixXd blk(2, 2);
  blk << 1, 1, 1, 1; // rank one
  auto pe = fake_effects(theta, {blk});
  auto d = fake_design(Eigen::MatrixXd::Identity(2, 2), pe.strata());
  try {
    gls(pe, d);
    FAIL("expected statistical error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::statistical);
    CHECK(std::string(e.what()).find("variance mode") != std::string::npos);
  }
}

TEST_CASE("gls detects rank-deficient designs") {
  Eigen::VectorXd theta(3);
  theta << 1, 2, 3;
  Eigen::MatrixXd C(3, 2);
  C << 1, 2, 2, 4, 3, 6;
  auto pe = fake_effects(theta, {Eigen::MatrixXd::Identity(3, 3)});
  auto d = fake_design(C, pe.strata());
  CHECK_THROWS_AS(gls(pe, d), Error);
}

TEST_CASE("the fitted pipeline agrees with the public per-operation path") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::poisson);
  SequentialDataset ds = generate_dataset(spec, 1500, 424242);
  FitResult fit = fit_blip(ds, spec.snmm, {});

  PointEffectEstimate pe = estimate_all_point_effects(ds);
  REQUIRE(pe.strata() == fit.design.strata);
  CHECK((pe.theta() - fit.point_effects.theta()).cwiseAbs().maxCoeff() == 0.0);

  TransitionTable tt = empirical_transitions(ds);
  DesignMatrix d = build_design_matrix(spec.snmm, tt, pe.strata());
  CHECK((d.C - fit.design.C).cwiseAbs().maxCoeff() < 1e-14);

  BlipEstimate direct = gls(pe, d, ds.size());
  CHECK((direct.gamma - fit.estimate.gamma).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((direct.cov_conditional - fit.estimate.cov_conditional).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("MC mean of gamma_hat matches the planted truth at n=1000") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  const int R = 1000;
  std::vector<Eigen::VectorXd> gs(R);
  parallel_for(R, 2, [&](int r) {
    SequentialDataset ds = generate_dataset(spec, 1000, derive_seed(909, r));
    gs[r] = fit_blip(ds, spec.snmm, {}).estimate.gamma;
  });
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(9), var = Eigen::VectorXd::Zero(9);
  for (const auto& g : gs) mean += g;
  mean /= R;
  for (const auto& g : gs) var += (g - mean).cwiseAbs2();
  var /= (R - 1);
  for (int i = 0; i < 9; ++i) {
    double se = std::sqrt(var[i] / R);
    CHECK(std::fabs(mean[i] - spec.gamma_true[i]) < 4.0 * se);
  }
}

TEST_CASE("restricted gls: feasible point is a fixed point") {
  Rng rng(7);
  BlipEstimate est;
  est.gamma = Eigen::VectorXd::Zero(4);
  est.gamma << 1, 2, 3, 4;
  est.cov_conditional = random_pd(rng, 4);
  Hypothesis h;
  h.name = "feasible";
  h.H = Eigen::MatrixXd::Zero(1, 4);
  h.H(0, 1) = 1;
  h.rho = Eigen::VectorXd::Constant(1, 2.0); // already satisfied
  BlipEstimate r = restricted_gls(est, h);
  CHECK((r.gamma - est.gamma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("restricted gls: full constraint pins the estimate with zero covariance") {
  Rng rng(8);
  BlipEstimate est;
  est.gamma = Eigen::VectorXd::Zero(3);
  est.gamma << 5, -1, 2;
  est.cov_conditional = random_pd(rng, 3);
  Hypothesis h;
  h.name = "all";
  h.H = Eigen::MatrixXd::Identity(3, 3);
  h.rho = Eigen::VectorXd::Zero(3);
  h.rho << 1, 1, 1;
  BlipEstimate r = restricted_gls(est, h);
  CHECK((r.gamma - h.rho).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.cov_conditional.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("restricted gls: satisfies the constraint and shrinks variances") {
  Rng rng(99);
  for (int rep = 0; rep < 25; ++rep) {
    int k = 5;
    BlipEstimate est;
    est.gamma = Eigen::VectorXd::Zero(k);
    for (int i = 0; i < k; ++i) est.gamma[i] = rng.normal(0, 3);
    est.cov_conditional = random_pd(rng, k);
    Hypothesis h;
    h.name = "rand";
    h.H = Eigen::MatrixXd::Zero(2, k);
    for (int j = 0; j < k; ++j) {
      h.H(0, j) = rng.normal(0, 1);
      h.H(1, j) = rng.normal(0, 1);
    }
    h.rho = Eigen::VectorXd::Zero(2);
    h.rho << rng.normal(0, 1), rng.normal(0, 1);
    BlipEstimate r = restricted_gls(est, h);
    CHECK((h.H * r.gamma - h.rho).cwiseAbs().maxCoeff() < 1e-12);
    for (int i = 0; i < k; ++i)
      CHECK(r.cov_conditional(i, i) <= est.cov_conditional(i, i) + 1e-12);
  }
}

TEST_CASE("bootstrap with no replicate variation is the zero matrix") {
  SnmmSpec snmm;
  snmm.basis.push_back({IndicatorBasis{1, {0}, {1}}, "g"});

  // a single subject can never produce a treated-vs-control contrast, so
  // every replicate fails and the bootstrap refuses to fabricate numbers
  std::vector<TimeSlice> one_slice(1);
  one_slice[0].treatment = {1};
  SequentialDataset one =
      SequentialDataset::from_columns(std::move(one_slice), {1.0}, OutcomeFamily::normal);
  CHECK_THROWS_AS(bootstrap_marginal_cov(one, snmm, 2, 1, {}, 1), Error);

  // replicates that differ only in cell counts, with constant y per cell
  // and T=1 (no transitions), all reproduce the same gamma: zero matrix.
  // poisson plugin variance keeps the weighting positive definite.
  std::vector<TimeSlice> s2(1);
  s2[0].treatment = {1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  SequentialDataset flat = SequentialDataset::from_columns(
      std::move(s2), {3, 3, 3, 3, 3, 3, 1, 1, 1, 1, 1, 1}, OutcomeFamily::poisson);
  BootstrapResult b =
      bootstrap_marginal_cov(flat, snmm, 2, 11, {VarianceMode::plugin_family}, 1);
  CHECK(b.cov.cwiseAbs().maxCoeff() == 0.0);

  // B < 2 is rejected outright
  CHECK_THROWS_AS(bootstrap_marginal_cov(flat, snmm, 1, 1, {}, 1), Error);
}

TEST_CASE("bootstrap is deterministic across worker counts") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  SequentialDataset ds = generate_dataset(spec, 600, 2718);
  BootstrapResult b1 = bootstrap_marginal_cov(ds, spec.snmm, 80, 31, {}, 1);
  BootstrapResult b2 = bootstrap_marginal_cov(ds, spec.snmm, 80, 31, {}, 4);
  CHECK((b1.cov - b2.cov).cwiseAbs().maxCoeff() == 0.0);
  CHECK(b1.failed == b2.failed);
}

TEST_CASE("bootstrap covariance tracks the Monte Carlo covariance of gamma_hat") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  const int n = 1000;
  const int R = 600;
  std::vector<Eigen::VectorXd> gs(R);
  parallel_for(R, 2, [&](int r) {
    SequentialDataset d = generate_dataset(spec, n, derive_seed(404, r));
    gs[r] = fit_blip(d, spec.snmm, {}).estimate.gamma;
  });
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(9), var = Eigen::VectorXd::Zero(9);
  for (const auto& g : gs) mean += g;
  mean /= R;
  for (const auto& g : gs) var += (g - mean).cwiseAbs2();
  var /= (R - 1);

  SequentialDataset ds = generate_dataset(spec, n, 606);
  BootstrapResult boot = bootstrap_marginal_cov(ds, spec.snmm, 500, 607, {}, 2);
  for (int i = 0; i < 9; ++i) {
    double ratio = boot.cov(i, i) / var[i];
    CHECK(ratio > 0.6);
    CHECK(ratio < 1.6);
  }
}

TEST_CASE("law of total covariance: marginal variance exceeds mean conditional variance") {
  // The decomposition var(gamma_hat) = E[cov_c] + cov(gamma_c) holds for
  // the true conditional covariance: outcome noise only, sigma known in
  // simulation.  (The sample-variance plug-in adds within-cell path
  // heterogeneity on top of sigma^2, so it is not the right comparand.)
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  const int n = 1000, R = 400;
  const double s2 = spec.sigma * spec.sigma;
  std::vector<Eigen::VectorXd> gs(R), conds(R);
  parallel_for(R, 2, [&](int r) {
    SequentialDataset d = generate_dataset(spec, n, derive_seed(808, r));
    FitResult f = fit_blip(d, spec.snmm, {});
    gs[r] = f.estimate.gamma;

    // true conditional covariance of theta given the paths
    Eigen::Index m = f.design.C.rows();
    Eigen::MatrixXd sigma_true = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      auto means = stratum_means(d, f.design.strata[i].t);
      const Stratum& s = f.design.strata[i];
      double n1 = means.at(s).count;
      double n0 = means.at(Stratum{s.t, s.x, 0.0}).count;
      sigma_true(i, i) = s2 / n1 + s2 / n0;
      for (Eigen::Index j = i + 1; j < m; ++j) {
        const Stratum& sj = f.design.strata[j];
        if (sj.t == s.t && sj.x == s.x) {
          sigma_true(i, j) = s2 / n0;
          sigma_true(j, i) = s2 / n0;
        }
      }
    }
    // the fitted GLS map A = cov_cond C' Sigma_hat^-1 applied to theta
    Eigen::MatrixXd sigma_hat = f.point_effects.covariance();
    Eigen::MatrixXd A = f.estimate.cov_conditional * f.design.C.transpose() *
                        sigma_hat.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
    conds[r] = (A * sigma_true * A.transpose()).diagonal();
  });
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(9), var = Eigen::VectorXd::Zero(9),
                  cond_mean = Eigen::VectorXd::Zero(9);
  for (int r = 0; r < R; ++r) {
    mean += gs[r];
    cond_mean += conds[r];
  }
  mean /= R;
  cond_mean /= R;
  for (int r = 0; r < R; ++r) var += (gs[r] - mean).cwiseAbs2();
  var /= (R - 1);
  for (int i = 0; i < 9; ++i) {
    double se_var = var[i] * std::sqrt(2.0 / (R - 1));
    CHECK(var[i] > cond_mean[i] - 3.0 * se_var);
  }
}

TEST_CASE("wald: exact null value gives W=0, p=1") {
  BlipEstimate est;
  est.gamma = Eigen::VectorXd::Zero(2);
  est.gamma << 1.25, -0.5;
  est.cov_conditional = Eigen::MatrixXd::Identity(2, 2);
  est.cov_marginal = Eigen::MatrixXd::Identity(2, 2);
  Hypothesis h;
  h.name = "exact";
  h.H = Eigen::MatrixXd::Identity(2, 2);
  h.rho = est.gamma;
  WaldResult w = wald(est, h, 0.05);
  CHECK(w.W < 1e-12);
  CHECK(w.p_value == 1.0);
  CHECK_FALSE(w.reject);
}

TEST_CASE("wald: scalar case with frozen reference") {
  BlipEstimate est;
  est.gamma = Eigen::VectorXd::Constant(1, 1.0);
  est.cov_conditional = Eigen::MatrixXd::Constant(1, 1, 0.25);
  est.cov_marginal = Eigen::MatrixXd::Constant(1, 1, 0.25);
  Hypothesis h;
  h.name = "scalar";
  h.H = Eigen::MatrixXd::Constant(1, 1, 1.0);
  h.rho = Eigen::VectorXd::Zero(1);
  WaldResult w = wald(est, h, 0.05);
  CHECK(std::fabs(w.W - 4.0) < 1e-12);
  // frozen: survival of chi2_1 at 4 = 0.045500263896358414
  CHECK(std::fabs(w.p_value - 0.045500263896358414) < 1e-12);
  CHECK(w.reject);
}

TEST_CASE("wald requires the marginal covariance") {
  BlipEstimate est;
  est.gamma = Eigen::VectorXd::Zero(1);
  est.cov_conditional = Eigen::MatrixXd::Identity(1, 1);
  Hypothesis h;
  h.name = "x";
  h.H = Eigen::MatrixXd::Identity(1, 1);
  h.rho = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(wald(est, h, 0.05), Error);
}

TEST_CASE("wald is invariant under row reparameterization") {
  Rng rng(515);
  BlipEstimate est;
  est.gamma = Eigen::VectorXd::Zero(4);
  for (int i = 0; i < 4; ++i) est.gamma[i] = rng.normal(0, 2);
  est.cov_conditional = random_pd(rng, 4);
  est.cov_marginal = random_pd(rng, 4);
  Hypothesis h;
  h.name = "base";
  h.H = Eigen::MatrixXd::Zero(2, 4);
  h.H << 1, 0, -1, 0, 0, 1, 0, 1;
  h.rho = Eigen::VectorXd::Zero(2);
  h.rho << 0.3, -0.2;
  WaldResult w0 = wald(est, h, 0.05);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd M(2, 2);
    do {
      M << rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1);
    } while (std::fabs(M.determinant()) < 0.05);
    Hypothesis g;
    g.name = "reparam";
    g.H = M * h.H;
    g.rho = M * h.rho;
    WaldResult w1 = wald(est, g, 0.05);
    CHECK(std::fabs(w1.W - w0.W) < 1e-10 * (1.0 + w0.W));
  }
}

TEST_CASE("scale equivariance: scaling outcomes scales gamma and leaves W invariant") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  SequentialDataset ds = generate_dataset(spec, 700, 161803);
  const double a = 3.5;
  std::vector<TimeSlice> slices;
  for (int t = 1; t <= ds.times(); ++t) slices.push_back(ds.slice(t));
  std::vector<double> y2 = ds.outcomes();
  for (double& v : y2) v *= a;
  SequentialDataset scaled = SequentialDataset::from_columns(std::move(slices), std::move(y2),
                                                             OutcomeFamily::normal);
  FitResult f1 = fit_blip(ds, spec.snmm, {});
  FitResult f2 = fit_blip(scaled, spec.snmm, {});
  CHECK((f2.estimate.gamma - a * f1.estimate.gamma).cwiseAbs().maxCoeff() < 1e-9);

  // same resample streams -> bootstrap covariance scales exactly by a^2
  BootstrapResult b1 = bootstrap_marginal_cov(ds, spec.snmm, 60, 5, {}, 2);
  BootstrapResult b2 = bootstrap_marginal_cov(scaled, spec.snmm, 60, 5, {}, 2);
  CHECK((b2.cov - a * a * b1.cov).cwiseAbs().maxCoeff() < 1e-8 * b2.cov.cwiseAbs().maxCoeff());

  Hypothesis h;
  h.name = "A0";
  h.H = Eigen::MatrixXd::Zero(1, 9);
  h.H(0, 0) = 1;
  h.rho = Eigen::VectorXd::Constant(1, spec.gamma_true[0]);
  Hypothesis hs = h;
  hs.rho *= a;
  BlipEstimate e1 = f1.estimate;
  e1.cov_marginal = b1.cov;
  BlipEstimate e2 = f2.estimate;
  e2.cov_marginal = b2.cov;
  WaldResult w1 = wald(e1, h, 0.05);
  WaldResult w2 = wald(e2, hs, 0.05);
  CHECK(std::fabs(w1.W - w2.W) < 1e-8 * (1.0 + w1.W));
}

TEST_CASE("noncentral power: analytic formula against MC rejection at shift 2c") {
  // The A2 hypothesis tests gamma_1 = gamma_{1,0} + 2c while the truth is
  // gamma_{1,0}; the analytic power with the true MC covariance should be
  // close to the observed rejection rate.
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  const int n = 3000;
  const double c = 1.0;
  const int R = 300, B = 150;

  // true covariance of gamma_hat from fresh datasets
  std::vector<Eigen::VectorXd> gs(R);
  parallel_for(R, 2, [&](int r) {
    SequentialDataset d = generate_dataset(spec, n, derive_seed(271828, r));
    gs[r] = fit_blip(d, spec.snmm, {}).estimate.gamma;
  });
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(9);
  for (const auto& g : gs) mean += g;
  mean /= R;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(9, 9);
  for (const auto& g : gs) cov += (g - mean) * (g - mean).transpose();
  cov /= (R - 1);

  Hypothesis a2;
  a2.name = "A2";
  a2.H = Eigen::MatrixXd::Zero(1, 9);
  a2.H(0, 0) = 1;
  a2.rho = Eigen::VectorXd::Constant(1, spec.gamma_true[0] + 2 * c);
  PowerResult pw = noncentral_power(a2, spec.gamma_true, cov, 0.05);

  std::vector<uint8_t> rejects(R);
  parallel_for(R, 2, [&](int r) {
    SequentialDataset d = generate_dataset(spec, n, derive_seed(271828, r));
    FitResult f = fit_blip(d, spec.snmm, {});
    BootstrapResult b = bootstrap_marginal_cov(d, spec.snmm, B, derive_seed(3, r), {}, 1);
    f.estimate.cov_marginal = b.cov;
    rejects[r] = wald(f.estimate, a2, 0.05).reject ? 1 : 0;
  });
  double rate = 0;
  for (auto v : rejects) rate += v;
  rate /= R;
  CHECK(std::fabs(pw.power - rate) < 0.05 + 2.0 * std::sqrt(rate * (1 - rate) / R));
  CHECK(pw.lambda > 0.0);
}

#include <doctest.h>

#include <cmath>

#include "bliptest/estimator.hpp"
#include "bliptest/oracle_dgp.hpp"
#include "bliptest/rng.hpp"
#include "support/random_spec.hpp"

using namespace bliptest;

TEST_CASE("null effects collapse the standard parameters to the grand mean") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  spec.gamma_true.setZero();
  spec.zeta[0].clear();
  spec.zeta[1].clear();
  StandardParams sp = build_standard_params(spec);
  for (double m : sp.mu) CHECK(std::fabs(m - spec.grand_mean) < 1e-12);
}

TEST_CASE("grand mean recovery on the shipped specs") {
  for (auto fam : {OutcomeFamily::normal, OutcomeFamily::bernoulli, OutcomeFamily::poisson}) {
    DgpSpec spec = builtin_dgp(fam);
    StandardParams sp = build_standard_params(spec);
    double total = 0;
    for (double p : sp.prob) total += p;
    CHECK(std::fabs(total - 1.0) < 1e-12);
    CHECK(std::fabs(sp.expected_outcome() - spec.grand_mean) < 1e-10);
  }
}

TEST_CASE("bernoulli standard parameters stay in (0,1); violations are reported") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::bernoulli);
  StandardParams sp = build_standard_params(spec);
  for (double m : sp.mu) {
    CHECK(m > 0.0);
    CHECK(m < 1.0);
  }
  // pushing the grand mean to the boundary must fail with the path named
  spec.grand_mean = 0.995;
  try {
    build_standard_params(spec);
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::domain);
    CHECK(std::string(e.what()).find("path") != std::string::npos);
  }
}

TEST_CASE("last-period point effects equal the blip parameters exactly") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::poisson);
  ExactEffects fx = exact_point_effects(spec);
  for (size_t i = 0; i < fx.strata.size(); ++i) {
    if (fx.strata[i].t != 3) continue;
    int j = static_cast<int>(fx.strata[i].x);
    CHECK(std::fabs(fx.theta_closed[static_cast<Eigen::Index>(i)] - spec.gamma_true[5 + j]) <
          1e-12);
    CHECK(std::fabs(fx.theta_enumerated[static_cast<Eigen::Index>(i)] -
                    spec.gamma_true[5 + j]) < 1e-10);
  }
}

TEST_CASE("null blip parameter gives null point effects everywhere") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  spec.gamma_true.setZero();
  ExactEffects fx = exact_point_effects(spec);
  CHECK(fx.theta_closed.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(fx.theta_enumerated.cwiseAbs().maxCoeff() < 1e-10);
  DecompositionCheck dc = exact_blip_decomposition_check(spec);
  CHECK(dc.residual_inf < 1e-12);
}

TEST_CASE("dual routes agree on the shipped specs and on random specs") {
  for (auto fam : {OutcomeFamily::normal, OutcomeFamily::bernoulli, OutcomeFamily::poisson}) {
    ExactEffects fx = exact_point_effects(builtin_dgp(fam));
    CHECK(fx.max_route_discrepancy < 1e-10);
  }
  Rng rng(321);
  for (int rep = 0; rep < 20; ++rep) {
    DgpSpec spec = testsupport::random_spec(rng);
    ExactEffects fx = exact_point_effects(spec);
    CHECK(fx.max_route_discrepancy < 1e-10);
  }
}

TEST_CASE("full-history effects marginalize to the stratum effects") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  ExactEffects fx = exact_point_effects(spec);
  // at t=2 the stratum effect is the history-weighted mean of the
  // full-history effects with the same (x2, z2)
  StandardParams sp = build_standard_params(spec);
  for (int j = 0; j < 4; ++j) {
    double num = 0, den = 0;
    for (const auto& fe : fx.full_history) {
      if (fe.t != 2 || fe.z != 1.0) continue;
      // history = (x1, z1, x2); weight by P(z1 | x2, z2=1) ~ P(z1, x2, z2=1)
      if (fe.history[2] != j) continue;
      double mass = 0;
      for (size_t p = 0; p < sp.prob.size(); ++p)
        if (sp.path_x[p][1] == j && sp.path_z[p][1] == 1 &&
            sp.path_z[p][0] == static_cast<int>(fe.history[1]))
          mass += sp.prob[p];
      num += fe.theta * mass;
      den += mass;
    }
    double stratum = 0;
    for (size_t i = 0; i < fx.strata.size(); ++i)
      if (fx.strata[i] == Stratum{2, static_cast<double>(j), 1})
        stratum = fx.theta_enumerated[static_cast<Eigen::Index>(i)];
    CHECK(std::fabs(num / den - stratum) < 1e-10);
  }
}

TEST_CASE("decomposition identity holds for 50 random specs quickly") {
  Rng rng(20240810);
  for (int rep = 0; rep < 50; ++rep) {
    DgpSpec spec = testsupport::random_spec(rng);
    DecompositionCheck dc = exact_blip_decomposition_check(spec);
    CHECK(dc.residual_inf < 1e-10);
  }
}

TEST_CASE("generated data reproduces the spec distributions") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  const int n = 5000;
  SequentialDataset ds = generate_dataset(spec, n, 13579);

  // single record determinism
  SequentialDataset one_a = generate_dataset(spec, 1, 42);
  SequentialDataset one_b = generate_dataset(spec, 1, 42);
  CHECK(one_a.outcome(0) == one_b.outcome(0));
  CHECK(serialize_dataset(one_a) == serialize_dataset(one_b));

  // prefix property: the first subjects of a larger run are identical
  SequentialDataset big = generate_dataset(spec, 10, 42);
  CHECK(big.outcome(0) == one_a.outcome(0));

  // empirical P(z1 = 1) within 4 binomial SE
  double p = spec.treatment_given_covariate[0].at(0.0)[1];
  int count = 0;
  for (int i = 0; i < n; ++i) count += ds.treatment(1, i) == 1.0;
  double se = std::sqrt(p * (1 - p) / n);
  CHECK(std::fabs(static_cast<double>(count) / n - p) < 4 * se);

  // pooled within-path variance recovers sigma^2 within 10%
  StandardParams sp = build_standard_params(spec);
  double ss = 0;
  int df = 0;
  std::map<std::vector<int>, std::pair<double, int>> cells; // sum, count
  std::map<std::vector<int>, double> sums2;
  for (int i = 0; i < n; ++i) {
    std::vector<int> key;
    for (int t = 1; t <= 3; ++t) {
      key.push_back(static_cast<int>(ds.stratum_x(t, i)));
      key.push_back(static_cast<int>(ds.treatment(t, i)));
    }
    auto& cell = cells[key];
    cell.first += ds.outcome(i);
    cell.second += 1;
    sums2[key] += ds.outcome(i) * ds.outcome(i);
  }
  for (const auto& [key, cell] : cells) {
    if (cell.second < 2) continue;
    ss += sums2[key] - cell.first * cell.first / cell.second;
    df += cell.second - 1;
  }
  double pooled = ss / df;
  CHECK(std::fabs(pooled - spec.sigma * spec.sigma) < 0.10 * spec.sigma * spec.sigma);
  (void)sp;
}

TEST_CASE("end-to-end consistency at n=20000 for all three families") {
  for (auto fam : {OutcomeFamily::normal, OutcomeFamily::bernoulli, OutcomeFamily::poisson}) {
    DgpSpec spec = builtin_dgp(fam);
    SequentialDataset ds = generate_dataset(spec, 20000, 864213);
    FitResult fit = fit_blip(ds, spec.snmm, {});
    BootstrapResult boot = bootstrap_marginal_cov(ds, spec.snmm, 100, 7, {}, 2);
    for (int i = 0; i < 9; ++i) {
      double se = std::sqrt(boot.cov(i, i));
      CHECK(std::fabs(fit.estimate.gamma[i] - spec.gamma_true[i]) < 4.0 * se);
    }
  }
}

TEST_CASE("spec validation rejects malformed tables") {
  DgpSpec spec = builtin_dgp(OutcomeFamily::normal);
  spec.covariate_given_history[1][{0.0, 0.0}] = {0.5, 0.2, 0.2, 0.2}; // sums to 1.1
  CHECK_THROWS_AS(spec.validate(), Error);

  DgpSpec spec2 = builtin_dgp(OutcomeFamily::normal);
  spec2.covariate_given_history[1].erase({0.0, 1.0});
  CHECK_THROWS_AS(spec2.validate(), Error);

  DgpSpec spec3 = builtin_dgp(OutcomeFamily::normal);
  spec3.gamma_true = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(spec3.validate(), Error);
}

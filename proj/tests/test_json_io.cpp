#include <doctest.h>

#include <cmath>
#include <fstream>

#include "bliptest/json_io.hpp"

using namespace bliptest;

TEST_CASE("snmm documents round-trip") {
  json doc = json::parse(R"([
    {"type":"indicator","t":1,"x_in":[0],"z_in":[1],"label":"g1"},
    {"type":"indicator","t":2,"x_in":[0,1],"z_in":[1,2]},
    {"type":"linear","t_set":[1,2,3],"g":{"0":1,"1":0.5,"2":-1}}
  ])");
  SnmmSpec snmm = snmm_from_json(doc);
  REQUIRE(snmm.k() == 3);
  CHECK(snmm.basis[0].eval(1, 0, 1) == 1.0);
  CHECK(snmm.basis[0].eval(2, 0, 1) == 0.0);
  CHECK(snmm.basis[1].eval(2, 1, 2) == 1.0);
  CHECK(snmm.basis[2].eval(3, 1, 2) == 1.0);  // z * g(x) = 2 * 0.5
  CHECK(snmm.basis[2].eval(3, 5, 2) == 0.0);  // level not in g
  SnmmSpec back = snmm_from_json(snmm_to_json(snmm));
  for (int t = 1; t <= 3; ++t)
    for (double x : {0.0, 1.0, 2.0})
      for (double z : {0.0, 1.0, 2.0})
        for (int j = 0; j < 3; ++j)
          CHECK(back.basis[j].eval(t, x, z) == snmm.basis[j].eval(t, x, z));
}

TEST_CASE("snmm control constraint is enforced at load") {
  json doc = json::parse(R"([{"type":"indicator","t":1,"x_in":[0],"z_in":[0,1]}])");
  CHECK_THROWS_AS(snmm_from_json(doc), Error);
}

TEST_CASE("hypothesis documents round-trip and validate rank") {
  json doc = json::parse(R"({"name":"J0","H":[[0,1,-1]],"rho":[0]})");
  Hypothesis h = hypothesis_from_json(doc);
  CHECK(h.name == "J0");
  CHECK(h.l() == 1);
  h.validate(3);
  Hypothesis back = hypothesis_from_json(hypothesis_to_json(h));
  CHECK(back.H == h.H);
  CHECK(back.rho == h.rho);

  json bad = json::parse(R"({"name":"dup","H":[[1,0,0],[1,0,0]],"rho":[0,0]})");
  Hypothesis hb = hypothesis_from_json(bad);
  CHECK_THROWS_AS(hb.validate(3), Error);
}

TEST_CASE("dgp documents round-trip losslessly") {
  for (auto fam : {OutcomeFamily::normal, OutcomeFamily::bernoulli, OutcomeFamily::poisson}) {
    DgpSpec spec = builtin_dgp(fam);
    json doc = dgp_to_json(spec);
    DgpSpec back = dgp_from_json(doc);
    CHECK(dgp_to_json(back).dump() == doc.dump());
    CHECK(back.gamma_true == spec.gamma_true);
    CHECK(back.grand_mean == spec.grand_mean);
    // behavioural equality: same standard parameters
    StandardParams a = build_standard_params(spec);
    StandardParams b = build_standard_params(back);
    REQUIRE(a.mu.size() == b.mu.size());
    for (size_t i = 0; i < a.mu.size(); ++i) {
      CHECK(std::fabs(a.mu[i] - b.mu[i]) < 1e-12);
      CHECK(std::fabs(a.prob[i] - b.prob[i]) < 1e-15);
    }
  }
}

TEST_CASE("shipped spec files match the builtin specs") {
  const std::string dir = std::string(BLIPTEST_SOURCE_DIR) + "/specs/";
  struct Case {
    const char* file;
    OutcomeFamily fam;
  } cases[] = {{"dgp_normal.json", OutcomeFamily::normal},
               {"dgp_bernoulli.json", OutcomeFamily::bernoulli},
               {"dgp_poisson.json", OutcomeFamily::poisson}};
  for (const auto& c : cases) {
    DgpSpec from_file = load_dgp_file(dir + c.file);
    DgpSpec ref = builtin_dgp(c.fam);
    CHECK(dgp_to_json(from_file).dump() == dgp_to_json(ref).dump());
  }
  SnmmSpec snmm = load_snmm_file(dir + "snmm_sim.json");
  CHECK(snmm_to_json(snmm).dump() == snmm_to_json(builtin_dgp(OutcomeFamily::normal).snmm).dump());
}

TEST_CASE("the hypothesis battery has the paper layout") {
  Eigen::VectorXd g0(9);
  g0 << 2, 3, -4, -4, 3, 3, -4, -4, 3;
  auto battery = paper_battery(g0, 1.0);
  REQUIRE(battery.size() == 30);
  CHECK(battery[0].name == "A0");
  CHECK(battery[0].H(0, 0) == 1.0);
  CHECK(battery[0].rho[0] == 2.0);
  CHECK(battery[2].name == "A2");
  CHECK(battery[2].rho[0] == 4.0);
  // F0 tests the first time-3 component
  CHECK(battery[15].name == "F0");
  CHECK(battery[15].H(0, 5) == 1.0);
  auto& j1 = battery[28];
  CHECK(j1.name == "J1");
  REQUIRE(j1.H.rows() == 4);
  CHECK(j1.H(0, 1) == 1.0);
  CHECK(j1.H(0, 5) == -1.0);
  CHECK(j1.rho[0] == 1.0);
  for (auto& h : battery) h.validate(9);
  CHECK_THROWS_AS(paper_battery(Eigen::VectorXd::Zero(5), 1.0), Error);
}

TEST_CASE("study config from json with builtin dgp and battery") {
  json doc = json::parse(R"({
    "dgp_builtin": "normal",
    "n_list": [200],
    "mc_reps": 3,
    "bootstrap_B": 10,
    "alpha": 0.05,
    "seed": 9,
    "battery": {"c": 1.0}
  })");
  StudyConfig cfg = study_config_from_json(doc);
  CHECK(cfg.hypotheses.size() == 30);
  CHECK(cfg.dgp.family == OutcomeFamily::normal);
  json round = study_config_to_json(cfg);
  StudyConfig back = study_config_from_json(round);
  CHECK(back.hypotheses.size() == 30);
  CHECK(study_config_to_json(back).dump() == round.dump());

  json bad = doc;
  bad["alpha"] = 1.5;
  CHECK_THROWS_AS(study_config_from_json(bad), Error);
}

TEST_CASE("report numbers snap to 12 significant digits") {
  double v = 0.123456789012345678;
  json j = report_num(v);
  CHECK(j.get<double>() == doctest::Approx(0.123456789012).epsilon(1e-12));
  CHECK(report_num(1.0).get<double>() == 1.0);
  CHECK(report_num(-5.0).dump() == "-5");
}

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "bliptest/json_io.hpp"
#include "support/medical_synth.hpp"

using namespace bliptest;

namespace {

struct CmdResult {
  int exit_code;
  std::string out;
};

std::string scratch_dir() {
  static std::string dir = [] {
    char tmpl[] = "/tmp/bliptest_cli_XXXXXX";
    char* d = mkdtemp(tmpl);
    REQUIRE(d != nullptr);
    return std::string(d);
  }();
  return dir;
}

CmdResult run_cmd(const std::string& cmd) {
  std::string out_file = scratch_dir() + "/cmd_out.txt";
  std::string full = cmd + " > " + out_file + " 2>&1";
  int status = std::system(full.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(out_file);
  std::stringstream ss;
  ss << f.rdbuf();
  r.out = ss.str();
  return r;
}

const std::string kBin = BLIPTEST_BIN;
const std::string kSpecDir = std::string(BLIPTEST_SOURCE_DIR) + "/specs";

} // namespace

TEST_CASE("generate then estimate round-trips through the CLI") {
  std::string dir = scratch_dir();
  CmdResult gen = run_cmd(kBin + " generate --builtin normal --n 800 --seed 21 --out " + dir +
                          "/d.csv");
  REQUIRE(gen.exit_code == 0);

  CmdResult est = run_cmd(kBin + " estimate --data " + dir + "/d.csv --snmm " + kSpecDir +
                          "/snmm_sim.json --json");
  REQUIRE(est.exit_code == 0);
  json j = json::parse(est.out);
  REQUIRE(j.at("gamma").size() == 9);
  CHECK(j.at("design").at("rank") == 9);
  CHECK(j.at("n") == 800);

  // the text report carries the same numbers (%.6g rendering)
  CmdResult text = run_cmd(kBin + " estimate --data " + dir + "/d.csv --snmm " + kSpecDir +
                           "/snmm_sim.json");
  REQUIRE(text.exit_code == 0);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", j.at("gamma")[0].get<double>());
  CHECK(text.out.find(buf) != std::string::npos);
  CHECK(text.out.find("assignment condition") != std::string::npos);
}

TEST_CASE("estimate exits 2 on an empty control cell, naming the stratum") {
  std::string dir = scratch_dir();
  // x2=1 has treated subjects but no control subjects
  std::string csv =
      "id,z1,x2,z2,y\n"
      "1,0,0,0,1.0\n2,1,0,1,2.0\n3,0,0,1,1.5\n4,1,1,1,2.5\n5,0,1,1,0.5\n";
  std::ofstream(dir + "/bad.csv") << csv;
  std::ofstream(dir + "/snmm2.json") << R"([
    {"type":"indicator","t":1,"x_in":[0],"z_in":[1]},
    {"type":"indicator","t":2,"x_in":[0,1],"z_in":[1]}
  ])";
  CmdResult r = run_cmd(kBin + " estimate --data " + dir + "/bad.csv --snmm " + dir +
                        "/snmm2.json");
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("x=1") != std::string::npos);
}

TEST_CASE("missing input file exits 3; bad flags exit 1") {
  CmdResult io = run_cmd(kBin + " estimate --data /nonexistent.csv --snmm /nonexistent.json");
  CHECK(io.exit_code == 3);
  CmdResult usage = run_cmd(kBin + " estimate --no-such-flag");
  CHECK(usage.exit_code == 1);
  CmdResult nosub = run_cmd(kBin);
  CHECK(nosub.exit_code == 1);
}

TEST_CASE("test subcommand: post-hoc hypothesis gives W=0 and byte-stable output") {
  std::string dir = scratch_dir();
  REQUIRE(run_cmd(kBin + " generate --builtin normal --n 500 --seed 8 --out " + dir + "/t.csv")
              .exit_code == 0);
  CmdResult est = run_cmd(kBin + " estimate --data " + dir + "/t.csv --snmm " + kSpecDir +
                          "/snmm_sim.json --json");
  REQUIRE(est.exit_code == 0);
  json fit = json::parse(est.out);

  json hyp;
  hyp["name"] = "posthoc";
  json H = json::array();
  for (int r = 0; r < 9; ++r) {
    json row = json::array();
    for (int c = 0; c < 9; ++c) row.push_back(r == c ? 1.0 : 0.0);
    H.push_back(row);
  }
  hyp["H"] = H;
  hyp["rho"] = fit.at("gamma");
  std::ofstream(dir + "/posthoc.json") << hyp.dump();

  std::string cmd = kBin + " test --data " + dir + "/t.csv --snmm " + kSpecDir +
                    "/snmm_sim.json --hypothesis " + dir +
                    "/posthoc.json --boot 60 --seed 4 --json";
  CmdResult t1 = run_cmd(cmd + " --threads 1");
  REQUIRE(t1.exit_code == 0);
  json w = json::parse(t1.out);
  CHECK(w.at("W").get<double>() < 1e-12);
  CHECK(w.at("p_value").get<double>() == 1.0);
  CHECK_FALSE(w.at("reject").get<bool>());

  // byte-identical across runs and thread counts
  CmdResult t4 = run_cmd(cmd + " --threads 4");
  CHECK(t1.out == t4.out);

  // the env fallback steers the worker budget without changing results
  CmdResult tenv = run_cmd("BLIPTEST_THREADS=3 " + cmd);
  CHECK(tenv.exit_code == 0);
  CHECK(tenv.out == t1.out);
}

TEST_CASE("medical subcommand runs on synthetic two-period data") {
  std::string dir = scratch_dir();
  testsupport::MedicalSynthParams p;
  SequentialDataset ds = testsupport::medical_synthetic(p, 600, 5);
  write_dataset_file(ds, dir + "/med.csv");
  CmdResult r = run_cmd(kBin + " medical --data " + dir +
                        "/med.csv --boot 50 --seed 3 --json --model1-covariates x11,x13 "
                        "--model2-covariates x11");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  REQUIRE(j.at("blip_effects").size() == 3);
  CHECK(j.at("blip_effects")[1].at("estimate") == j.at("point_effects")[1].at("estimate"));
  CHECK(j.at("model1_terms").size() == 4); // 1, x11, x13, z1
}

TEST_CASE("simulate writes deterministic artifacts") {
  std::string dir = scratch_dir();
  json cfg;
  cfg["dgp_builtin"] = "normal";
  cfg["n_list"] = {200};
  cfg["mc_reps"] = 6;
  cfg["bootstrap_B"] = 20;
  cfg["alpha"] = 0.05;
  cfg["seed"] = 99;
  cfg["battery"] = {{"c", 1.0}};
  std::ofstream(dir + "/study.json") << cfg.dump();
  CmdResult r1 = run_cmd(kBin + " simulate --config " + dir + "/study.json --out " + dir +
                         "/out1 --threads 1");
  REQUIRE(r1.exit_code == 0);
  CmdResult r2 = run_cmd(kBin + " simulate --config " + dir + "/study.json --out " + dir +
                         "/out2 --threads 4");
  REQUIRE(r2.exit_code == 0);
  auto slurp = [](const std::string& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  CHECK(slurp(dir + "/out1/study.json") == slurp(dir + "/out2/study.json"));
  CHECK(slurp(dir + "/out1/rates.csv") == slurp(dir + "/out2/rates.csv"));
  CHECK(!slurp(dir + "/out1/estimates.csv").empty());
}

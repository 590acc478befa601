#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bliptest/json_io.hpp"
#include "bliptest/mc_study.hpp"
#include "bliptest/medical.hpp"
#include "bliptest/parallel.hpp"
#include "bliptest/util.hpp"

namespace bt = bliptest;

namespace {

std::string fmt6(double v) { return bt::strf("%.6g", v); }

bt::json stratum_json(const bt::Stratum& s) {
  bt::json j;
  j["t"] = s.t;
  j["x"] = s.x;
  j["z"] = s.z;
  return j;
}

bt::json assignment_json(const bt::AssignmentDiagnostic& diag) {
  bt::json arr = bt::json::array();
  for (const auto& c : diag.cells) {
    bt::json e;
    e["t"] = c.t;
    e["x"] = c.x_level;
    e["n"] = c.n;
    e["applicable"] = c.applicable;
    if (c.applicable) {
      e["statistic"] = bt::report_num(c.statistic);
      e["df"] = c.df;
      e["p_value"] = bt::report_num(c.p_value);
    }
    arr.push_back(std::move(e));
  }
  return arr;
}

void print_assignment(std::ostream& os, const bt::AssignmentDiagnostic& diag) {
  os << "assignment condition (z_t vs z_{t-1} within x_t levels, advisory):\n";
  for (const auto& c : diag.cells) {
    os << "  t=" << c.t << " x=" << bt::format_level(c.x_level) << "  n=" << c.n << "  ";
    if (c.applicable)
      os << "chi2=" << fmt6(c.statistic) << " df=" << c.df << " p=" << fmt6(c.p_value) << "\n";
    else
      os << "not applicable (degenerate table)\n";
  }
}

struct CommonArgs {
  std::string data_path;
  std::string family = "normal";
  std::string variance_mode = "sample";
  bool json_out = false;
  int threads = 0;
  uint64_t seed = 1;
};

int cmd_generate(const std::string& config_path, const std::string& builtin, int n, uint64_t seed,
                 const std::string& out_path) {
  bt::DgpSpec spec = config_path.empty()
                         ? bt::builtin_dgp(bt::family_from_string(builtin))
                         : bt::load_dgp_file(config_path);
  bt::SequentialDataset ds = bt::generate_dataset(spec, n, seed);
  if (out_path.empty()) {
    bt::serialize_dataset(ds, std::cout);
  } else {
    bt::write_dataset_file(ds, out_path);
    std::cerr << "wrote " << ds.size() << " subjects to " << out_path << "\n";
  }
  return 0;
}

int cmd_estimate(const CommonArgs& args, const std::string& snmm_path) {
  bt::SequentialDataset ds =
      bt::parse_dataset_file(args.data_path, bt::family_from_string(args.family));
  bt::SnmmSpec snmm = bt::load_snmm_file(snmm_path);
  bt::FitOptions opts{bt::variance_mode_from_string(args.variance_mode)};
  bt::FitResult fit = bt::fit_blip(ds, snmm, opts);
  bt::AssignmentDiagnostic diag = bt::check_assignment_condition(ds);

  if (args.json_out) {
    bt::json j;
    j["n"] = ds.size();
    j["variance_mode"] = args.variance_mode;
    j["labels"] = fit.estimate.basis_labels;
    bt::json g = bt::json::array(), se = bt::json::array();
    for (Eigen::Index i = 0; i < fit.estimate.gamma.size(); ++i) {
      g.push_back(bt::report_num(fit.estimate.gamma[i]));
      se.push_back(bt::report_num(std::sqrt(fit.estimate.cov_conditional(i, i))));
    }
    j["gamma"] = std::move(g);
    j["conditional_se"] = std::move(se);
    bt::json cov = bt::json::array();
    for (Eigen::Index r = 0; r < fit.estimate.cov_conditional.rows(); ++r) {
      bt::json row = bt::json::array();
      for (Eigen::Index c = 0; c < fit.estimate.cov_conditional.cols(); ++c)
        row.push_back(bt::report_num(fit.estimate.cov_conditional(r, c)));
      cov.push_back(std::move(row));
    }
    j["cov_conditional"] = std::move(cov);
    j["design"] = {{"rank", fit.design.rank}, {"condition", bt::report_num(fit.design.condition)}};
    bt::json pe = bt::json::array();
    for (const auto& e : fit.point_effects.entries) {
      bt::json v = stratum_json(e.stratum);
      v["theta"] = bt::report_num(e.theta);
      pe.push_back(std::move(v));
    }
    j["point_effects"] = std::move(pe);
    j["assignment_condition"] = assignment_json(diag);
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  std::cout << "blip effect estimate  (n=" << ds.size() << ", variance mode " << args.variance_mode
            << ")\n";
  for (Eigen::Index i = 0; i < fit.estimate.gamma.size(); ++i)
    std::cout << "  " << fit.estimate.basis_labels[i] << " = " << fmt6(fit.estimate.gamma[i])
              << "  (cond. SE " << fmt6(std::sqrt(fit.estimate.cov_conditional(i, i))) << ")\n";
  std::cout << "design: " << fit.design.C.rows() << " strata x " << fit.design.C.cols()
            << " basis functions, rank " << fit.design.rank << ", condition "
            << fmt6(fit.design.condition) << "\n";
  std::cout << "point effects:\n";
  for (const auto& e : fit.point_effects.entries)
    std::cout << "  " << bt::to_string(e.stratum) << "  theta = " << fmt6(e.theta) << "\n";
  print_assignment(std::cout, diag);
  return 0;
}

int cmd_test(const CommonArgs& args, const std::string& snmm_path, const std::string& hyp_path,
             int B, double alpha) {
  bt::SequentialDataset ds =
      bt::parse_dataset_file(args.data_path, bt::family_from_string(args.family));
  bt::SnmmSpec snmm = bt::load_snmm_file(snmm_path);
  bt::Hypothesis hyp = bt::load_hypothesis_file(hyp_path);
  bt::FitOptions opts{bt::variance_mode_from_string(args.variance_mode)};
  int threads = bt::resolve_threads(args.threads);

  bt::FitResult fit = bt::fit_blip(ds, snmm, opts);
  bt::BootstrapResult boot =
      bt::bootstrap_marginal_cov(ds, snmm, B, args.seed, opts, threads);
  fit.estimate.cov_marginal = boot.cov;
  bt::WaldResult w = bt::wald(fit.estimate, hyp, alpha);

  if (args.json_out) {
    bt::json j;
    j["n"] = ds.size();
    j["hypothesis"] = hyp.name;
    j["W"] = bt::report_num(w.W);
    j["df"] = w.df;
    j["p_value"] = bt::report_num(w.p_value);
    j["alpha"] = bt::report_num(alpha);
    j["reject"] = w.reject;
    j["bootstrap"] = {{"B", boot.requested}, {"failed", boot.failed}, {"seed", args.seed}};
    bt::json coef = bt::json::array();
    for (Eigen::Index i = 0; i < fit.estimate.gamma.size(); ++i) {
      double se = std::sqrt((*fit.estimate.cov_marginal)(i, i));
      bt::json e;
      e["label"] = fit.estimate.basis_labels[i];
      e["estimate"] = bt::report_num(fit.estimate.gamma[i]);
      e["se"] = bt::report_num(se);
      e["ci_low"] = bt::report_num(fit.estimate.gamma[i] - 1.96 * se);
      e["ci_high"] = bt::report_num(fit.estimate.gamma[i] + 1.96 * se);
      coef.push_back(std::move(e));
    }
    j["coefficients"] = std::move(coef);
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  std::cout << "Wald test of " << hyp.name << "  (n=" << ds.size() << ", B=" << boot.requested
            << ", seed=" << args.seed << ")\n";
  std::cout << "  W = " << fmt6(w.W) << ", df = " << w.df << ", p = " << fmt6(w.p_value) << "\n";
  std::cout << "  " << (w.reject ? "reject" : "accept") << " at alpha = " << fmt6(alpha) << "\n";
  if (boot.failed > 0)
    std::cout << "  (" << boot.failed << " of " << boot.requested
              << " bootstrap replicates failed and were dropped)\n";
  std::cout << "coefficients (marginal SE, 95% CI):\n";
  for (Eigen::Index i = 0; i < fit.estimate.gamma.size(); ++i) {
    double se = std::sqrt((*fit.estimate.cov_marginal)(i, i));
    std::cout << "  " << fit.estimate.basis_labels[i] << " = " << fmt6(fit.estimate.gamma[i])
              << "  SE " << fmt6(se) << "  [" << fmt6(fit.estimate.gamma[i] - 1.96 * se) << ", "
              << fmt6(fit.estimate.gamma[i] + 1.96 * se) << "]\n";
  }
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, int threads_arg) {
  bt::StudyConfig cfg = bt::load_study_config_file(config_path);
  int threads = bt::resolve_threads(threads_arg);
  bt::StudyResult res = bt::run_study(cfg, threads);

  std::filesystem::create_directories(out_dir);
  bt::json report = bt::study_report_json(cfg, res);
  bt::write_text_file(out_dir + "/study.json", report.dump(2) + "\n");
  bt::write_text_file(out_dir + "/rates.csv", bt::rates_csv(cfg, res));
  bt::write_text_file(out_dir + "/estimates.csv", bt::estimates_csv(cfg, res));

  for (const auto& sr : res.by_n) {
    std::cout << "n = " << sr.n << "  (failed replicates: " << sr.failed << ")\n";
    std::cout << "  hypothesis   rate0     rate1     rate2\n";
    for (const auto& row : bt::grouped_rates(sr)) {
      std::cout << "  " << row.label;
      for (int s = 0; s < 3; ++s)
        std::cout << "   " << (row.shift[s] ? fmt6(row.shift[s]->rate) : "-");
      std::cout << "\n";
    }
  }
  std::cerr << "wrote study.json, rates.csv, estimates.csv to " << out_dir << "\n";
  return 0;
}

int cmd_medical(const CommonArgs& args, int B, double alpha, bool auto_select,
                const std::string& cov1, const std::string& cov2) {
  bt::SequentialDataset ds = bt::parse_dataset_file(args.data_path, bt::OutcomeFamily::bernoulli);
  bt::MedicalOptions opt;
  opt.bootstrap_B = B;
  opt.seed = args.seed;
  opt.alpha = alpha;
  opt.auto_select = auto_select;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  };
  opt.model1_covariates = split(cov1);
  opt.model2_covariates = split(cov2);
  int threads = bt::resolve_threads(args.threads);
  bt::MedicalReport rep = bt::run_medical(ds, opt, threads);

  auto coef_json = [](const bt::CoefficientReport& c) {
    bt::json e;
    e["name"] = c.name;
    e["estimate"] = bt::report_num(c.estimate);
    e["se"] = bt::report_num(c.se);
    e["ci_low"] = bt::report_num(c.ci_low);
    e["ci_high"] = bt::report_num(c.ci_high);
    e["W"] = bt::report_num(c.W);
    e["p_value"] = bt::report_num(c.p_value);
    return e;
  };

  if (args.json_out) {
    bt::json j;
    j["n"] = ds.size();
    j["c20"] = bt::report_num(rep.c20);
    j["c21"] = bt::report_num(rep.c21);
    bt::json blip = bt::json::array(), point = bt::json::array();
    for (const auto& c : rep.blip) blip.push_back(coef_json(c));
    for (const auto& c : rep.point) point.push_back(coef_json(c));
    j["blip_effects"] = std::move(blip);
    j["point_effects"] = std::move(point);
    j["bootstrap"] = {{"B", rep.bootstrap_requested},
                      {"failed", rep.bootstrap_failed},
                      {"seed", args.seed}};
    bt::json sel = bt::json::array();
    for (const auto& s : rep.selection) {
      bt::json e;
      e["model"] = s.model;
      e["term"] = s.term;
      e["p_value"] = bt::report_num(s.p_value);
      e["dropped"] = s.dropped;
      sel.push_back(std::move(e));
    }
    j["covariate_significance"] = std::move(sel);
    bt::json m1_terms = rep.model1.terms, m2_terms = rep.model2_x2_0.terms;
    j["model1_terms"] = std::move(m1_terms);
    j["model2_terms"] = std::move(m2_terms);
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  std::cout << "two-period analysis  (n=" << ds.size() << ", B=" << rep.bootstrap_requested
            << ", seed=" << args.seed << ")\n";
  std::cout << "decomposition coefficients: c20 = " << fmt6(rep.c20)
            << ", c21 = " << fmt6(rep.c21) << "\n";
  std::cout << "covariate significance (level " << fmt6(opt.select_level)
            << (opt.auto_select ? ", applied" : ", advisory") << "):\n";
  for (const auto& s : rep.selection)
    std::cout << "  " << s.model << " term " << s.term << "  p=" << fmt6(s.p_value)
              << (s.dropped ? "  [dropped]" : "") << "\n";
  std::cout << "blip effects (95% CI, p for = 0):\n";
  for (const auto& c : rep.blip)
    std::cout << "  " << c.name << " = " << fmt6(c.estimate) << "  [" << fmt6(c.ci_low) << ", "
              << fmt6(c.ci_high) << "]  p=" << fmt6(c.p_value) << "\n";
  std::cout << "point effects (95% CI, p for = 0):\n";
  for (const auto& c : rep.point)
    std::cout << "  " << c.name << " = " << fmt6(c.estimate) << "  [" << fmt6(c.ci_low) << ", "
              << fmt6(c.ci_high) << "]  p=" << fmt6(c.p_value) << "\n";
  if (rep.bootstrap_failed > 0)
    std::cout << "(" << rep.bootstrap_failed << " bootstrap replicates failed and were dropped)\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"blip-effect estimation and Wald testing for treatment sequences"};
  app.require_subcommand(1);

  CommonArgs args;

  // generate
  auto* gen = app.add_subcommand("generate", "sample a dataset from a generative spec");
  std::string gen_config, gen_builtin = "normal", gen_out;
  int gen_n = 1000;
  uint64_t gen_seed = 1;
  gen->add_option("--config", gen_config, "DgpSpec JSON file");
  gen->add_option("--builtin", gen_builtin, "builtin spec: normal|bernoulli|poisson");
  gen->add_option("--n", gen_n, "number of subjects");
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--out", gen_out, "output CSV path (default: stdout)");

  // estimate
  auto* est = app.add_subcommand("estimate", "estimate blip effects from a dataset");
  std::string est_snmm;
  est->add_option("--data", args.data_path, "dataset CSV")->required();
  est->add_option("--snmm", est_snmm, "SNMM JSON file")->required();
  est->add_option("--family", args.family, "outcome family (default normal)");
  est->add_option("--variance-mode", args.variance_mode, "sample|pooled_normal|plugin_family");
  est->add_flag("--json", args.json_out, "machine-readable output");

  // test
  auto* tst = app.add_subcommand("test", "Wald test of a linear hypothesis");
  std::string tst_snmm, tst_hyp;
  int tst_B = 500;
  double tst_alpha = 0.05;
  tst->add_option("--data", args.data_path, "dataset CSV")->required();
  tst->add_option("--snmm", tst_snmm, "SNMM JSON file")->required();
  tst->add_option("--hypothesis", tst_hyp, "hypothesis JSON file")->required();
  tst->add_option("--family", args.family, "outcome family (default normal)");
  tst->add_option("--variance-mode", args.variance_mode, "sample|pooled_normal|plugin_family");
  tst->add_option("--boot", tst_B, "bootstrap replicates (default 500)");
  tst->add_option("--seed", args.seed, "bootstrap seed");
  tst->add_option("--alpha", tst_alpha, "significance level (default 0.05)");
  tst->add_option("--threads", args.threads, "worker threads (default: BLIPTEST_THREADS or all)");
  tst->add_flag("--json", args.json_out, "machine-readable output");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo error-rate study");
  std::string sim_config, sim_out = ".";
  int sim_threads = 0;
  sim->add_option("--config", sim_config, "StudyConfig JSON file")->required();
  sim->add_option("--out", sim_out, "output directory (default .)");
  sim->add_option("--threads", sim_threads, "worker threads (default: BLIPTEST_THREADS or all)");

  // medical
  auto* med = app.add_subcommand("medical", "two-period workflow (bernoulli outcome)");
  int med_B = 500;
  double med_alpha = 0.05;
  bool med_auto = false;
  std::string med_cov1, med_cov2;
  med->add_option("--data", args.data_path, "dataset CSV")->required();
  med->add_option("--boot", med_B, "bootstrap replicates (default 500)");
  med->add_option("--seed", args.seed, "bootstrap seed");
  med->add_option("--alpha", med_alpha, "significance level (default 0.05)");
  med->add_flag("--auto-select", med_auto, "drop covariates non-significant at 0.1");
  med->add_option("--model1-covariates", med_cov1, "comma list (default: all time-1 covariates)");
  med->add_option("--model2-covariates", med_cov2, "comma list (default: all time-1 covariates)");
  med->add_option("--threads", args.threads, "worker threads");
  med->add_flag("--json", args.json_out, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_config, gen_builtin, gen_n, gen_seed, gen_out);
    if (est->parsed()) return cmd_estimate(args, est_snmm);
    if (tst->parsed()) return cmd_test(args, tst_snmm, tst_hyp, tst_B, tst_alpha);
    if (sim->parsed()) return cmd_simulate(sim_config, sim_out, sim_threads);
    if (med->parsed()) return cmd_medical(args, med_B, med_alpha, med_auto, med_cov1, med_cov2);
  } catch (const bt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

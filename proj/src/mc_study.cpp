#include "bliptest/mc_study.hpp"

#include <cmath>

#include "bliptest/parallel.hpp"
#include "bliptest/rng.hpp"
#include "bliptest/util.hpp"

namespace bliptest {

namespace {

struct RepOut {
  bool ok = false;
  std::string error;
  Eigen::VectorXd gamma;
  Eigen::VectorXd gamma_restricted;
  std::vector<uint8_t> reject;
};

Eigen::VectorXd column_mean(const std::vector<const Eigen::VectorXd*>& xs, int k) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(k);
  for (const auto* x : xs) m += *x;
  if (!xs.empty()) m /= static_cast<double>(xs.size());
  return m;
}

Eigen::VectorXd column_var(const std::vector<const Eigen::VectorXd*>& xs,
                           const Eigen::VectorXd& mean) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mean.size());
  for (const auto* x : xs) v += (*x - mean).cwiseAbs2();
  if (xs.size() > 1) v /= static_cast<double>(xs.size() - 1);
  return v;
}

} // namespace

StudyResult run_study(const StudyConfig& cfg, int threads) {
  cfg.validate();
  const int k = cfg.dgp.snmm.k();
  const Hypothesis* j0 = nullptr;
  for (const auto& h : cfg.hypotheses)
    if (h.name == "J0") j0 = &h;

  StudyResult result;
  PreparedDgp prepared = prepare_dgp(cfg.dgp);
  for (size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
    const int n = cfg.n_list[ni];
    std::vector<RepOut> reps(static_cast<size_t>(cfg.mc_reps));

    parallel_for(cfg.mc_reps, threads, [&](int r) {
      RepOut& out = reps[static_cast<size_t>(r)];
      uint64_t ds_seed = derive_seed(cfg.seed, ni, static_cast<uint64_t>(r), 0);
      uint64_t boot_seed = derive_seed(cfg.seed, ni, static_cast<uint64_t>(r), 1);
      try {
        SequentialDataset ds = generate_dataset(prepared, n, ds_seed);
        FitResult fit = fit_blip(ds, cfg.dgp.snmm, {cfg.variance_mode});
        BootstrapResult boot = bootstrap_marginal_cov(ds, cfg.dgp.snmm, cfg.bootstrap_B,
                                                      boot_seed, {cfg.variance_mode}, 1);
        fit.estimate.cov_marginal = boot.cov;
        out.gamma = fit.estimate.gamma;
        out.reject.resize(cfg.hypotheses.size());
        for (size_t h = 0; h < cfg.hypotheses.size(); ++h)
          out.reject[h] = wald(fit.estimate, cfg.hypotheses[h], cfg.alpha).reject ? 1 : 0;
        if (j0) out.gamma_restricted = restricted_gls(fit.estimate, *j0).gamma;
        out.ok = true;
      } catch (const Error& err) {
        if (!err.replicate_recoverable()) throw;
        out.ok = false;
        out.error = err.what();
      }
    });

    SampleSizeResult sr;
    sr.n = n;
    sr.has_restricted = j0 != nullptr;
    std::vector<const Eigen::VectorXd*> gammas, restricted;
    std::vector<int> rejections(cfg.hypotheses.size(), 0);
    int ok = 0;
    for (int r = 0; r < cfg.mc_reps; ++r) {
      const RepOut& out = reps[static_cast<size_t>(r)];
      ReplicateRecord rec;
      rec.replicate = r;
      rec.dataset_seed = derive_seed(cfg.seed, ni, static_cast<uint64_t>(r), 0);
      rec.bootstrap_seed = derive_seed(cfg.seed, ni, static_cast<uint64_t>(r), 1);
      rec.ok = out.ok;
      rec.error = out.error;
      sr.replicates.push_back(std::move(rec));
      if (!out.ok) continue;
      ++ok;
      gammas.push_back(&out.gamma);
      if (j0) restricted.push_back(&out.gamma_restricted);
      for (size_t h = 0; h < cfg.hypotheses.size(); ++h) rejections[h] += out.reject[h];
    }
    sr.failed = cfg.mc_reps - ok;
    if (sr.failed * 10 > cfg.mc_reps)
      throw Error(ErrorKind::statistical,
                  strf("study aborted: %d of %d replicates failed at n=%d", sr.failed,
                       cfg.mc_reps, n));
    for (size_t h = 0; h < cfg.hypotheses.size(); ++h) {
      HypothesisRate hr;
      hr.name = cfg.hypotheses[h].name;
      hr.rejections = rejections[h];
      hr.reps = ok;
      hr.rate = ok > 0 ? static_cast<double>(rejections[h]) / ok : 0.0;
      hr.mc_se = ok > 0 ? std::sqrt(hr.rate * (1.0 - hr.rate) / ok) : 0.0;
      sr.rates.push_back(std::move(hr));
    }
    sr.gamma_mean = column_mean(gammas, k);
    sr.gamma_var = column_var(gammas, sr.gamma_mean);
    if (j0) {
      sr.restricted_mean = column_mean(restricted, k);
      sr.restricted_var = column_var(restricted, sr.restricted_mean);
    }
    result.by_n.push_back(std::move(sr));
  }
  return result;
}

std::vector<ErrorRateRow> grouped_rates(const SampleSizeResult& r) {
  std::vector<ErrorRateRow> rows;
  auto find_row = [&](const std::string& label) -> ErrorRateRow& {
    for (auto& row : rows)
      if (row.label == label) return row;
    rows.push_back(ErrorRateRow{label, r.n, {}});
    return rows.back();
  };
  for (const auto& hr : r.rates) {
    if (hr.name.size() >= 2 && hr.name.back() >= '0' && hr.name.back() <= '2') {
      std::string label = hr.name.substr(0, hr.name.size() - 1);
      int shift = hr.name.back() - '0';
      find_row(label).shift[shift] = hr;
    } else {
      find_row(hr.name).shift[0] = hr;
    }
  }
  return rows;
}

json study_report_json(const StudyConfig& cfg, const StudyResult& res) {
  json report;
  json config = study_config_to_json(cfg);
  report["config"] = config;
  report["config_hash"] = strf("%016llx",
                               static_cast<unsigned long long>(fnv1a64(config.dump())));
  report["family"] = to_string(cfg.dgp.family);
  json by_n = json::array();
  for (const auto& sr : res.by_n) {
    json e;
    e["n"] = sr.n;
    e["failed_replicates"] = sr.failed;
    json rates = json::object();
    for (const auto& hr : sr.rates) {
      json v;
      v["rejections"] = hr.rejections;
      v["reps"] = hr.reps;
      v["rate"] = report_num(hr.rate);
      v["mc_se"] = report_num(hr.mc_se);
      rates[hr.name] = std::move(v);
    }
    e["reject_rates"] = std::move(rates);
    json gm = json::array(), gv = json::array();
    for (Eigen::Index i = 0; i < sr.gamma_mean.size(); ++i) {
      gm.push_back(report_num(sr.gamma_mean[i]));
      gv.push_back(report_num(sr.gamma_var[i]));
    }
    e["gamma_mean"] = std::move(gm);
    e["gamma_var"] = std::move(gv);
    if (sr.has_restricted) {
      json rm = json::array(), rv = json::array();
      for (Eigen::Index i = 0; i < sr.restricted_mean.size(); ++i) {
        rm.push_back(report_num(sr.restricted_mean[i]));
        rv.push_back(report_num(sr.restricted_var[i]));
      }
      e["gamma_mean_under_J0"] = std::move(rm);
      e["gamma_var_under_J0"] = std::move(rv);
    }
    json recs = json::array();
    for (const auto& rec : sr.replicates) {
      json v;
      v["replicate"] = rec.replicate;
      v["dataset_seed"] = rec.dataset_seed;
      v["bootstrap_seed"] = rec.bootstrap_seed;
      v["ok"] = rec.ok;
      if (!rec.ok) v["error"] = rec.error;
      recs.push_back(std::move(v));
    }
    e["replicates"] = std::move(recs);
    by_n.push_back(std::move(e));
  }
  report["results"] = std::move(by_n);
  return report;
}

std::string rates_csv(const StudyConfig& cfg, const StudyResult& res) {
  std::string out = "family,n,hypothesis,rate0,se0,rate1,se1,rate2,se2\n";
  for (const auto& sr : res.by_n) {
    for (const auto& row : grouped_rates(sr)) {
      out += to_string(cfg.dgp.family) + "," + std::to_string(sr.n) + "," + row.label;
      for (int s = 0; s < 3; ++s) {
        if (row.shift[s]) {
          out += "," + format_g12(row.shift[s]->rate) + "," + format_g12(row.shift[s]->mc_se);
        } else {
          out += ",,";
        }
      }
      out += "\n";
    }
  }
  return out;
}

std::string estimates_csv(const StudyConfig& cfg, const StudyResult& res) {
  std::string out =
      "family,n,component,true_value,mean,variance,mean_under_J0,variance_under_J0\n";
  auto labels = cfg.dgp.snmm.labels();
  for (const auto& sr : res.by_n) {
    for (Eigen::Index i = 0; i < sr.gamma_mean.size(); ++i) {
      out += to_string(cfg.dgp.family) + "," + std::to_string(sr.n) + "," + labels[i] + "," +
             format_g12(cfg.dgp.gamma_true[i]) + "," + format_g12(sr.gamma_mean[i]) + "," +
             format_g12(sr.gamma_var[i]);
      if (sr.has_restricted)
        out += "," + format_g12(sr.restricted_mean[i]) + "," + format_g12(sr.restricted_var[i]);
      else
        out += ",,";
      out += "\n";
    }
  }
  return out;
}

} // namespace bliptest

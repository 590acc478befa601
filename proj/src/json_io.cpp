#include "bliptest/json_io.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bliptest/util.hpp"

namespace bliptest {

namespace {

double level_from_string(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw Error(ErrorKind::config, "cannot parse level value '" + s + "'");
  return v;
}

HistoryKey key_from_string(const std::string& s) {
  HistoryKey key;
  if (s.empty()) return key;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) key.push_back(level_from_string(tok));
  return key;
}

std::string key_to_string(const HistoryKey& key) {
  std::vector<std::string> parts;
  for (double v : key) parts.push_back(format_level(v));
  return join(parts, ",");
}

std::vector<double> doubles_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorKind::config, what + " must be an array");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(ErrorKind::config, what + " must contain numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

} // namespace

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot open file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, "invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot write file " + path);
  f << content;
}

json report_num(double v) {
  return json::parse(format_g12(v));
}

SnmmSpec snmm_from_json(const json& j) {
  const json* entries = &j;
  if (j.is_object() && j.contains("basis")) entries = &j.at("basis");
  if (!entries->is_array()) throw Error(ErrorKind::config, "SNMM document must be a JSON array");
  SnmmSpec snmm;
  for (size_t i = 0; i < entries->size(); ++i) {
    const json& e = (*entries)[i];
    std::string type = e.value("type", "");
    BasisFunction f;
    f.label = e.value("label", "");
    if (type == "indicator") {
      IndicatorBasis ind;
      ind.t = e.at("t").get<int>();
      ind.x_in = doubles_from_json(e.at("x_in"), "x_in");
      ind.z_in = doubles_from_json(e.at("z_in"), "z_in");
      f.fn = std::move(ind);
    } else if (type == "linear") {
      LinearBasis lin;
      for (const auto& t : e.at("t_set")) lin.t_set.push_back(t.get<int>());
      for (const auto& [lvl, slope] : e.at("g").items())
        lin.g[level_from_string(lvl)] = slope.get<double>();
      f.fn = std::move(lin);
    } else {
      throw Error(ErrorKind::config,
                  strf("SNMM entry %zu has unknown type '%s'", i + 1, type.c_str()));
    }
    snmm.basis.push_back(std::move(f));
  }
  snmm.validate();
  return snmm;
}

json snmm_to_json(const SnmmSpec& snmm) {
  json arr = json::array();
  for (const auto& f : snmm.basis) {
    json e;
    if (const auto* ind = std::get_if<IndicatorBasis>(&f.fn)) {
      e["type"] = "indicator";
      e["t"] = ind->t;
      e["x_in"] = ind->x_in;
      e["z_in"] = ind->z_in;
    } else {
      const auto& lin = std::get<LinearBasis>(f.fn);
      e["type"] = "linear";
      e["t_set"] = lin.t_set;
      json g = json::object();
      for (const auto& [lvl, slope] : lin.g) g[format_level(lvl)] = slope;
      e["g"] = std::move(g);
    }
    if (!f.label.empty()) e["label"] = f.label;
    arr.push_back(std::move(e));
  }
  return arr;
}

SnmmSpec load_snmm_file(const std::string& path) { return snmm_from_json(load_json_file(path)); }

Hypothesis hypothesis_from_json(const json& j) {
  Hypothesis h;
  h.name = j.value("name", "H");
  const json& H = j.at("H");
  if (!H.is_array() || H.empty()) throw Error(ErrorKind::config, "H must be a non-empty matrix");
  size_t cols = 0;
  for (size_t r = 0; r < H.size(); ++r) {
    std::vector<double> row = doubles_from_json(H[r], "H row");
    if (r == 0) {
      cols = row.size();
      h.H.resize(static_cast<Eigen::Index>(H.size()), static_cast<Eigen::Index>(cols));
    } else if (row.size() != cols) {
      throw Error(ErrorKind::config, "H rows have inconsistent lengths");
    }
    for (size_t c = 0; c < cols; ++c) h.H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  std::vector<double> rho = doubles_from_json(j.at("rho"), "rho");
  h.rho = Eigen::Map<Eigen::VectorXd>(rho.data(), static_cast<Eigen::Index>(rho.size()));
  if (h.rho.size() != h.H.rows()) throw Error(ErrorKind::config, "rho length must match H rows");
  return h;
}

json hypothesis_to_json(const Hypothesis& h) {
  json e;
  e["name"] = h.name;
  json H = json::array();
  for (Eigen::Index r = 0; r < h.H.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < h.H.cols(); ++c) row.push_back(h.H(r, c));
    H.push_back(std::move(row));
  }
  e["H"] = std::move(H);
  json rho = json::array();
  for (Eigen::Index i = 0; i < h.rho.size(); ++i) rho.push_back(h.rho[i]);
  e["rho"] = std::move(rho);
  return e;
}

Hypothesis load_hypothesis_file(const std::string& path) {
  return hypothesis_from_json(load_json_file(path));
}

namespace {

LinearForm linear_form_from_json(const json& j) {
  LinearForm f;
  f.intercept = j.value("intercept", 0.0);
  if (j.contains("z"))
    for (const auto& [t, c] : j.at("z").items()) f.z_coef[std::atoi(t.c_str())] = c.get<double>();
  if (j.contains("x"))
    for (const auto& [t, c] : j.at("x").items()) f.x_coef[std::atoi(t.c_str())] = c.get<double>();
  return f;
}

json linear_form_to_json(const LinearForm& f) {
  json j;
  j["intercept"] = f.intercept;
  if (!f.z_coef.empty()) {
    json z = json::object();
    for (const auto& [t, c] : f.z_coef) z[std::to_string(t)] = c;
    j["z"] = std::move(z);
  }
  if (!f.x_coef.empty()) {
    json x = json::object();
    for (const auto& [t, c] : f.x_coef) x[std::to_string(t)] = c;
    j["x"] = std::move(x);
  }
  return j;
}

} // namespace

DgpSpec dgp_from_json(const json& j) {
  DgpSpec spec;
  spec.T = j.at("T").get<int>();
  spec.family = family_from_string(j.at("family").get<std::string>());
  spec.grand_mean = j.at("grand_mean").get<double>();
  spec.sigma = j.value("sigma", 0.0);
  for (const auto& lv : j.at("covariate_levels")) spec.x_levels.push_back(doubles_from_json(lv, "covariate_levels"));
  for (const auto& lv : j.at("treatment_levels")) spec.z_levels.push_back(doubles_from_json(lv, "treatment_levels"));

  // Rows off 1 by rounding beyond double noise are rescaled once; rows
  // already summing to 1 up to last-ulp noise are kept verbatim so that
  // load/save round-trips are the identity.
  auto normalize_row = [](std::vector<double>& probs, const char* what) {
    double sum = 0.0;
    for (double p : probs) sum += p;
    if (std::fabs(sum - 1.0) > 1e-9)
      throw Error(ErrorKind::config, std::string(what) + " does not sum to 1");
    if (std::fabs(sum - 1.0) > 1e-12)
      for (double& p : probs) p /= sum;
  };
  const json& cov = j.at("covariate_given_history");
  if (!cov.is_array() || cov.size() != static_cast<size_t>(spec.T))
    throw Error(ErrorKind::config, "covariate_given_history must have one object per time");
  spec.covariate_given_history.resize(spec.T);
  for (int t = 0; t < spec.T; ++t) {
    for (const auto& [key, row] : cov[t].items()) {
      std::vector<double> probs = doubles_from_json(row, "covariate row");
      normalize_row(probs, "covariate row");
      spec.covariate_given_history[t][key_from_string(key)] = std::move(probs);
    }
  }
  const json& trt = j.at("treatment_given_covariate");
  if (!trt.is_array() || trt.size() != static_cast<size_t>(spec.T))
    throw Error(ErrorKind::config, "treatment_given_covariate must have one object per time");
  spec.treatment_given_covariate.resize(spec.T);
  spec.treatment_given_history.resize(spec.T);
  for (int t = 0; t < spec.T; ++t) {
    for (const auto& [key, row] : trt[t].items()) {
      std::vector<double> probs = doubles_from_json(row, "treatment row");
      normalize_row(probs, "treatment row");
      spec.treatment_given_covariate[t][level_from_string(key)] = std::move(probs);
    }
  }
  spec.snmm = snmm_from_json(j.at("snmm"));
  std::vector<double> g = doubles_from_json(j.at("gamma_true"), "gamma_true");
  spec.gamma_true = Eigen::Map<Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  if (j.contains("zeta")) {
    const json& z = j.at("zeta");
    if (!z.is_array() || z.size() + 1 != static_cast<size_t>(spec.T))
      throw Error(ErrorKind::config, "zeta must have one object per time 2..T");
    spec.zeta.resize(spec.T - 1);
    for (int t = 2; t <= spec.T; ++t)
      for (const auto& [lvl, form] : z[t - 2].items())
        spec.zeta[t - 2][level_from_string(lvl)] = linear_form_from_json(form);
  } else {
    spec.zeta.resize(std::max(0, spec.T - 1));
  }
  spec.validate();
  return spec;
}

json dgp_to_json(const DgpSpec& spec) {
  json j;
  j["T"] = spec.T;
  j["family"] = to_string(spec.family);
  j["grand_mean"] = spec.grand_mean;
  if (spec.family == OutcomeFamily::normal) j["sigma"] = spec.sigma;
  j["covariate_levels"] = spec.x_levels;
  j["treatment_levels"] = spec.z_levels;
  json cov = json::array();
  for (int t = 0; t < spec.T; ++t) {
    json obj = json::object();
    for (const auto& [key, row] : spec.covariate_given_history[t]) obj[key_to_string(key)] = row;
    cov.push_back(std::move(obj));
  }
  j["covariate_given_history"] = std::move(cov);
  json trt = json::array();
  for (int t = 0; t < spec.T; ++t) {
    json obj = json::object();
    for (const auto& [lvl, row] : spec.treatment_given_covariate[t]) obj[format_level(lvl)] = row;
    trt.push_back(std::move(obj));
  }
  j["treatment_given_covariate"] = std::move(trt);
  j["snmm"] = snmm_to_json(spec.snmm);
  json g = json::array();
  for (Eigen::Index i = 0; i < spec.gamma_true.size(); ++i) g.push_back(spec.gamma_true[i]);
  j["gamma_true"] = std::move(g);
  json z = json::array();
  for (int t = 2; t <= spec.T; ++t) {
    json obj = json::object();
    for (const auto& [lvl, form] : spec.zeta[t - 2]) obj[format_level(lvl)] = linear_form_to_json(form);
    z.push_back(std::move(obj));
  }
  j["zeta"] = std::move(z);
  return j;
}

DgpSpec load_dgp_file(const std::string& path) { return dgp_from_json(load_json_file(path)); }

void StudyConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::config, "alpha must lie in (0,1)");
  if (mc_reps < 1) throw Error(ErrorKind::config, "mc_reps must be >= 1");
  if (bootstrap_B < 2) throw Error(ErrorKind::config, "bootstrap_B must be >= 2");
  if (n_list.empty()) throw Error(ErrorKind::config, "n_list must not be empty");
  for (int n : n_list)
    if (n < 1) throw Error(ErrorKind::config, "sample sizes must be >= 1");
  if (hypotheses.empty()) throw Error(ErrorKind::config, "no hypotheses configured");
  for (const auto& h : hypotheses) h.validate(dgp.snmm.k());
}

StudyConfig study_config_from_json(const json& j) {
  StudyConfig cfg;
  if (j.contains("dgp_file"))
    cfg.dgp = load_dgp_file(j.at("dgp_file").get<std::string>());
  else if (j.contains("dgp_builtin"))
    cfg.dgp = builtin_dgp(family_from_string(j.at("dgp_builtin").get<std::string>()));
  else
    cfg.dgp = dgp_from_json(j.at("dgp"));
  for (const auto& n : j.at("n_list")) cfg.n_list.push_back(n.get<int>());
  cfg.mc_reps = j.value("mc_reps", 1000);
  cfg.bootstrap_B = j.value("bootstrap_B", 500);
  cfg.alpha = j.value("alpha", 0.05);
  cfg.seed = j.value("seed", 1ull);
  if (j.contains("variance_mode"))
    cfg.variance_mode = variance_mode_from_string(j.at("variance_mode").get<std::string>());
  if (j.contains("battery")) {
    double c = j.at("battery").at("c").get<double>();
    auto bat = paper_battery(cfg.dgp.gamma_true, c);
    cfg.hypotheses.insert(cfg.hypotheses.end(), bat.begin(), bat.end());
  }
  if (j.contains("hypotheses"))
    for (const auto& h : j.at("hypotheses")) cfg.hypotheses.push_back(hypothesis_from_json(h));
  cfg.validate();
  return cfg;
}

json study_config_to_json(const StudyConfig& cfg) {
  json j;
  j["dgp"] = dgp_to_json(cfg.dgp);
  j["n_list"] = cfg.n_list;
  j["mc_reps"] = cfg.mc_reps;
  j["bootstrap_B"] = cfg.bootstrap_B;
  j["alpha"] = cfg.alpha;
  j["seed"] = cfg.seed;
  j["variance_mode"] = to_string(cfg.variance_mode);
  json hyps = json::array();
  for (const auto& h : cfg.hypotheses) hyps.push_back(hypothesis_to_json(h));
  j["hypotheses"] = std::move(hyps);
  return j;
}

StudyConfig load_study_config_file(const std::string& path) {
  return study_config_from_json(load_json_file(path));
}

std::vector<Hypothesis> paper_battery(const Eigen::VectorXd& gamma0, double c) {
  if (gamma0.size() != 9)
    throw Error(ErrorKind::config,
                "the hypothesis battery requires the 9-component parameter layout");
  std::vector<Hypothesis> out;
  const char* letters = "ABCDEFGHI";
  for (int comp = 0; comp < 9; ++comp) {
    for (int shift = 0; shift <= 2; ++shift) {
      Hypothesis h;
      h.name = strf("%c%d", letters[comp], shift);
      h.H = Eigen::MatrixXd::Zero(1, 9);
      h.H(0, comp) = 1.0;
      h.rho = Eigen::VectorXd::Constant(1, gamma0[comp] + shift * c);
      out.push_back(std::move(h));
    }
  }
  // J: equality of the time-2 and time-3 blocks, shifted by 0, c, 2c
  for (int shift = 0; shift <= 2; ++shift) {
    Hypothesis h;
    h.name = strf("J%d", shift);
    h.H = Eigen::MatrixXd::Zero(4, 9);
    for (int i = 0; i < 4; ++i) {
      h.H(i, 1 + i) = 1.0;
      h.H(i, 5 + i) = -1.0;
    }
    h.rho = Eigen::VectorXd::Constant(4, shift * c);
    out.push_back(std::move(h));
  }
  return out;
}

} // namespace bliptest

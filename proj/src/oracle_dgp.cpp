#include "bliptest/oracle_dgp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "bliptest/rng.hpp"
#include "bliptest/util.hpp"

namespace bliptest {

double LinearForm::eval(const std::vector<double>& x_hist, const std::vector<double>& z_hist) const {
  double v = intercept;
  for (const auto& [t, c] : z_coef) {
    if (t < 1 || t > static_cast<int>(z_hist.size()))
      throw Error(ErrorKind::config, strf("zeta references z%d outside the history", t));
    v += c * z_hist[t - 1];
  }
  for (const auto& [t, c] : x_coef) {
    if (t < 1 || t > static_cast<int>(x_hist.size()))
      throw Error(ErrorKind::config, strf("zeta references x%d outside the history", t));
    v += c * x_hist[t - 1];
  }
  return v;
}

namespace {

std::string key_string(const HistoryKey& key) {
  std::vector<std::string> parts;
  parts.reserve(key.size());
  for (double v : key) parts.push_back(format_level(v));
  return join(parts, ",");
}

// All realizations (x_1, z_1, ..., x_T, z_T) in radix order with their
// probabilities under the spec's tables.
struct PathSet {
  std::vector<std::vector<int>> xs; // per path, level indices
  std::vector<std::vector<int>> zs;
  std::vector<double> prob;
  std::vector<int> nx, nz;

  int index(const std::vector<int>& xi, const std::vector<int>& zi) const {
    int idx = 0;
    for (size_t t = 0; t < nx.size(); ++t) idx = (idx * nx[t] + xi[t]) * nz[t] + zi[t];
    return idx;
  }
};

const std::vector<double>& covariate_dist(const DgpSpec& spec, int t, const HistoryKey& key) {
  const auto& table = spec.covariate_given_history[t - 1];
  auto it = table.find(key);
  if (it == table.end())
    throw Error(ErrorKind::config,
                strf("covariate table at time %d misses history (%s)", t, key_string(key).c_str()));
  return it->second;
}

const std::vector<double>& treatment_dist(const DgpSpec& spec, int t, double x_value,
                                          const HistoryKey& key_with_x) {
  if (spec.uses_general_assignment(t)) {
    const auto& table = spec.treatment_given_history[t - 1];
    auto it = table.find(key_with_x);
    if (it == table.end())
      throw Error(ErrorKind::config,
                  strf("treatment table at time %d misses history (%s)", t,
                       key_string(key_with_x).c_str()));
    return it->second;
  }
  const auto& table = spec.treatment_given_covariate[t - 1];
  auto it = table.find(x_value);
  if (it == table.end())
    throw Error(ErrorKind::config,
                strf("treatment table at time %d misses covariate level %s", t,
                     format_level(x_value).c_str()));
  return it->second;
}

PathSet enumerate_paths(const DgpSpec& spec) {
  PathSet ps;
  ps.nx.resize(spec.T);
  ps.nz.resize(spec.T);
  long long total = 1;
  for (int t = 0; t < spec.T; ++t) {
    ps.nx[t] = static_cast<int>(spec.x_levels[t].size());
    ps.nz[t] = static_cast<int>(spec.z_levels[t].size());
    total *= ps.nx[t] * ps.nz[t];
    if (total > 2'000'000)
      throw Error(ErrorKind::config, "path space too large for exact enumeration");
  }
  std::vector<int> xi(spec.T, 0), zi(spec.T, 0);
  std::function<void(int, double, HistoryKey&)> rec = [&](int t, double p, HistoryKey& key) {
    if (t > spec.T) {
      ps.xs.push_back(xi);
      ps.zs.push_back(zi);
      ps.prob.push_back(p);
      return;
    }
    const auto& xdist = covariate_dist(spec, t, key);
    for (int a = 0; a < ps.nx[t - 1]; ++a) {
      xi[t - 1] = a;
      double xv = spec.x_levels[t - 1][a];
      key.push_back(xv);
      const auto& zdist = treatment_dist(spec, t, xv, key);
      for (int b = 0; b < ps.nz[t - 1]; ++b) {
        zi[t - 1] = b;
        key.push_back(spec.z_levels[t - 1][b]);
        rec(t + 1, p * xdist[a] * zdist[b], key);
        key.pop_back();
      }
      key.pop_back();
    }
  };
  HistoryKey key;
  rec(1, 1.0, key);
  return ps;
}

double phi(const DgpSpec& spec, int t, double x, double z) {
  double v = 0.0;
  for (int j = 0; j < spec.snmm.k(); ++j)
    v += spec.gamma_true[j] * spec.snmm.basis[j].eval(t, x, z);
  return v;
}

// P(prefix of length t with z_t fixed) and the joint (x_s, z_s) masses of
// its continuations, by filtering the full path set.
struct PrefixMass {
  double mass = 0.0;
  // per s in t+1..T: joint over cells (xi * nz + zi)
  std::vector<std::vector<double>> future;
};

PrefixMass prefix_mass(const DgpSpec& spec, const PathSet& ps, int t,
                       const std::vector<int>& xi_prefix, const std::vector<int>& zi_prefix) {
  PrefixMass pm;
  pm.future.resize(spec.T - t);
  for (int s = t + 1; s <= spec.T; ++s)
    pm.future[s - t - 1].assign(static_cast<size_t>(ps.nx[s - 1]) * ps.nz[s - 1], 0.0);
  for (size_t p = 0; p < ps.prob.size(); ++p) {
    bool match = true;
    for (int u = 0; u < t && match; ++u)
      match = ps.xs[p][u] == xi_prefix[u] && ps.zs[p][u] == zi_prefix[u];
    if (!match) continue;
    pm.mass += ps.prob[p];
    for (int s = t + 1; s <= spec.T; ++s)
      pm.future[s - t - 1][ps.xs[p][s - 1] * ps.nz[s - 1] + ps.zs[p][s - 1]] += ps.prob[p];
  }
  return pm;
}

// Planted point effect given the full history: the current blip effect
// plus expected future blip effects under the treated vs the control
// continuation.
double theta_full_history(const DgpSpec& spec, const PathSet& ps, int t,
                          const std::vector<int>& xi_prefix, std::vector<int> zi_prefix,
                          int z_index) {
  double x_t = spec.x_levels[t - 1][xi_prefix[t - 1]];
  double z_t = spec.z_levels[t - 1][z_index];
  double v = phi(spec, t, x_t, z_t);
  if (t == spec.T) return v;

  auto control = std::find(spec.z_levels[t - 1].begin(), spec.z_levels[t - 1].end(), 0.0);
  int ci = static_cast<int>(control - spec.z_levels[t - 1].begin());

  zi_prefix[t - 1] = z_index;
  PrefixMass treated = prefix_mass(spec, ps, t, xi_prefix, zi_prefix);
  zi_prefix[t - 1] = ci;
  PrefixMass ctrl = prefix_mass(spec, ps, t, xi_prefix, zi_prefix);
  if (treated.mass <= 0.0 || ctrl.mass <= 0.0)
    throw Error(ErrorKind::config, "history prefix has zero probability; tables must be positive");

  for (int s = t + 1; s <= spec.T; ++s) {
    const auto& f1 = treated.future[s - t - 1];
    const auto& f0 = ctrl.future[s - t - 1];
    for (int a = 0; a < ps.nx[s - 1]; ++a)
      for (int b = 0; b < ps.nz[s - 1]; ++b) {
        double w = f1[a * ps.nz[s - 1] + b] / treated.mass - f0[a * ps.nz[s - 1] + b] / ctrl.mass;
        if (w != 0.0)
          v += w * phi(spec, s, spec.x_levels[s - 1][a], spec.z_levels[s - 1][b]);
      }
  }
  return v;
}

HistoryKey history_key_before_x(const DgpSpec& spec, const std::vector<int>& xi,
                                const std::vector<int>& zi, int t) {
  HistoryKey key;
  for (int u = 1; u < t; ++u) {
    key.push_back(spec.x_levels[u - 1][xi[u - 1]]);
    key.push_back(spec.z_levels[u - 1][zi[u - 1]]);
  }
  return key;
}

} // namespace

void DgpSpec::validate() const {
  if (T < 1) throw Error(ErrorKind::config, "T must be >= 1");
  auto check_sizes = [&](size_t got, const char* what) {
    if (got != static_cast<size_t>(T))
      throw Error(ErrorKind::config, strf("%s must have one entry per time", what));
  };
  check_sizes(x_levels.size(), "covariate level sets");
  check_sizes(z_levels.size(), "treatment level sets");
  check_sizes(covariate_given_history.size(), "covariate tables");
  check_sizes(treatment_given_covariate.size(), "treatment tables");
  check_sizes(treatment_given_history.size(), "treatment history tables");
  if (zeta.size() + 1 != static_cast<size_t>(T) && !(T == 1 && zeta.empty()))
    throw Error(ErrorKind::config, "zeta must have entries for times 2..T");
  for (int t = 1; t <= T; ++t) {
    if (x_levels[t - 1].empty() || !std::is_sorted(x_levels[t - 1].begin(), x_levels[t - 1].end()))
      throw Error(ErrorKind::config, strf("covariate levels at time %d must be sorted", t));
    if (!std::binary_search(z_levels[t - 1].begin(), z_levels[t - 1].end(), 0.0))
      throw Error(ErrorKind::config, strf("treatment levels at time %d must contain control 0", t));
  }
  auto check_row = [](const std::vector<double>& row, size_t want, const std::string& what) {
    if (row.size() != want)
      throw Error(ErrorKind::config, what + " has the wrong number of probabilities");
    double sum = 0.0;
    for (double p : row) {
      if (!(p > 0.0) || (row.size() > 1 && !(p < 1.0)))
        throw Error(ErrorKind::config, what + " must be strictly positive (and < 1)");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw Error(ErrorKind::config, what + " does not sum to 1");
  };
  // Reachable-history coverage: walk all prefixes.
  std::function<void(int, HistoryKey&)> walk = [&](int t, HistoryKey& key) {
    if (t > T) return;
    const auto it = covariate_given_history[t - 1].find(key);
    if (it == covariate_given_history[t - 1].end())
      throw Error(ErrorKind::config,
                  strf("covariate table at time %d misses history (%s)", t,
                       key_string(key).c_str()));
    check_row(it->second, x_levels[t - 1].size(), strf("covariate row at time %d", t));
    for (double xv : x_levels[t - 1]) {
      key.push_back(xv);
      if (uses_general_assignment(t)) {
        auto jt = treatment_given_history[t - 1].find(key);
        if (jt == treatment_given_history[t - 1].end())
          throw Error(ErrorKind::config,
                      strf("treatment table at time %d misses history (%s)", t,
                           key_string(key).c_str()));
        check_row(jt->second, z_levels[t - 1].size(), strf("treatment row at time %d", t));
      } else {
        auto jt = treatment_given_covariate[t - 1].find(xv);
        if (jt == treatment_given_covariate[t - 1].end())
          throw Error(ErrorKind::config,
                      strf("treatment table at time %d misses covariate level %s", t,
                           format_level(xv).c_str()));
        check_row(jt->second, z_levels[t - 1].size(), strf("treatment row at time %d", t));
      }
      for (double zv : z_levels[t - 1]) {
        key.push_back(zv);
        walk(t + 1, key);
        key.pop_back();
      }
      key.pop_back();
    }
  };
  HistoryKey key;
  walk(1, key);

  snmm.validate();
  if (gamma_true.size() != snmm.k())
    throw Error(ErrorKind::config, "gamma_true length must match the SNMM dimension");
  for (int t = 2; t <= T; ++t) {
    for (const auto& [lvl, form] : zeta[t - 2]) {
      if (!std::binary_search(x_levels[t - 1].begin(), x_levels[t - 1].end(), lvl))
        throw Error(ErrorKind::config,
                    strf("zeta at time %d names level %s which is not a covariate level", t,
                         format_level(lvl).c_str()));
      if (lvl == x_levels[t - 1].front() &&
          (form.intercept != 0.0 || !form.z_coef.empty() || !form.x_coef.empty()))
        throw Error(ErrorKind::config,
                    strf("zeta at time %d assigns an effect to the baseline level", t));
    }
  }
  if (family == OutcomeFamily::normal && !(sigma > 0.0))
    throw Error(ErrorKind::config, "normal family needs sigma > 0");
}

bool DgpSpec::latest_covariate_assignment() const {
  for (int t = 1; t <= T; ++t) {
    if (!uses_general_assignment(t)) continue;
    // Group histories by their last element (x_t); all rows within a group
    // must coincide.
    std::map<double, const std::vector<double>*> seen;
    for (const auto& [key, row] : treatment_given_history[t - 1]) {
      if (key.empty()) throw Error(ErrorKind::config, "treatment history key must include x_t");
      double xv = key.back();
      auto [it, inserted] = seen.emplace(xv, &row);
      if (!inserted) {
        const auto& ref = *it->second;
        if (ref.size() != row.size()) return false;
        for (size_t i = 0; i < row.size(); ++i)
          if (std::fabs(ref[i] - row[i]) > 1e-12) return false;
      }
    }
  }
  return true;
}

double StandardParams::expected_outcome() const {
  double v = 0.0;
  for (size_t p = 0; p < prob.size(); ++p) v += prob[p] * mu[p];
  return v;
}

int StandardParams::find(const std::vector<int>& xi, const std::vector<int>& zi) const {
  // path spaces are small; a scan is fine for the rare external lookups
  for (size_t p = 0; p < path_x.size(); ++p)
    if (path_x[p] == xi && path_z[p] == zi) return static_cast<int>(p);
  return -1;
}

StandardParams build_standard_params(const DgpSpec& spec) {
  spec.validate();
  PathSet ps = enumerate_paths(spec);

  // cache planted full-history point effects theta(hist_t; z*)
  std::map<std::vector<int>, double> theta_cache; // key: (t, z_index, xi_1..t, zi_1..t-1)
  auto theta_full = [&](int t, const std::vector<int>& xi, const std::vector<int>& zi,
                        int z_index) {
    std::vector<int> key;
    key.push_back(t);
    key.push_back(z_index);
    for (int u = 0; u < t; ++u) key.push_back(xi[u]);
    for (int u = 0; u + 1 < t; ++u) key.push_back(zi[u]);
    auto it = theta_cache.find(key);
    if (it != theta_cache.end()) return it->second;
    double v = theta_full_history(spec, ps, t, xi, zi, z_index);
    theta_cache.emplace(std::move(key), v);
    return v;
  };

  StandardParams sp;
  sp.path_x = ps.xs;
  sp.path_z = ps.zs;
  sp.prob = ps.prob;
  sp.mu.resize(ps.prob.size());

  for (size_t p = 0; p < ps.prob.size(); ++p) {
    const auto& xi = ps.xs[p];
    const auto& zi = ps.zs[p];
    double mu = spec.grand_mean;
    std::vector<double> x_hist(spec.T), z_hist(spec.T);
    for (int t = 1; t <= spec.T; ++t) {
      x_hist[t - 1] = spec.x_levels[t - 1][xi[t - 1]];
      z_hist[t - 1] = spec.z_levels[t - 1][zi[t - 1]];
    }
    for (int t = 1; t <= spec.T; ++t) {
      // treatment term: theta(hist; z_t) - E{theta(hist; z*) | assignment}
      HistoryKey key = history_key_before_x(spec, xi, zi, t);
      key.push_back(x_hist[t - 1]);
      const auto& zdist = treatment_dist(spec, t, x_hist[t - 1], key);
      double observed = 0.0, expected = 0.0;
      for (int b = 0; b < static_cast<int>(spec.z_levels[t - 1].size()); ++b) {
        if (spec.z_levels[t - 1][b] == 0.0) continue;
        double th = theta_full(t, xi, zi, b);
        if (b == zi[t - 1]) observed = th;
        expected += th * zdist[b];
      }
      mu += observed - expected;
      // covariate term: zeta(hist; x_t) - E{zeta(hist; x*) | history}
      if (t >= 2 && spec.x_levels[t - 1].size() > 1) {
        HistoryKey hkey = history_key_before_x(spec, xi, zi, t);
        const auto& xdist = covariate_dist(spec, t, hkey);
        std::vector<double> xh(x_hist.begin(), x_hist.begin() + (t - 1));
        std::vector<double> zh(z_hist.begin(), z_hist.begin() + (t - 1));
        double obs = 0.0, exp_z = 0.0;
        const auto& forms = spec.zeta[t - 2];
        for (int a = 0; a < static_cast<int>(spec.x_levels[t - 1].size()); ++a) {
          double lvl = spec.x_levels[t - 1][a];
          auto f = forms.find(lvl);
          double val = (f == forms.end()) ? 0.0 : f->second.eval(xh, zh);
          if (a == xi[t - 1]) obs = val;
          exp_z += val * xdist[a];
        }
        mu += obs - exp_z;
      }
    }
    sp.mu[p] = mu;
    if (spec.family == OutcomeFamily::bernoulli && !(mu > 0.0 && mu < 1.0)) {
      std::vector<std::string> parts;
      for (int t = 1; t <= spec.T; ++t) {
        parts.push_back("x" + std::to_string(t) + "=" + format_level(x_hist[t - 1]));
        parts.push_back("z" + std::to_string(t) + "=" + format_level(z_hist[t - 1]));
      }
      throw Error(ErrorKind::domain,
                  strf("bernoulli mean %.6g outside (0,1) on path (%s)", mu,
                       join(parts, ",").c_str()));
    }
    if (spec.family == OutcomeFamily::poisson && !(mu > 0.0))
      throw Error(ErrorKind::domain, strf("poisson mean %.6g is not positive", mu));
  }
  return sp;
}

ExactEffects exact_point_effects(const DgpSpec& spec) {
  StandardParams sp = build_standard_params(spec);
  PathSet ps = enumerate_paths(spec);

  ExactEffects out;
  std::vector<double> closed, enumerated;
  for (int t = 1; t <= spec.T; ++t) {
    int nz = static_cast<int>(spec.z_levels[t - 1].size());
    int nx = static_cast<int>(spec.x_levels[t - 1].size());
    for (int a = 0; a < nx; ++a) {
      for (int b = 0; b < nz; ++b) {
        double zv = spec.z_levels[t - 1][b];
        if (zv == 0.0) continue;
        double xv = spec.x_levels[t - 1][a];

        // route (b): enumeration through mu(path)
        double m1 = 0, w1 = 0, m0 = 0, w0 = 0;
        // route (a): closed form through phi and conditional probabilities
        std::vector<std::vector<double>> f1(spec.T - t), f0(spec.T - t);
        for (int s = t + 1; s <= spec.T; ++s) {
          f1[s - t - 1].assign(static_cast<size_t>(ps.nx[s - 1]) * ps.nz[s - 1], 0.0);
          f0[s - t - 1].assign(static_cast<size_t>(ps.nx[s - 1]) * ps.nz[s - 1], 0.0);
        }
        for (size_t p = 0; p < ps.prob.size(); ++p) {
          if (ps.xs[p][t - 1] != a) continue;
          if (ps.zs[p][t - 1] == b) {
            m1 += sp.mu[p] * ps.prob[p];
            w1 += ps.prob[p];
            for (int s = t + 1; s <= spec.T; ++s)
              f1[s - t - 1][ps.xs[p][s - 1] * ps.nz[s - 1] + ps.zs[p][s - 1]] += ps.prob[p];
          } else if (spec.z_levels[t - 1][ps.zs[p][t - 1]] == 0.0) {
            m0 += sp.mu[p] * ps.prob[p];
            w0 += ps.prob[p];
            for (int s = t + 1; s <= spec.T; ++s)
              f0[s - t - 1][ps.xs[p][s - 1] * ps.nz[s - 1] + ps.zs[p][s - 1]] += ps.prob[p];
          }
        }
        if (w1 <= 0.0 || w0 <= 0.0) continue; // inestimable stratum (zero mass)
        double theta_enum = m1 / w1 - m0 / w0;
        double theta_closed = phi(spec, t, xv, zv);
        for (int s = t + 1; s <= spec.T; ++s)
          for (int aa = 0; aa < ps.nx[s - 1]; ++aa)
            for (int bb = 0; bb < ps.nz[s - 1]; ++bb) {
              double d = f1[s - t - 1][aa * ps.nz[s - 1] + bb] / w1 -
                         f0[s - t - 1][aa * ps.nz[s - 1] + bb] / w0;
              if (d != 0.0)
                d *= phi(spec, s, spec.x_levels[s - 1][aa], spec.z_levels[s - 1][bb]);
              theta_closed += d;
            }
        out.strata.push_back(Stratum{t, xv, zv});
        closed.push_back(theta_closed);
        enumerated.push_back(theta_enum);
      }
    }
  }
  out.theta_closed = Eigen::Map<Eigen::VectorXd>(closed.data(), static_cast<Eigen::Index>(closed.size()));
  out.theta_enumerated =
      Eigen::Map<Eigen::VectorXd>(enumerated.data(), static_cast<Eigen::Index>(enumerated.size()));
  out.max_route_discrepancy =
      closed.empty() ? 0.0 : (out.theta_closed - out.theta_enumerated).cwiseAbs().maxCoeff();

  // planted full-history effects (closed form), useful as reference output
  std::function<void(int, std::vector<int>&, std::vector<int>&)> rec =
      [&](int t, std::vector<int>& xi, std::vector<int>& zi) {
        if (t > spec.T) return;
        for (int a = 0; a < ps.nx[t - 1]; ++a) {
          xi[t - 1] = a;
          for (int b = 0; b < ps.nz[t - 1]; ++b) {
            if (spec.z_levels[t - 1][b] == 0.0) continue;
            FullHistoryEffect fe;
            fe.t = t;
            for (int u = 1; u < t; ++u) {
              fe.history.push_back(spec.x_levels[u - 1][xi[u - 1]]);
              fe.history.push_back(spec.z_levels[u - 1][zi[u - 1]]);
            }
            fe.history.push_back(spec.x_levels[t - 1][a]);
            fe.z = spec.z_levels[t - 1][b];
            fe.theta = theta_full_history(spec, ps, t, xi, zi, b);
            out.full_history.push_back(std::move(fe));
          }
          for (int b = 0; b < ps.nz[t - 1]; ++b) {
            zi[t - 1] = b;
            rec(t + 1, xi, zi);
          }
        }
      };
  std::vector<int> xi(spec.T, 0), zi(spec.T, 0);
  rec(1, xi, zi);
  return out;
}

TransitionTable exact_transitions(const DgpSpec& spec) {
  spec.validate();
  PathSet ps = enumerate_paths(spec);
  std::vector<TransitionTable::TimeLevels> levels(spec.T);
  std::vector<std::vector<double>> base(spec.T);
  for (int t = 0; t < spec.T; ++t) {
    levels[t] = {spec.x_levels[t], spec.z_levels[t]};
    base[t].assign(static_cast<size_t>(ps.nx[t]) * ps.nz[t], 0.0);
  }
  std::map<std::pair<int, int>, std::vector<double>> joint;
  for (int t = 1; t <= spec.T; ++t)
    for (int s = t + 1; s <= spec.T; ++s)
      joint[{t, s}].assign(static_cast<size_t>(ps.nx[t - 1]) * ps.nz[t - 1] * ps.nx[s - 1] *
                               ps.nz[s - 1],
                           0.0);
  for (size_t p = 0; p < ps.prob.size(); ++p) {
    for (int t = 1; t <= spec.T; ++t) {
      int ct = ps.xs[p][t - 1] * ps.nz[t - 1] + ps.zs[p][t - 1];
      base[t - 1][ct] += ps.prob[p];
      for (int s = t + 1; s <= spec.T; ++s) {
        int ncs = ps.nx[s - 1] * ps.nz[s - 1];
        int cs = ps.xs[p][s - 1] * ps.nz[s - 1] + ps.zs[p][s - 1];
        joint[{t, s}][static_cast<size_t>(ct) * ncs + cs] += ps.prob[p];
      }
    }
  }
  return TransitionTable::from_weights(std::move(levels), std::move(base), std::move(joint));
}

DecompositionCheck exact_blip_decomposition_check(const DgpSpec& spec) {
  ExactEffects fx = exact_point_effects(spec);
  TransitionTable trans = exact_transitions(spec);
  DecompositionCheck out;
  out.strata = fx.strata;
  out.theta_exact = fx.theta_enumerated;
  out.c_gamma.resize(static_cast<Eigen::Index>(fx.strata.size()));
  for (size_t i = 0; i < fx.strata.size(); ++i) {
    Eigen::VectorXd row = design_row(spec.snmm, trans, fx.strata[i]);
    out.c_gamma[static_cast<Eigen::Index>(i)] = row.dot(spec.gamma_true);
  }
  out.residual_inf =
      fx.strata.empty() ? 0.0 : (out.c_gamma - out.theta_exact).cwiseAbs().maxCoeff();
  out.latest_covariate_condition = spec.latest_covariate_assignment();
  return out;
}

PreparedDgp prepare_dgp(const DgpSpec& spec) {
  return PreparedDgp{spec, build_standard_params(spec)};
}

SequentialDataset generate_dataset(const DgpSpec& spec, int n, uint64_t seed) {
  return generate_dataset(prepare_dgp(spec), n, seed);
}

SequentialDataset generate_dataset(const PreparedDgp& prepared, int n, uint64_t seed) {
  const DgpSpec& spec = prepared.spec;
  const StandardParams& sp = prepared.params;
  if (n < 1) throw Error(ErrorKind::domain, "dataset size must be >= 1");

  // radix index for mu lookup
  std::vector<int> nx(spec.T), nz(spec.T);
  for (int t = 0; t < spec.T; ++t) {
    nx[t] = static_cast<int>(spec.x_levels[t].size());
    nz[t] = static_cast<int>(spec.z_levels[t].size());
  }
  auto radix = [&](const std::vector<int>& xi, const std::vector<int>& zi) {
    long long idx = 0;
    for (int t = 0; t < spec.T; ++t) idx = (idx * nx[t] + xi[t]) * nz[t] + zi[t];
    return static_cast<size_t>(idx);
  };

  std::vector<TimeSlice> slices(spec.T);
  for (int t = 0; t < spec.T; ++t) {
    if (nx[t] > 1) slices[t].covariates.push_back({strf("x%d", t + 1), std::vector<double>(n)});
    slices[t].treatment.resize(n);
  }
  std::vector<double> y(n);
  std::vector<std::string> ids(n);

  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, static_cast<uint64_t>(i));
    std::vector<int> xi(spec.T), zi(spec.T);
    HistoryKey key;
    for (int t = 1; t <= spec.T; ++t) {
      const auto& xdist = covariate_dist(spec, t, key);
      xi[t - 1] = static_cast<int>(rng.categorical(xdist));
      double xv = spec.x_levels[t - 1][xi[t - 1]];
      key.push_back(xv);
      const auto& zdist = treatment_dist(spec, t, xv, key);
      zi[t - 1] = static_cast<int>(rng.categorical(zdist));
      key.push_back(spec.z_levels[t - 1][zi[t - 1]]);
      if (nx[t - 1] > 1) slices[t - 1].covariates[0].values[i] = xv;
      slices[t - 1].treatment[i] = spec.z_levels[t - 1][zi[t - 1]];
    }
    double mu = sp.mu[radix(xi, zi)];
    switch (spec.family) {
      case OutcomeFamily::normal: y[i] = rng.normal(mu, spec.sigma); break;
      case OutcomeFamily::bernoulli: y[i] = rng.bernoulli(mu) ? 1.0 : 0.0; break;
      case OutcomeFamily::poisson: y[i] = rng.poisson(mu); break;
    }
    ids[i] = std::to_string(i + 1);
  }
  return SequentialDataset::from_columns(std::move(slices), std::move(y), spec.family,
                                         std::move(ids));
}

namespace {

// Shipped T=3 probability tables: assignment probabilities inside
// [0.2, 0.8] and strictly positive covariate transitions.
void fill_builtin_tables(DgpSpec& spec) {
  spec.T = 3;
  spec.x_levels = {{0}, {0, 1, 2, 3}, {0, 1, 2, 3}};
  spec.z_levels = {{0, 1}, {0, 1}, {0, 1}};
  spec.covariate_given_history.resize(3);
  spec.treatment_given_covariate.resize(3);
  spec.treatment_given_history.resize(3);

  spec.covariate_given_history[0][{}] = {1.0};
  spec.treatment_given_covariate[0][0.0] = {0.5, 0.5};

  // P(x2 | z1)
  spec.covariate_given_history[1][{0, 0}] = {0.4, 0.3, 0.2, 0.1};
  spec.covariate_given_history[1][{0, 1}] = {0.1, 0.2, 0.3, 0.4};
  // P(z2 = 1 | x2 = j) = 0.3 + 0.1 j
  for (int j = 0; j < 4; ++j)
    spec.treatment_given_covariate[1][j] = {0.7 - 0.1 * j, 0.3 + 0.1 * j};
  // P(z3 = 1 | x3 = j) = 0.6 - 0.1 j
  for (int j = 0; j < 4; ++j)
    spec.treatment_given_covariate[2][j] = {0.4 + 0.1 * j, 0.6 - 0.1 * j};
  // P(x3 | z1, x2, z2): a z2-leaning base, pulled toward x2 and mildly
  // shifted by z1; all entries stay positive.
  for (int z1 = 0; z1 <= 1; ++z1) {
    for (int j = 0; j < 4; ++j) {
      for (int z2 = 0; z2 <= 1; ++z2) {
        std::vector<double> row = z2 == 0 ? std::vector<double>{0.4, 0.3, 0.2, 0.1}
                                          : std::vector<double>{0.1, 0.2, 0.3, 0.4};
        for (int i = 0; i < 4; ++i) row[i] += (i == j) ? 0.12 : -0.04;
        if (z1 == 1)
          for (int i = 0; i < 4; ++i) row[i] += (i == 3 - j) ? 0.06 : -0.02;
        double sum = row[0] + row[1] + row[2] + row[3];
        for (double& v : row) v /= sum;
        spec.covariate_given_history[2][{0, static_cast<double>(z1), static_cast<double>(j),
                                         static_cast<double>(z2)}] = row;
      }
    }
  }
}

SnmmSpec builtin_snmm() {
  SnmmSpec snmm;
  snmm.basis.push_back({IndicatorBasis{1, {0}, {1}}, "gamma1"});
  for (int j = 0; j < 4; ++j)
    snmm.basis.push_back(
        {IndicatorBasis{2, {static_cast<double>(j)}, {1}}, strf("gamma2%d", j)});
  for (int j = 0; j < 4; ++j)
    snmm.basis.push_back(
        {IndicatorBasis{3, {static_cast<double>(j)}, {1}}, strf("gamma3%d", j)});
  return snmm;
}

} // namespace

DgpSpec builtin_dgp(OutcomeFamily family) {
  DgpSpec spec;
  fill_builtin_tables(spec);
  spec.snmm = builtin_snmm();
  spec.family = family;
  spec.zeta.resize(2);
  Eigen::VectorXd g(9);
  switch (family) {
    case OutcomeFamily::normal: {
      g << 2, 3, -4, -4, 3, 3, -4, -4, 3;
      spec.grand_mean = -5.0;
      spec.sigma = 4.0;
      // zeta(z1; x2): 10 + 5 z1, 12 + 5 z1, 13 + 5 z1 for x2 = 1, 2, 3
      spec.zeta[0][1] = LinearForm{10, {{1, 5}}, {}};
      spec.zeta[0][2] = LinearForm{12, {{1, 5}}, {}};
      spec.zeta[0][3] = LinearForm{13, {{1, 5}}, {}};
      // zeta(z1, x2, z2; x3)
      spec.zeta[1][1] = LinearForm{10, {{1, -5}, {2, -2}}, {{2, 3}}};
      spec.zeta[1][2] = LinearForm{12, {{1, -5}, {2, -2}}, {{2, 3}}};
      spec.zeta[1][3] = LinearForm{10, {{1, -5}, {2, -3}}, {{2, 3}}};
      break;
    }
    case OutcomeFamily::bernoulli: {
      g << -0.2, 0.1, -0.15, -0.15, 0.1, 0.1, -0.15, -0.15, 0.1;
      spec.grand_mean = 0.55;
      spec.sigma = 0.0;
      for (int lvl = 1; lvl <= 3; ++lvl) {
        spec.zeta[0][lvl] = LinearForm{0, {{1, 0.1}}, {}};
        spec.zeta[1][lvl] = LinearForm{0, {{2, -0.1}}, {}};
      }
      break;
    }
    case OutcomeFamily::poisson: {
      g << 2, 4, -3, -3, 4, 4, -3, -3, 4;
      spec.grand_mean = 20.0;
      spec.sigma = 0.0;
      for (int lvl = 1; lvl <= 3; ++lvl) {
        spec.zeta[0][lvl] = LinearForm{0, {{1, 0.1}}, {}};
        spec.zeta[1][lvl] = LinearForm{0, {{2, -0.1}}, {}};
      }
      break;
    }
  }
  spec.gamma_true = g;
  spec.validate();
  return spec;
}

} // namespace bliptest

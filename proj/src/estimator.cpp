#include "bliptest/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bliptest/chi2.hpp"
#include "bliptest/detail/pipeline.hpp"
#include "bliptest/parallel.hpp"
#include "bliptest/rng.hpp"
#include "bliptest/util.hpp"

namespace bliptest {

namespace detail {

CompiledSnmm compile_snmm(const SnmmSpec& snmm, const Encoded& e) {
  snmm.validate();
  CompiledSnmm c;
  c.k = snmm.k();
  c.F.resize(e.T);
  for (int t = 0; t < e.T; ++t) {
    const EncodedTime& et = e.times[t];
    int nz = static_cast<int>(et.z_levels.size());
    c.F[t].resize(c.k, et.n_cells());
    for (size_t xi = 0; xi < et.x_levels.size(); ++xi)
      for (int zi = 0; zi < nz; ++zi)
        for (int j = 0; j < c.k; ++j)
          c.F[t](j, static_cast<int>(xi) * nz + zi) =
              snmm.basis[j].eval(t + 1, et.x_levels[xi], et.z_levels[zi]);
  }
  return c;
}

TransitionCounts count_transitions(const Encoded& e) {
  TransitionCounts tc;
  tc.T = e.T;
  tc.base.resize(e.T);
  for (int t = 0; t < e.T; ++t) {
    tc.base[t].assign(e.times[t].n_cells(), 0.0);
    int nz = static_cast<int>(e.times[t].z_levels.size());
    for (int i = 0; i < e.n; ++i) tc.base[t][e.times[t].xi[i] * nz + e.times[t].zi[i]] += 1.0;
  }
  tc.joint.resize(static_cast<size_t>(e.T) * (e.T - 1) / 2);
  for (int t = 1; t <= e.T; ++t) {
    int nzt = static_cast<int>(e.times[t - 1].z_levels.size());
    for (int s = t + 1; s <= e.T; ++s) {
      int nzs = static_cast<int>(e.times[s - 1].z_levels.size());
      int ncs = e.times[s - 1].n_cells();
      auto& m = tc.joint[tc.pair_index(t, s)];
      m.assign(static_cast<size_t>(e.times[t - 1].n_cells()) * ncs, 0.0);
      for (int i = 0; i < e.n; ++i) {
        int ct = e.times[t - 1].xi[i] * nzt + e.times[t - 1].zi[i];
        int cs = e.times[s - 1].xi[i] * nzs + e.times[s - 1].zi[i];
        m[static_cast<size_t>(ct) * ncs + cs] += 1.0;
      }
    }
  }
  return tc;
}

GlsCore gls_solve(const Eigen::MatrixXd& C, const std::vector<Eigen::MatrixXd>& sigma_blocks,
                  const Eigen::VectorXd& theta) {
  const Eigen::Index m = C.rows();
  const Eigen::Index k = C.cols();
  if (theta.size() != m) throw Error(ErrorKind::domain, "theta/design size mismatch");

  // positive definiteness of the block-diagonal covariance
  double lam_min = std::numeric_limits<double>::infinity();
  double lam_max = 0.0;
  Eigen::Index total = 0;
  for (const auto& blk : sigma_blocks) {
    total += blk.rows();
    if (blk.rows() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(blk, Eigen::EigenvaluesOnly);
    lam_min = std::min(lam_min, eig.eigenvalues().minCoeff());
    lam_max = std::max(lam_max, eig.eigenvalues().maxCoeff());
  }
  if (total != m) throw Error(ErrorKind::domain, "covariance blocks do not match design rows");
  if (!(lam_min > 1e-12 * lam_max))
    throw Error(ErrorKind::statistical,
                strf("point-effect covariance is singular (eigenvalue range %.3g..%.3g); a "
                     "different variance mode (e.g. pooled_normal) may help",
                     lam_min, lam_max));

  // whiten blockwise: A = L^-1 C, b = L^-1 theta
  Eigen::MatrixXd A(m, k);
  Eigen::VectorXd b(m);
  Eigen::Index off = 0;
  for (const auto& blk : sigma_blocks) {
    Eigen::Index r = blk.rows();
    if (r == 0) continue;
    Eigen::LLT<Eigen::MatrixXd> llt(blk);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::statistical, "covariance block is not positive definite");
    A.middleRows(off, r) =
        llt.matrixL().solve(C.middleRows(off, r));
    b.segment(off, r) = llt.matrixL().solve(theta.segment(off, r));
    off += r;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double smax = sv(0);
  int rank = 0;
  for (Eigen::Index j = 0; j < sv.size(); ++j)
    if (sv(j) > 1e-10 * smax) ++rank;
  if (rank < k)
    throw Error(ErrorKind::identifiability,
                strf("design matrix has rank %d < %d parameters; the blip effect parameter "
                     "is not identified",
                     rank, static_cast<int>(k)));
  double cond = smax / sv(k - 1);
  if (cond > 1e12)
    throw Error(ErrorKind::statistical,
                strf("whitened design is ill-conditioned (condition number %.3g)", cond));

  GlsCore out;
  out.rank = rank;
  out.condition = cond;
  Eigen::VectorXd sinv = sv.head(k).cwiseInverse();
  out.gamma = svd.matrixV() * (sinv.asDiagonal() * (svd.matrixU().transpose() * b));
  out.cov = svd.matrixV() * sinv.array().square().matrix().asDiagonal() *
            svd.matrixV().transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

GammaFit fit_gamma(const Encoded& e, const CompiledSnmm& snmm, VarianceMode mode) {
  double pooled = mode == VarianceMode::pooled_normal ? pooled_variance(e) : 0.0;
  GammaFit fit;
  std::vector<Eigen::Index> row_of_time(e.T + 1, 0);
  std::vector<TimePointEffects> per_time(e.T);
  Eigen::Index m = 0;
  for (int t = 1; t <= e.T; ++t) {
    per_time[t - 1] = time_point_effects(e, t, mode, pooled);
    row_of_time[t - 1] = m;
    m += static_cast<Eigen::Index>(per_time[t - 1].entries.size());
  }
  row_of_time[e.T] = m;

  TransitionCounts tc = count_transitions(e);
  fit.theta.resize(m);
  fit.C.resize(m, snmm.k);
  fit.sigma_blocks.reserve(e.T);
  Eigen::Index r = 0;
  for (int t = 1; t <= e.T; ++t) {
    const EncodedTime& et = e.times[t - 1];
    int nz = static_cast<int>(et.z_levels.size());
    for (const auto& entry : per_time[t - 1].entries) {
      fit.strata.push_back(entry.stratum);
      fit.theta[r] = entry.theta;
      // c_j = f_j(t, x, z) + sum_s E1{f_j} - E2{f_j}
      auto xi = std::lower_bound(et.x_levels.begin(), et.x_levels.end(), entry.stratum.x);
      auto zi = std::lower_bound(et.z_levels.begin(), et.z_levels.end(), entry.stratum.z);
      int ct = static_cast<int>(xi - et.x_levels.begin()) * nz +
               static_cast<int>(zi - et.z_levels.begin());
      int c0 = static_cast<int>(xi - et.x_levels.begin()) * nz + et.control;
      Eigen::VectorXd row = snmm.F[t - 1].col(ct);
      double bt = tc.base[t - 1][ct];
      double b0 = tc.base[t - 1][c0];
      for (int s = t + 1; s <= e.T; ++s) {
        const auto& joint = tc.joint[tc.pair_index(t, s)];
        int ncs = e.times[s - 1].n_cells();
        const double* j1 = joint.data() + static_cast<size_t>(ct) * ncs;
        const double* j0 = joint.data() + static_cast<size_t>(c0) * ncs;
        for (int cs = 0; cs < ncs; ++cs) {
          double d = j1[cs] / bt - j0[cs] / b0;
          if (d != 0.0) row.noalias() += d * snmm.F[s - 1].col(cs);
        }
      }
      fit.C.row(r) = row.transpose();
      ++r;
    }
    fit.sigma_blocks.push_back(std::move(per_time[t - 1].sigma));
  }

  GlsCore core = gls_solve(fit.C, fit.sigma_blocks, fit.theta);
  fit.gamma = std::move(core.gamma);
  fit.cov_conditional = std::move(core.cov);
  fit.rank = core.rank;
  fit.condition = core.condition;
  return fit;
}

} // namespace detail

void Hypothesis::validate(int k) const {
  int rows = static_cast<int>(H.rows());
  if (rows < 1 || rows > k)
    throw Error(ErrorKind::config,
                strf("hypothesis '%s': H must have between 1 and %d rows", name.c_str(), k));
  if (H.cols() != k)
    throw Error(ErrorKind::config,
                strf("hypothesis '%s': H has %d columns, expected %d", name.c_str(),
                     static_cast<int>(H.cols()), k));
  if (rho.size() != rows)
    throw Error(ErrorKind::config, strf("hypothesis '%s': rho length mismatch", name.c_str()));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H.transpose());
  qr.setThreshold(1e-10);
  if (qr.rank() < rows)
    throw Error(ErrorKind::config,
                strf("hypothesis '%s': H does not have full row rank", name.c_str()));
}

BlipEstimate gls(const PointEffectEstimate& effects, const DesignMatrix& design, int n) {
  if (effects.strata() != design.strata)
    throw Error(ErrorKind::domain, "point-effect and design orderings differ");
  detail::GlsCore core = detail::gls_solve(design.C, effects.sigma_blocks, effects.theta());
  BlipEstimate est;
  est.gamma = std::move(core.gamma);
  est.cov_conditional = std::move(core.cov);
  est.n = n;
  est.strata = design.strata;
  est.basis_labels = design.column_labels;
  return est;
}

BlipEstimate restricted_gls(const BlipEstimate& est, const Hypothesis& hyp) {
  int k = static_cast<int>(est.gamma.size());
  hyp.validate(k);
  const Eigen::MatrixXd& V = est.cov_conditional;
  Eigen::MatrixXd S = hyp.H * V * hyp.H.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  double lmin = eig.eigenvalues().minCoeff();
  double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 1e-12 * std::max(lmax, 1e-300)))
    throw Error(ErrorKind::statistical,
                strf("constraint '%s' is degenerate: H V H' is singular", hyp.name.c_str()));
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  Eigen::VectorXd slack = hyp.H * est.gamma - hyp.rho;
  Eigen::MatrixXd VHt = V * hyp.H.transpose();
  BlipEstimate out;
  out.gamma = est.gamma - VHt * llt.solve(slack);
  out.cov_conditional = V - VHt * llt.solve(VHt.transpose());
  out.cov_conditional = 0.5 * (out.cov_conditional + out.cov_conditional.transpose()).eval();
  out.n = est.n;
  out.strata = est.strata;
  out.basis_labels = est.basis_labels;
  return out;
}

FitResult fit_blip(const SequentialDataset& ds, const SnmmSpec& snmm, const FitOptions& options) {
  detail::Encoded e = detail::encode(ds);
  detail::CompiledSnmm compiled = detail::compile_snmm(snmm, e);
  detail::GammaFit fit = detail::fit_gamma(e, compiled, options.variance_mode);

  FitResult out;
  out.estimate.gamma = fit.gamma;
  out.estimate.cov_conditional = fit.cov_conditional;
  out.estimate.n = ds.size();
  out.estimate.strata = fit.strata;
  out.estimate.basis_labels = snmm.labels();
  out.design.C = fit.C;
  out.design.strata = fit.strata;
  out.design.column_labels = snmm.labels();
  out.design.rank = fit.rank;
  out.design.condition = fit.condition;
  for (size_t i = 0; i < fit.strata.size(); ++i)
    out.point_effects.entries.push_back({fit.strata[i], fit.theta[static_cast<Eigen::Index>(i)]});
  out.point_effects.sigma_blocks = fit.sigma_blocks;
  return out;
}

BootstrapResult bootstrap_marginal_cov(const SequentialDataset& ds, const SnmmSpec& snmm, int B,
                                       uint64_t seed, const FitOptions& options, int threads) {
  if (B < 2) throw Error(ErrorKind::domain, "bootstrap needs B >= 2 replicates");
  detail::Encoded base = detail::encode(ds);
  detail::CompiledSnmm compiled = detail::compile_snmm(snmm, base);
  const uint32_t n = static_cast<uint32_t>(base.n);

  std::vector<std::optional<Eigen::VectorXd>> reps(static_cast<size_t>(B));
  parallel_for(B, threads, [&](int b) {
    Rng rng = Rng::stream(seed, static_cast<uint64_t>(b));
    std::vector<uint32_t> idx(n);
    for (uint32_t i = 0; i < n; ++i) idx[i] = rng.uniform_int(n);
    detail::Encoded eb = detail::gather(base, idx);
    try {
      reps[static_cast<size_t>(b)] =
          detail::fit_gamma(eb, compiled, options.variance_mode).gamma;
    } catch (const Error& err) {
      if (!err.replicate_recoverable()) throw;
    }
  });

  int ok = 0;
  for (const auto& r : reps)
    if (r) ++ok;
  BootstrapResult out;
  out.requested = B;
  out.failed = B - ok;
  if (out.failed * 10 > B)
    throw Error(ErrorKind::statistical,
                strf("bootstrap failed on %d of %d replicates (more than 10%%)", out.failed, B));
  if (ok < 2)
    throw Error(ErrorKind::statistical, "fewer than two successful bootstrap replicates");

  const int k = compiled.k;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
  for (const auto& r : reps)
    if (r) mean += *r;
  mean /= ok;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, k);
  for (const auto& r : reps)
    if (r) {
      Eigen::VectorXd d = *r - mean;
      cov.noalias() += d * d.transpose();
    }
  cov /= (ok - 1);
  out.cov = 0.5 * (cov + cov.transpose()).eval();
  return out;
}

WaldResult wald(const BlipEstimate& est, const Hypothesis& hyp, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(ErrorKind::domain, "significance level must lie in (0,1)");
  if (!est.cov_marginal)
    throw Error(ErrorKind::statistical,
                "marginal covariance is absent; estimate it with the bootstrap first");
  int k = static_cast<int>(est.gamma.size());
  hyp.validate(k);
  Eigen::MatrixXd S = hyp.H * (*est.cov_marginal) * hyp.H.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  double lmin = eig.eigenvalues().minCoeff();
  double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 1e-12 * std::max(lmax, 1e-300)))
    throw Error(ErrorKind::statistical,
                strf("degenerate test '%s': H cov(gamma) H' is singular", hyp.name.c_str()));
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  Eigen::VectorXd r = hyp.H * est.gamma - hyp.rho;
  // W as a squared norm so it cannot go negative by rounding
  Eigen::VectorXd half = llt.matrixL().solve(r);
  WaldResult out;
  out.W = half.squaredNorm();
  out.df = hyp.l();
  out.p_value = chi2_survival(out.W, out.df);
  out.alpha = alpha;
  out.reject = out.p_value < alpha;
  return out;
}

PowerResult noncentral_power(const Hypothesis& hyp, const Eigen::VectorXd& gamma_true,
                             const Eigen::MatrixXd& cov, double alpha) {
  int k = static_cast<int>(gamma_true.size());
  hyp.validate(k);
  Eigen::MatrixXd S = hyp.H * cov * hyp.H.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  double lmin = eig.eigenvalues().minCoeff();
  double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 1e-12 * std::max(lmax, 1e-300)))
    throw Error(ErrorKind::statistical,
                strf("degenerate test '%s': H cov H' is singular", hyp.name.c_str()));
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  Eigen::VectorXd r = hyp.H * gamma_true - hyp.rho;
  double lambda = llt.matrixL().solve(r).squaredNorm();
  NoncentralTail tail = noncentral_chi2_power(lambda, hyp.l(), alpha);
  return {tail.lambda, tail.power};
}

} // namespace bliptest

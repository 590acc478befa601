#include "bliptest/detail/encoded.hpp"

#include <algorithm>

#include "bliptest/util.hpp"

namespace bliptest::detail {

namespace {
uint8_t level_index(const std::vector<double>& levels, double v) {
  auto it = std::lower_bound(levels.begin(), levels.end(), v);
  return static_cast<uint8_t>(it - levels.begin());
}
} // namespace

Encoded encode(const SequentialDataset& ds) {
  Encoded e;
  e.T = ds.times();
  e.n = ds.size();
  e.family = ds.family();
  e.y = ds.outcomes();
  e.times.resize(e.T);
  for (int t = 1; t <= e.T; ++t) {
    const TimeSlice& sl = ds.slice(t);
    EncodedTime& et = e.times[t - 1];
    if (!ds.has_stratum_covariate(t))
      throw Error(ErrorKind::domain,
                  strf("time %d has several covariate columns; the stratified pipeline "
                       "needs at most one per time",
                       t));
    et.x_levels = sl.covariate_levels;
    et.z_levels = sl.treatment_levels;
    if (et.x_levels.size() > 255 || et.z_levels.size() > 255)
      throw Error(ErrorKind::domain, strf("more than 255 levels at time %d", t));
    auto zit = std::lower_bound(et.z_levels.begin(), et.z_levels.end(), 0.0);
    et.control = static_cast<int>(zit - et.z_levels.begin()); // 0 always present
    et.xi.resize(e.n);
    et.zi.resize(e.n);
    for (int i = 0; i < e.n; ++i) {
      et.xi[i] = level_index(et.x_levels, ds.stratum_x(t, i));
      et.zi[i] = level_index(et.z_levels, ds.treatment(t, i));
    }
  }
  return e;
}

Encoded gather(const Encoded& base, std::span<const uint32_t> indices) {
  Encoded e;
  e.T = base.T;
  e.n = static_cast<int>(indices.size());
  e.family = base.family;
  e.times.resize(base.T);
  for (int t = 0; t < base.T; ++t) {
    const EncodedTime& src = base.times[t];
    EncodedTime& dst = e.times[t];
    dst.x_levels = src.x_levels;
    dst.z_levels = src.z_levels;
    dst.control = src.control;
    dst.xi.resize(e.n);
    dst.zi.resize(e.n);
    for (int i = 0; i < e.n; ++i) {
      dst.xi[i] = src.xi[indices[i]];
      dst.zi[i] = src.zi[indices[i]];
    }
  }
  e.y.resize(e.n);
  for (int i = 0; i < e.n; ++i) e.y[i] = base.y[indices[i]];
  return e;
}

CellStatsArrays cell_stats(const Encoded& e, int t) {
  const EncodedTime& et = e.times[t - 1];
  int cells = et.n_cells();
  CellStatsArrays out;
  out.count.assign(cells, 0);
  std::vector<double> sum(cells, 0.0), sumsq(cells, 0.0);
  int nz = static_cast<int>(et.z_levels.size());
  for (int i = 0; i < e.n; ++i) {
    int c = et.xi[i] * nz + et.zi[i];
    out.count[c] += 1;
    sum[c] += e.y[i];
    sumsq[c] += e.y[i] * e.y[i];
  }
  out.mean.assign(cells, 0.0);
  out.svar.assign(cells, 0.0);
  for (int c = 0; c < cells; ++c) {
    if (out.count[c] > 0) out.mean[c] = sum[c] / out.count[c];
    if (out.count[c] > 1) {
      double ss = sumsq[c] - sum[c] * sum[c] / out.count[c];
      out.svar[c] = std::max(0.0, ss / (out.count[c] - 1));
    }
  }
  return out;
}

} // namespace bliptest::detail

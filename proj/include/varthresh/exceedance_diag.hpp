// SPDX-License-Identifier: Apache-2.0
//
// Standardised exceedances on the Exp(1) margin, PP/QQ band data and the geometric
// inter-exceedance check.

#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "varthresh/bootstrap.hpp"
#include "varthresh/catalogue_io.hpp"
#include "varthresh/likelihood.hpp"
#include "varthresh/parallel.hpp"

namespace varthresh {

struct StdExceedanceVector {
  std::vector<double> z;  // Exp(1) margin
  std::vector<double> y;  // the unrounded draws behind z
  std::vector<std::size_t> included_indices;
  GpdParams source_params;
};

// Per-event threshold values and weights, reusable across replicates.
struct EventSet {
  std::vector<double> x;
  std::vector<double> v;
  double delta = 0.05;

  [[nodiscard]] static EventSet from(const Catalogue& cat, const ThresholdFn& threshold) {
    EventSet s;
    s.delta = cat.delta;
    s.v = threshold_values(cat, threshold);
    s.x.reserve(cat.size());
    for (const auto& e : cat.events) s.x.push_back(e.x);
    return s;
  }
  [[nodiscard]] std::size_t size() const noexcept { return x.size(); }
};

// Includes event i with probability w_i under theta, draws its unrounded value from the
// GPD conditioned on (max(x_i - delta, v_i), x_i + delta] and maps it to Exp(1) with
// theta at v_i. Inverse-survival sampling gives z directly from the survival value.
[[nodiscard]] inline StdExceedanceVector sample_std_exceedances(const EventSet& ev, const GpdParams& theta, Rng& rng,
                                                                bool keep_y = false) {
  validate(theta);
  StdExceedanceVector out;
  out.source_params = theta;
  out.z.reserve(ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const double x = ev.x[i];
    const double v = ev.v[i];
    const double w = exceedance_weight(x, v, theta, ev.delta);
    if (w <= 0.0) continue;
    if (w < 1.0 && !(uniform01(rng) < w)) continue;
    const double sigma_v = theta.scale_at(v);
    if (!(sigma_v > 0.0)) continue;
    const double b = std::max(x - ev.delta, v) - v;
    const double ls_b = detail::log_excess_survival(b, sigma_v, theta.xi);
    const double ls_h = detail::log_excess_survival(x + ev.delta - v, sigma_v, theta.xi);
    if (std::isinf(ls_b)) continue;
    // S(y) = S(b) - U (S(b) - S(x + delta)), all relative to v
    const double u = uniform01(rng);
    const double log_s = ls_b + std::log1p(u * std::expm1(ls_h - ls_b));
    out.z.push_back(-log_s);
    if (keep_y) out.y.push_back(v + detail::excess_from_log_survival(log_s, sigma_v, theta.xi));
    out.included_indices.push_back(i);
  }
  return out;
}

[[nodiscard]] inline StdExceedanceVector sample_std_exceedances(const Catalogue& cat, const ThresholdFn& threshold,
                                                                const GpdParams& theta, Rng& rng) {
  return sample_std_exceedances(EventSet::from(cat, threshold), theta, rng, true);
}

// Linear interpolation of the points ((j - 1)/(n - 1), z_(j)) of sorted z.
[[nodiscard]] inline double sample_quantile_sorted(const std::vector<double>& z, double p) {
  if (z.empty()) throw DataError("sample quantile of an empty exceedance vector");
  if (z.size() == 1) return z.front();
  p = std::clamp(p, 0.0, 1.0);
  const double h = p * static_cast<double>(z.size() - 1);
  const auto j = std::min(static_cast<std::size_t>(h), z.size() - 2);
  return z[j] + (h - static_cast<double>(j)) * (z[j + 1] - z[j]);
}

// Empirical cdf of sorted z.
[[nodiscard]] inline double empirical_cdf_sorted(const std::vector<double>& z, double q) {
  if (z.empty()) throw DataError("empirical cdf of an empty exceedance vector");
  const auto n = std::upper_bound(z.begin(), z.end(), q) - z.begin();
  return static_cast<double>(n) / static_cast<double>(z.size());
}

enum class PlotKind { pp, qq };

enum class BandFlag { overlap, above, below };

[[nodiscard]] inline const char* flag_name(BandFlag f) noexcept {
  switch (f) {
    case BandFlag::overlap: return "overlap";
    case BandFlag::above: return "above";
    case BandFlag::below: return "below";
  }
  return "?";
}

struct PlotBand {
  PlotKind kind = PlotKind::qq;
  std::vector<double> grid;
  std::vector<double> point;
  std::vector<double> conf_lo, conf_hi;
  std::vector<double> tol_lo, tol_hi;
  std::vector<BandFlag> flags;

  [[nodiscard]] std::size_t n_flagged() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(flags.begin(), flags.end(), [](BandFlag f) { return f != BandFlag::overlap; }));
  }
};

struct BandOptions {
  double level = 0.95;
  std::size_t grid_size = 200;
  int threads = 0;
};

// Confidence bands from standardised exceedances drawn under each bootstrap estimate and
// tolerance bands from Exp(1) samples of matching lengths, on a common probability grid.
[[nodiscard]] inline PlotBand pp_qq_bands(const EventSet& ev, const BootstrapEnsemble& ens, PlotKind kind,
                                          std::uint64_t seed, const BandOptions& opt = {}) {
  if (ens.n_converged() < 50) throw DataError("PP/QQ bands need at least 50 converged bootstrap replicates");
  if (opt.grid_size < 1) throw UsageError("band grid size must be at least 1");
  std::vector<std::size_t> use;
  for (std::size_t i = 0; i < ens.k; ++i) {
    if (ens.converged[i]) use.push_back(i);
  }
  const std::size_t m = opt.grid_size;
  const std::size_t k = use.size();
  PlotBand band;
  band.kind = kind;
  band.grid.resize(m);
  for (std::size_t j = 0; j < m; ++j) band.grid[j] = static_cast<double>(j + 1) / static_cast<double>(m + 1);

  auto curve = [&](const std::vector<double>& z, std::vector<double>& row) {
    for (std::size_t j = 0; j < m; ++j) {
      const double p = band.grid[j];
      row[j] = kind == PlotKind::qq ? sample_quantile_sorted(z, p) : empirical_cdf_sorted(z, -std::log1p(-p));
    }
  };

  std::vector<std::vector<double>> conf(k), tol(k);
  std::vector<char> nonempty(k, 0);
  parallel_for(k, opt.threads, [&](std::size_t r) {
    Rng rng = make_rng(seed, use[r]);
    auto s = sample_std_exceedances(ev, ens.estimates[use[r]], rng);
    if (s.z.empty()) return;
    nonempty[r] = 1;
    std::sort(s.z.begin(), s.z.end());
    conf[r].resize(m);
    curve(s.z, conf[r]);
    std::vector<double> ref(s.z.size());
    Rng ref_rng = make_rng(seed, (std::uint64_t{1} << 40) + use[r]);
    for (auto& e : ref) e = -std::log(uniform01(ref_rng));
    std::sort(ref.begin(), ref.end());
    tol[r].resize(m);
    curve(ref, tol[r]);
  });
  if (std::none_of(nonempty.begin(), nonempty.end(), [](char c) { return c != 0; })) {
    throw DataError("every standardised exceedance vector is empty");
  }
  const double a = (1.0 - opt.level) / 2.0;
  std::vector<double> col_c, col_t;
  for (std::size_t j = 0; j < m; ++j) {
    col_c.clear();
    col_t.clear();
    for (std::size_t r = 0; r < k; ++r) {
      if (!nonempty[r]) continue;
      col_c.push_back(conf[r][j]);
      col_t.push_back(tol[r][j]);
    }
    std::sort(col_c.begin(), col_c.end());
    std::sort(col_t.begin(), col_t.end());
    band.point.push_back(quantile_type7(col_c, 0.5));
    band.conf_lo.push_back(quantile_type7(col_c, a));
    band.conf_hi.push_back(quantile_type7(col_c, 1.0 - a));
    band.tol_lo.push_back(quantile_type7(col_t, a));
    band.tol_hi.push_back(quantile_type7(col_t, 1.0 - a));
    BandFlag f = BandFlag::overlap;
    if (band.conf_lo.back() > band.tol_hi.back()) f = BandFlag::above;
    if (band.conf_hi.back() < band.tol_lo.back()) f = BandFlag::below;
    band.flags.push_back(f);
  }
  return band;
}

[[nodiscard]] inline std::string band_csv(const PlotBand& b) {
  std::string out = "p,point,conf_lo,conf_hi,tol_lo,tol_hi,flag\n";
  for (std::size_t j = 0; j < b.grid.size(); ++j) {
    out += format_double(b.grid[j]) + ',' + format_double(b.point[j]) + ',' + format_double(b.conf_lo[j]) + ',' +
           format_double(b.conf_hi[j]) + ',' + format_double(b.tol_lo[j]) + ',' + format_double(b.tol_hi[j]) + ',' +
           flag_name(b.flags[j]) + '\n';
  }
  return out;
}

struct GeometricCheck {
  double base = 0.0;
  double level = 0.0;
  std::vector<std::int64_t> gaps;
  double p_hat = 1.0;
  std::vector<double> observed;  // relative frequency of gap g, g = 0..max
  std::vector<double> env_lo, env_hi;
  bool pass = true;
};

// Gaps between successive events with x >= level, counted in events with base <= x < level.
// Under i.i.d. magnitudes they are geometric with success probability Pr(X >= level | X >= base).
[[nodiscard]] inline GeometricCheck geometric_interarrival_check(const Catalogue& cat, double base, double level,
                                                                 std::uint64_t seed, int n_sim = 2000) {
  if (!(level > base)) throw UsageError("inter-exceedance level must exceed the base magnitude");
  constexpr double eps = 1e-9;
  GeometricCheck g;
  g.base = base;
  g.level = level;
  std::int64_t run = 0;
  bool seen = false;
  std::size_t n_exceed = 0;
  for (const auto& e : cat.events) {
    if (e.x < base - eps) continue;
    if (e.x >= level - eps) {
      ++n_exceed;
      if (seen) g.gaps.push_back(run);
      seen = true;
      run = 0;
    } else {
      ++run;
    }
  }
  if (n_exceed < 2) throw DataError("geometric check needs at least 2 events at or above " + format_double(level));
  const auto n_gaps = static_cast<double>(g.gaps.size());
  double sum = 0.0;
  std::int64_t gmax = 0;
  for (auto x : g.gaps) {
    sum += static_cast<double>(x);
    gmax = std::max(gmax, x);
  }
  g.p_hat = n_gaps / (n_gaps + sum);
  const auto bins = static_cast<std::size_t>(gmax + 1);
  g.observed.assign(bins, 0.0);
  for (auto x : g.gaps) g.observed[static_cast<std::size_t>(x)] += 1.0 / n_gaps;

  std::vector<std::vector<double>> sims(bins, std::vector<double>(static_cast<std::size_t>(n_sim)));
  Rng rng = make_rng(seed, 0);
  std::vector<double> freq(bins);
  for (int s = 0; s < n_sim; ++s) {
    std::fill(freq.begin(), freq.end(), 0.0);
    for (std::size_t i = 0; i < g.gaps.size(); ++i) {
      std::int64_t x = 0;
      if (g.p_hat < 1.0) {
        std::geometric_distribution<std::int64_t> geo(g.p_hat);
        x = geo(rng);
      }
      if (x < gmax + 1) freq[static_cast<std::size_t>(x)] += 1.0 / n_gaps;
    }
    for (std::size_t b = 0; b < bins; ++b) sims[b][static_cast<std::size_t>(s)] = freq[b];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    std::sort(sims[b].begin(), sims[b].end());
    g.env_lo.push_back(quantile_type7(sims[b], 0.025));
    g.env_hi.push_back(quantile_type7(sims[b], 0.975));
    if (g.observed[b] < g.env_lo.back() - 1e-12 || g.observed[b] > g.env_hi.back() + 1e-12) g.pass = false;
  }
  return g;
}

}  // namespace varthresh

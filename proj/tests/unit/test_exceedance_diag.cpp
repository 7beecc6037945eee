// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "support/properties.hpp"
#include "support/stats.hpp"
#include "varthresh/varthresh.hpp"

namespace vt = varthresh;

TEST(StdExceedances, ConditionalDrawsFollowTruncatedGpd) {
  // One event recorded at 0.3 with v = 0.32: draws live on (0.32, 0.35].
  vt::EventSet ev;
  ev.delta = 0.05;
  ev.x.assign(1, 0.3);
  ev.v.assign(1, 0.32);
  const vt::GpdParams theta{0.4, 0.1, 0.0};
  vt::Rng rng = vt::make_rng(21);
  std::vector<double> y;
  std::size_t tries = 0;
  while (y.size() < 20000) {
    ++tries;
    auto s = vt::sample_std_exceedances(ev, theta, rng, true);
    for (double e : s.y) y.push_back(e);
  }
  for (double e : y) {
    ASSERT_GT(e, 0.32);
    ASSERT_LE(e, 0.35 + 1e-12);
  }
  const double f_lo = vt::gpd_cdf(0.32, theta), f_hi = vt::gpd_cdf(0.35, theta);
  EXPECT_GT(vt::testing::ks_test(y, [&](double q) { return (vt::gpd_cdf(q, theta) - f_lo) / (f_hi - f_lo); }), 1e-3);
  // inclusion rate matches the weight
  EXPECT_TRUE(vt::testing::within_binomial(static_cast<double>(y.size()), static_cast<double>(tries),
                                           vt::exceedance_weight(0.3, 0.32, theta, 0.05)));
}

TEST(StdExceedances, ZMatchesY) {
  vt::SimDesign d;
  d.seed = 3;
  const auto sim = vt::simulate_catalogue(d);
  const auto th = vt::ThresholdFn::constant(1.3);
  const vt::GpdParams theta{0.4, 0.1, 1.05};
  vt::Rng rng = vt::make_rng(4);
  const auto s = vt::sample_std_exceedances(sim.catalogue, th, theta, rng);
  ASSERT_EQ(s.z.size(), s.y.size());
  for (std::size_t i = 0; i < s.z.size(); ++i) {
    EXPECT_NEAR(s.z[i], vt::to_exp_margin(s.y[i], theta.rescaled(1.3)), 1e-9);
  }
}

TEST(StdExceedances, PooledExponential) {
  const auto c = vt::testing::pooled_z_exponential();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(StdExceedances, InclusionFrequencies) {
  const auto c = vt::testing::inclusion_frequencies();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(SampleQuantile, HandValues) {
  const std::vector<double> z{0.1, 0.5, 1.2};
  EXPECT_DOUBLE_EQ(vt::sample_quantile_sorted(z, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(vt::sample_quantile_sorted(z, 0.25), 0.3);
  EXPECT_DOUBLE_EQ(vt::sample_quantile_sorted(z, 1.0), 1.2);
  EXPECT_DOUBLE_EQ(vt::sample_quantile_sorted(z, 0.0), 0.1);
  EXPECT_THROW((void)vt::sample_quantile_sorted({}, 0.5), vt::DataError);
}

namespace {

struct BandRun {
  vt::PlotBand band;
  double tau_max;
};

BandRun bands_for(const vt::Catalogue& cat, const vt::ThresholdFn& th, vt::PlotKind kind, std::uint64_t seed) {
  const auto obs = vt::make_observations(cat, th);
  const auto fit = vt::fit_mle(obs);
  const auto ens = vt::bootstrap_mles(obs, th, cat.tau_max, fit.params, 200, seed);
  return {vt::pp_qq_bands(vt::EventSet::from(cat, th), ens, kind, seed + 1), cat.tau_max};
}

}  // namespace

TEST(PlotBands, CalibratedAtTrueThreshold) {
  // Complete GPD data from 0.2 upward, modelled at 0.32: the rounded-data model holds exactly.
  // (Hard censoring at 0.32 itself would not: every event in the straddling bin then exceeds
  // the threshold, while the weights assume only a fraction do.)
  int overlap = 0, total = 0;
  for (std::uint64_t r = 0; r < 4; ++r) {
    vt::SimDesign d;
    d.n_latent = 1500;
    d.params = vt::GpdParams{0.432, 0.1, 0.32}.rescaled(0.2);
    d.threshold = vt::ThresholdFn::constant(0.2);
    d.seed = 100 + r;
    const auto sim = vt::simulate_catalogue(d);
    for (auto kind : {vt::PlotKind::pp, vt::PlotKind::qq}) {
      const auto b = bands_for(sim.catalogue, vt::ThresholdFn::constant(0.32), kind, 200 + r).band;
      total += static_cast<int>(b.grid.size());
      overlap += static_cast<int>(b.grid.size() - b.n_flagged());
    }
  }
  EXPECT_GE(static_cast<double>(overlap) / total, 0.9) << overlap << "/" << total;
}

TEST(PlotBands, LowThresholdFlagsUpperQuantiles) {
  vt::SimDesign d;
  d.n_latent = 4000;
  d.threshold = vt::ThresholdFn::step(1.65, 1.05, 2000.0);
  d.seed = 5;
  const auto sim = vt::simulate_catalogue(d);
  const auto low = bands_for(sim.catalogue, vt::ThresholdFn::constant(1.15), vt::PlotKind::qq, 6).band;
  EXPECT_GT(std::count(low.flags.begin(), low.flags.end(), vt::BandFlag::above), 0);
  const auto high = bands_for(sim.catalogue, vt::ThresholdFn::constant(1.85), vt::PlotKind::qq, 7).band;
  std::size_t bulk_flags = 0;
  for (std::size_t j = 0; j < high.grid.size(); ++j) {
    if (high.grid[j] >= 0.05 && high.grid[j] <= 0.95 && high.flags[j] != vt::BandFlag::overlap) ++bulk_flags;
  }
  EXPECT_EQ(bulk_flags, 0u);
}

TEST(PlotBands, NeedsFiftyReplicates) {
  vt::SimDesign d;
  d.seed = 8;
  const auto sim = vt::simulate_catalogue(d);
  const auto th = vt::ThresholdFn::constant(1.65);
  const auto ens = vt::bootstrap_mles(sim.catalogue, th, {0.4, 0.1, 1.05}, 20, 1);
  EXPECT_THROW((void)vt::pp_qq_bands(vt::EventSet::from(sim.catalogue, th), ens, vt::PlotKind::qq, 2),
               vt::DataError);
}

TEST(PlotBands, CsvLayout) {
  vt::SimDesign d;
  d.seed = 9;
  const auto sim = vt::simulate_catalogue(d);
  const auto b = bands_for(sim.catalogue, vt::ThresholdFn::constant(1.65), vt::PlotKind::pp, 10).band;
  const auto csv = vt::band_csv(b);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "p,point,conf_lo,conf_hi,tol_lo,tol_hi,flag");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), b.grid.size() + 1);
  for (std::size_t j = 0; j < b.grid.size(); ++j) {
    EXPECT_LE(b.conf_lo[j], b.conf_hi[j]);
    EXPECT_LE(b.tol_lo[j], b.tol_hi[j]);
  }
}

TEST(GeometricCheck, AllAboveGivesZeroGaps) {
  vt::Catalogue c;
  c.delta = 0.05;
  for (int i = 0; i < 30; ++i) c.events.push_back({static_cast<double>(i), "", 0.0, 2.0 + 0.1 * (i % 3)});
  c = vt::to_index_time(c);
  const auto g = vt::geometric_interarrival_check(c, 1.45, 1.65, 1);
  EXPECT_EQ(g.p_hat, 1.0);
  for (auto x : g.gaps) EXPECT_EQ(x, 0);
  EXPECT_TRUE(g.pass);
}

TEST(GeometricCheck, PointwiseCoverageOnIidCatalogues) {
  std::size_t inside = 0, bins = 0;
  for (std::uint64_t r = 0; r < 40; ++r) {
    vt::SimDesign d;
    d.n_latent = 600;
    d.params = {0.45, 0.0, 1.45};
    d.threshold = vt::ThresholdFn::constant(1.45);
    d.seed = 300 + r;
    const auto sim = vt::simulate_catalogue(d);
    const auto g = vt::geometric_interarrival_check(sim.catalogue, 1.5, 1.85, 400 + r);
    for (std::size_t b = 0; b < g.observed.size(); ++b) {
      ++bins;
      if (g.observed[b] >= g.env_lo[b] - 1e-12 && g.observed[b] <= g.env_hi[b] + 1e-12) ++inside;
    }
  }
  EXPECT_GE(static_cast<double>(inside) / static_cast<double>(bins), 0.9) << inside << "/" << bins;
}

TEST(GeometricCheck, NeedsTwoExceedances) {
  vt::Catalogue c;
  c.delta = 0.05;
  c.events = {{1.0, "", 0.0, 1.5}, {2.0, "", 0.0, 2.5}};
  c = vt::to_index_time(c);
  EXPECT_THROW((void)vt::geometric_interarrival_check(c, 1.45, 2.0, 1), vt::DataError);
  EXPECT_THROW((void)vt::geometric_interarrival_check(c, 2.0, 1.0, 1), vt::UsageError);
}

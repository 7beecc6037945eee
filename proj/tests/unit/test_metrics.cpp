// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "support/properties.hpp"
#include "varthresh/varthresh.hpp"

namespace vt = varthresh;

namespace {

vt::BootstrapEnsemble identical_ensemble(const vt::GpdParams& p, std::size_t k) {
  vt::BootstrapEnsemble e;
  e.k = k;
  e.reference = p.u;
  e.estimates.assign(k, p);
  e.counts.assign(k, 0);
  e.seeds.assign(k, 0);
  e.converged.assign(k, true);
  e.attempts.assign(k, 1);
  return e;
}

}  // namespace

TEST(ParseMetric, Forms) {
  EXPECT_EQ(vt::parse_metric("d(q,1)").name(), "d(q,1)");
  EXPECT_EQ(vt::parse_metric("p2").name(), "d(p,2)");
  EXPECT_EQ(vt::parse_metric("d(p, 1)").family, vt::MetricFamily::p);
  EXPECT_THROW((void)vt::parse_metric("d(r,1)"), vt::UsageError);
  EXPECT_THROW((void)vt::parse_metric("q3"), vt::UsageError);
}

TEST(EvaluationGrid, Probabilities) {
  EXPECT_DOUBLE_EQ(vt::evaluation_probability(1, 3), 0.25);
  EXPECT_DOUBLE_EQ(vt::evaluation_probability(3, 3), 0.75);
}

TEST(MetricValues, PerfectFitIsZero) {
  const auto c = vt::testing::metric_zero_at_perfect_fit();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(MetricValues, HandComputed) {
  const auto c = vt::testing::metric_hand_values();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(MetricValues, AllFourFromOnePass) {
  std::vector<double> z{0.05, 0.2, 0.3, 0.9, 1.4, 2.2, 3.1};
  const auto all = vt::all_metrics_sorted(z, 50, false);
  EXPECT_DOUBLE_EQ(all[0], vt::metric_q(z, 1, 50));
  EXPECT_DOUBLE_EQ(all[1], vt::metric_q(z, 2, 50));
  EXPECT_DOUBLE_EQ(all[2], vt::metric_p(z, 1, 50));
  EXPECT_DOUBLE_EQ(all[3], vt::metric_p(z, 2, 50));
  for (double v : all) EXPECT_GT(v, 0.0);
  // the variance weighting only rescales the PP terms
  const auto var = vt::all_metrics_sorted(z, 50, true);
  EXPECT_DOUBLE_EQ(var[0], all[0]);
  EXPECT_NE(var[2], all[2]);
}

TEST(ExpectedMetric, NoiseScalesAsInverseRootK) {
  const auto c = vt::testing::metric_noise_scaling();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(ExpectedMetric, DegenerateEnsembleIsolatesUnroundingNoise) {
  // Tiny rounding, thresholds well below every event: replicates differ only through
  // the unrounding draws, which are confined to intervals of width 2e-8.
  vt::SimDesign d;
  d.n_latent = 400;
  d.params = {0.4, 0.1, 0.0};
  d.threshold = vt::ThresholdFn::constant(0.0);
  d.delta = 1e-8;
  d.seed = 4;
  const auto sim = vt::simulate_catalogue(d);
  const auto th = vt::ThresholdFn::constant(-0.001);
  const auto ens = identical_ensemble({0.4, 0.1, -0.001}, 50);
  vt::MetricSpec spec;
  spec.k = 50;
  spec.m = 100;
  const auto r = vt::expected_metric(sim.catalogue, th, ens, spec, 5);
  double lo = r.per_replicate.front(), hi = lo;
  for (double v : r.per_replicate) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_LT(hi - lo, 1e-6);
  EXPECT_GT(r.value, 0.0);
}

TEST(ExpectedMetric, DeterministicWithNoiseInterval) {
  vt::SimDesign d;
  d.seed = 6;
  const auto sim = vt::simulate_catalogue(d);
  const auto th = vt::ThresholdFn::constant(1.65);
  const auto ens = vt::bootstrap_mles(sim.catalogue, th, {0.4, 0.1, 1.05}, 100, 7);
  vt::MetricSpec spec;
  spec.k = 100;
  spec.m = 200;
  const vt::MetricOptions opt{10, 0};
  const auto a = vt::expected_metrics(vt::EventSet::from(sim.catalogue, th), ens, spec, 8, opt);
  const auto b = vt::expected_metrics(vt::EventSet::from(sim.catalogue, th), ens, spec, 8, opt);
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(a[s].value, b[s].value);
    EXPECT_EQ(a[s].noise_lo, b[s].noise_lo);
    EXPECT_LE(a[s].noise_lo, a[s].value);
    EXPECT_GE(a[s].noise_hi, a[s].value);
    EXPECT_LT(a[s].noise_lo, a[s].noise_hi);
    EXPECT_EQ(a[s].repeats, 11u);
  }
  EXPECT_EQ(a[0].spec.name(), "d(q,1)");
  EXPECT_EQ(a[3].spec.name(), "d(p,2)");
  const auto j = vt::to_json(a[0]);
  EXPECT_EQ(j["metric"], "d(q,1)");
  EXPECT_EQ(j["per_replicate"].size(), 100u);
}

TEST(ExpectedMetric, EmptyReplicatesAreSkipped) {
  // Estimates with a short finite tail give zero weight to events far above their end point.
  vt::Catalogue cat;
  cat.delta = 0.05;
  for (int i = 0; i < 40; ++i) cat.events.push_back({static_cast<double>(i), "", 0.0, 1.0 + 0.1 * (i % 5)});
  cat = vt::to_index_time(cat);
  auto ens = identical_ensemble({0.4, 0.1, 0.8}, 10);
  for (std::size_t i = 0; i < 4; ++i) ens.estimates[i] = {0.05, -0.9, 0.8};  // end point 0.855
  vt::MetricSpec spec;
  spec.k = 10;
  spec.m = 20;
  const auto r = vt::expected_metric(cat, vt::ThresholdFn::constant(0.9), ens, spec, 3);
  EXPECT_EQ(r.n_empty, 4u);
  EXPECT_TRUE(std::isnan(r.per_replicate[0]));
  EXPECT_TRUE(std::isfinite(r.per_replicate[5]));
  EXPECT_TRUE(std::isfinite(r.value));
}

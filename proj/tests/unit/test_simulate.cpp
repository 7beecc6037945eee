// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "support/properties.hpp"
#include "varthresh/varthresh.hpp"

namespace vt = varthresh;

TEST(Simulate, HardCensoringAtGpdThresholdKeepsEverything) {
  vt::SimDesign d;
  d.n_latent = 2000;
  d.params = {0.4, 0.1, 0.3};
  d.threshold = vt::ThresholdFn::constant(0.3);
  d.seed = 1;
  const auto sim = vt::simulate_catalogue(d);
  EXPECT_EQ(sim.catalogue.size(), 2000u);
  EXPECT_EQ(sim.catalogue.tau_max, 2000.0);
  EXPECT_EQ(sim.catalogue.events.back().tau, 2000.0);
}

TEST(Simulate, StepDesignRetainedCount) {
  // First 500 latents kept with probability (1 + 0.1 * 0.6 / 0.4)^-10, the rest always.
  const double keep = std::pow(1.15, -10.0);
  EXPECT_NEAR(keep, 0.2472, 1e-4);
  double total = 0.0;
  constexpr int reps = 200;
  for (int r = 0; r < reps; ++r) {
    vt::SimDesign d;
    d.seed = 10 + r;
    const auto sim = vt::simulate_catalogue(d);
    const double early = vt::retained_index_of(sim, 500.0);
    EXPECT_EQ(static_cast<double>(sim.catalogue.size()) - early, 500.0);
    total += static_cast<double>(sim.catalogue.size());
  }
  EXPECT_TRUE(vt::testing::within_binomial(total - 500.0 * reps, 500.0 * reps, keep)) << total / reps;
  EXPECT_NEAR(total / reps, 500.0 + 500.0 * keep, 3.0);
}

TEST(Simulate, RoundedValuesOnGrid) {
  vt::SimDesign d;
  d.seed = 2;
  const auto sim = vt::simulate_catalogue(d);
  std::size_t j = 0;
  for (const auto& e : sim.latent) {
    if (!e.retained) continue;
    const auto& ev = sim.catalogue.events[j++];
    EXPECT_EQ(ev.x, vt::round_magnitude(e.y, 0.05));
    EXPECT_LE(std::abs(ev.x - e.y), 0.05 + 1e-12);
  }
  EXPECT_EQ(j, sim.catalogue.size());
}

TEST(Simulate, PhasedDetectionProbability) {
  const auto c = vt::Censoring::phased(7.0);
  EXPECT_NEAR(c.detection_probability(0.22, 0.32), 0.4966, 1e-4);
  EXPECT_EQ(c.detection_probability(0.4, 0.32), 1.0);
  EXPECT_EQ(vt::Censoring::hard().detection_probability(0.31, 0.32), 0.0);
}

TEST(Simulate, PhasedRetention) {
  const auto c = vt::testing::phased_retention();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(Simulate, HardCensoringExact) {
  const auto c = vt::testing::hard_censoring_exact();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(Simulate, SeedDeterminism) {
  vt::SimDesign d;
  d.seed = 3;
  const auto a = vt::simulate_catalogue(d);
  const auto b = vt::simulate_catalogue(d);
  ASSERT_EQ(a.catalogue.size(), b.catalogue.size());
  for (std::size_t i = 0; i < a.catalogue.size(); ++i) EXPECT_EQ(a.catalogue.events[i].x, b.catalogue.events[i].x);
  d.seed = 4;
  const auto c = vt::simulate_catalogue(d);
  EXPECT_NE(a.latent.front().y, c.latent.front().y);
}

TEST(Simulate, InvalidDesigns) {
  vt::SimDesign d;
  d.n_latent = 0;
  EXPECT_THROW((void)vt::simulate_catalogue(d), vt::DataError);
  d = {};
  d.params.sigma = -1.0;
  EXPECT_THROW((void)vt::simulate_catalogue(d), vt::DataError);
  d = {};
  d.delta = 0.0;
  EXPECT_THROW((void)vt::simulate_catalogue(d), vt::DataError);
}

TEST(ExtendToCount, AddsExceedances) {
  vt::SimDesign d;
  d.seed = 5;
  const auto sim = vt::simulate_catalogue(d);
  const std::size_t have = vt::count_exceeding(sim.catalogue, 1.45);
  const auto same = vt::extend_to_count(d, sim.catalogue, have, 1.45, 6);
  EXPECT_EQ(same.size(), sim.catalogue.size());
  const auto more = vt::extend_to_count(d, sim.catalogue, have + 100, 1.45, 6);
  EXPECT_EQ(more.size(), sim.catalogue.size() + 100);
  EXPECT_EQ(vt::count_exceeding(more, 1.45), have + 100);
  EXPECT_EQ(more.tau_max, sim.catalogue.tau_max + 100.0);
  EXPECT_THROW((void)vt::extend_to_count(d, sim.catalogue, have - 1, 1.45, 6), vt::DataError);
}

TEST(DesignJson, RoundTrip) {
  vt::SimDesign d;
  d.n_latent = 2400;
  d.params = {0.432, 0.1, 0.32};
  d.threshold = vt::ThresholdFn::constant(0.32);
  d.censoring = vt::Censoring::phased(7.0);
  const auto back = vt::design_from_json(vt::to_json(d));
  EXPECT_EQ(back.n_latent, 2400);
  EXPECT_EQ(back.params, d.params);
  EXPECT_EQ(back.threshold, d.threshold);
  EXPECT_EQ(back.censoring.kind, vt::CensoringKind::phased);
  EXPECT_EQ(back.censoring.lambda, 7.0);
  EXPECT_THROW((void)vt::design_from_json(nlohmann::json{{"censoring", "soft"}}), vt::UsageError);
  EXPECT_THROW((void)vt::design_from_json(nlohmann::json::array()), vt::UsageError);
}

// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support/properties.hpp"
#include "varthresh/varthresh.hpp"

namespace vt = varthresh;

namespace {

vt::Catalogue constant_design(std::uint64_t seed, std::int64_t n = 1500) {
  vt::SimDesign d;
  d.n_latent = n;
  d.params = {0.432, 0.1, 0.32};
  d.threshold = vt::ThresholdFn::constant(0.32);
  d.seed = seed;
  return vt::simulate_catalogue(d).catalogue;
}

vt::EvalConfig small_config() {
  vt::EvalConfig cfg;
  cfg.metric.k = 60;
  cfg.metric.m = 100;
  return cfg;
}

}  // namespace

TEST(ThresholdFamilies, Values) {
  EXPECT_EQ(vt::ThresholdFn::constant(1.45)(123.0), 1.45);
  const auto s = vt::ThresholdFn::sigmoid(1.15, 0.76, 600.0, 50.0);
  EXPECT_DOUBLE_EQ(s(600.0), (1.15 + 0.76) / 2.0);
  const auto sharp = vt::ThresholdFn::sigmoid(1.15, 0.76, 600.0, 1e-9);
  EXPECT_EQ(sharp(599.0), 1.15);
  EXPECT_EQ(sharp(601.0), 0.76);
  const auto st = vt::ThresholdFn::step(0.83, 0.42, 300.0);
  EXPECT_EQ(st(300.0), 0.83);
  EXPECT_EQ(st(300.5), 0.42);
  EXPECT_THROW((void)vt::ThresholdFn::sigmoid(1.0, 0.5, 1.0, 0.0), vt::DataError);
  EXPECT_THROW(st.validate(200.0), vt::DataError);
}

TEST(ThresholdFamilies, ParseAndPrint) {
  for (const char* s : {"constant:1.45", "step:1.65,1.05,500", "sigmoid:1.15,0.76,600,50"}) {
    EXPECT_EQ(vt::to_string(vt::parse_threshold(s)), s);
  }
  EXPECT_THROW((void)vt::parse_threshold("step:1,2"), vt::UsageError);
  EXPECT_THROW((void)vt::parse_threshold("constant"), vt::UsageError);
}

TEST(ThresholdFamilies, SigmoidShape) {
  const auto c = vt::testing::sigmoid_shape();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(ExpectedExceedances, ProxyAndInfeasibility) {
  const auto cat = constant_design(1);
  EXPECT_NEAR(vt::expected_exceedance_proxy(cat, vt::ThresholdFn::constant(-1.0)), static_cast<double>(cat.size()),
              1e-9);
  const auto ev = vt::evaluate_threshold(cat, vt::ThresholdFn::constant(50.0), small_config(), 1);
  EXPECT_FALSE(ev.ok);
  EXPECT_NE(ev.message.find("expected exceedances"), std::string::npos);
}

TEST(GridSearch, SingleCandidate) {
  const auto cat = constant_design(2);
  const auto evals = vt::grid_search(cat, {vt::ThresholdFn::constant(0.35)}, small_config(), 3);
  ASSERT_EQ(evals.size(), 1u);
  EXPECT_TRUE(evals[0].ok);
  EXPECT_EQ(evals[0].threshold, vt::ThresholdFn::constant(0.35));
  EXPECT_THROW((void)vt::grid_search(cat, {}, small_config(), 3), vt::UsageError);
}

TEST(GridSearch, OrderInvariant) {
  const auto cat = constant_design(3);
  auto grid = vt::constant_grid(0.2, 0.6, 9);
  const auto a = vt::grid_search(cat, grid, small_config(), 4);
  std::reverse(grid.begin(), grid.end());
  const auto b = vt::grid_search(cat, grid, small_config(), 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].threshold, b[i].threshold);
    EXPECT_EQ(a[i].value(small_config().metric), b[i].value(small_config().metric));
  }
  const auto& best = vt::best_by_metric(a, small_config().metric, cat.tau_max);
  EXPECT_EQ(best.threshold, a.front().threshold);
}

TEST(GridSearch, TiesGoToHigherThreshold) {
  vt::ThresholdEvaluation lo, hi;
  lo.threshold = vt::ThresholdFn::constant(0.3);
  hi.threshold = vt::ThresholdFn::constant(0.4);
  lo.ok = hi.ok = true;
  const vt::MetricSpec spec;
  lo.metrics[vt::metric_slot(spec)].value = 0.05;
  hi.metrics[vt::metric_slot(spec)].value = 0.05;
  EXPECT_EQ(vt::best_by_metric({lo, hi}, spec, 100.0).threshold, hi.threshold);
  EXPECT_EQ(vt::best_by_metric({hi, lo}, spec, 100.0).threshold, hi.threshold);
}

TEST(GridSearch, ConstantGridSpacing) {
  const auto g = vt::constant_grid(0.0, 1.0, 41);
  ASSERT_EQ(g.size(), 41u);
  EXPECT_EQ(g[13].parameters()[0], 0.325);
  EXPECT_EQ(g[40].parameters()[0], 1.0);
}

TEST(BayesOpt, NoIterationsReturnsBestInitialPoint) {
  const vt::SearchSpace space{vt::ThresholdFamily::step, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  const auto r = vt::bayes_minimize(
      [](const std::vector<double>& x) -> std::optional<double> { return x[0] + x[1] + x[2]; }, space, {6, 0, 64, 1},
      3);
  ASSERT_EQ(r.trace.size(), 6u);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : r.trace) best = std::min(best, row.value);
  EXPECT_EQ(r.best_value, best);
}

TEST(BayesOpt, IncumbentMonotone) {
  const auto c = vt::testing::bo_incumbent_monotone();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(BayesOpt, QuadraticBowl) {
  const auto c = vt::testing::bo_bowl();
  EXPECT_TRUE(c.pass) << c.detail;
}

TEST(BayesOpt, FrozenCoordinatesAndFailures) {
  const vt::SearchSpace space{vt::ThresholdFamily::step, {0.0, 0.5, 0.0}, {1.0, 0.5, 1.0}};
  int failures = 0;
  const auto r = vt::bayes_minimize(
      [&](const std::vector<double>& x) -> std::optional<double> {
        EXPECT_EQ(x[1], 0.5);
        if (x[0] > 0.8) {
          ++failures;
          return std::nullopt;
        }
        return std::pow(x[0] - 0.4, 2) + std::pow(x[2] - 0.6, 2);
      },
      space, {8, 12, 256, 1}, 4);
  EXPECT_EQ(r.trace.size(), 20u);
  EXPECT_LT(r.best_x[0], 0.8);
  for (const auto& row : r.trace) {
    if (row.x[0] > 0.8) {
      EXPECT_TRUE(std::isnan(row.value));
    }
  }
  const auto csv = vt::trace_csv(r, vt::ThresholdFamily::step);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,v1,v2,tau_star,d_value,incumbent");
  if (failures > 0) {
    EXPECT_NE(csv.find("NA"), std::string::npos);
  }
}

TEST(BayesOpt, DeterministicForSeed) {
  const vt::SearchSpace space{vt::ThresholdFamily::step, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  auto f = [](const std::vector<double>& x) -> std::optional<double> { return std::sin(3 * x[0]) + x[1] * x[2]; };
  const auto a = vt::bayes_minimize(f, space, {6, 4, 128, 1}, 9);
  const auto b = vt::bayes_minimize(f, space, {6, 4, 128, 1}, 9);
  EXPECT_EQ(a.best_x, b.best_x);
  EXPECT_EQ(vt::trace_csv(a, space.family), vt::trace_csv(b, space.family));
}

TEST(CandidateSeed, DependsOnParametersOnly) {
  const auto a = vt::candidate_seed(5, vt::ThresholdFn::constant(0.35));
  EXPECT_EQ(a, vt::candidate_seed(5, vt::ThresholdFn::constant(0.35)));
  EXPECT_NE(a, vt::candidate_seed(5, vt::ThresholdFn::constant(0.375)));
  EXPECT_NE(a, vt::candidate_seed(6, vt::ThresholdFn::constant(0.35)));
}

TEST(StabilityScan, GpdAboveLowestLevelIsStable) {
  const auto cat = constant_design(11, 2500);
  const auto scan = vt::parameter_stability_scan(cat, {0.35, 0.45, 0.55, 0.65}, 200, 12);
  ASSERT_EQ(scan.rows.size(), 4u);
  for (const auto& r : scan.rows) {
    EXPECT_TRUE(r.ok) << r.message;
    EXPECT_LT(r.ci.lo, r.ci.hi);
  }
  ASSERT_TRUE(scan.stable_from.has_value());
  EXPECT_EQ(*scan.stable_from, 0.35);
  EXPECT_THROW((void)vt::parameter_stability_scan(cat, {0.4}, 10, 1), vt::UsageError);
}

// SPDX-License-Identifier: Apache-2.0
//
// Threshold selection: scoring a candidate threshold by its expected metric, grid search,
// Bayesian optimisation and the parameter-stability scan.

#pragma once
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "varthresh/bootstrap.hpp"
#include "varthresh/gaussian_process.hpp"
#include "varthresh/likelihood.hpp"
#include "varthresh/metrics.hpp"

namespace varthresh {

struct SearchSpace {
  ThresholdFamily family = ThresholdFamily::constant;
  std::vector<double> lower;
  std::vector<double> upper;

  // [0.4, 1.7]^2 x [200, 1100] x [1, 500]
  [[nodiscard]] static SearchSpace groningen_sigmoid() {
    return {ThresholdFamily::sigmoid, {0.4, 0.4, 200.0, 1.0}, {1.7, 1.7, 1100.0, 500.0}};
  }

  void validate() const {
    const auto d = family_dimension(family);
    if (lower.size() != d || upper.size() != d) {
      throw UsageError("search space for '" + std::string(family_name(family)) + "' needs " + std::to_string(d) +
                       " lower and upper bounds");
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::isfinite(lower[j]) || !std::isfinite(upper[j]) || lower[j] > upper[j]) {
        throw UsageError("search space bound " + std::to_string(j) + " has lower > upper");
      }
    }
  }
  // Coordinates with lower < upper; the others are frozen at their common value.
  [[nodiscard]] std::vector<std::size_t> free_coordinates() const {
    std::vector<std::size_t> f;
    for (std::size_t j = 0; j < lower.size(); ++j) {
      if (lower[j] < upper[j]) f.push_back(j);
    }
    return f;
  }
  [[nodiscard]] std::vector<double> from_unit(const std::vector<double>& unit_free) const {
    std::vector<double> x = lower;
    const auto f = free_coordinates();
    for (std::size_t i = 0; i < f.size(); ++i) x[f[i]] = lower[f[i]] + unit_free[i] * (upper[f[i]] - lower[f[i]]);
    return x;
  }
};

struct EvalConfig {
  MetricSpec metric;  // which metric ranks candidates; all four are reported
  FitOptions fit;
  BootstrapOptions bootstrap;
  MetricOptions metric_options;
  double min_expected_exceedances = 10.0;
};

struct ThresholdEvaluation {
  ThresholdFn threshold;
  bool ok = false;
  std::string message;
  double expected_exceedances = 0.0;
  FitResult fit;
  std::array<MetricReport, 4> metrics{};
  std::uint64_t seed = 0;

  [[nodiscard]] double value(const MetricSpec& spec) const { return metrics[metric_slot(spec)].value; }
};

// Expected number of exceedances without reference to parameters: each event counts with
// the fraction of its rounding interval above its threshold.
[[nodiscard]] inline double expected_exceedance_proxy(const Catalogue& cat, const ThresholdFn& threshold) {
  double n = 0.0;
  for (const auto& e : cat.events) {
    n += std::clamp((e.x + cat.delta - threshold(e.tau)) / (2.0 * cat.delta), 0.0, 1.0);
  }
  return n;
}

// Per-candidate seed from the threshold parameters, so results do not depend on the order
// in which candidates are evaluated.
[[nodiscard]] inline std::uint64_t candidate_seed(std::uint64_t seed, const ThresholdFn& fn) {
  std::uint64_t h = derive_seed(seed, static_cast<std::uint64_t>(fn.family()));
  for (double p : fn.parameters()) h = derive_seed(h, std::bit_cast<std::uint64_t>(p + 0.0));
  return h;
}

// Fit, bootstrap and expected metrics for one threshold. Never throws for data-driven
// failures; those are reported through ok/message.
[[nodiscard]] inline ThresholdEvaluation evaluate_threshold(const Catalogue& cat, const ThresholdFn& threshold,
                                                            const EvalConfig& cfg, std::uint64_t seed) {
  ThresholdEvaluation ev;
  ev.threshold = threshold;
  ev.seed = candidate_seed(seed, threshold);
  try {
    threshold.validate(cat.tau_max);
    ev.expected_exceedances = expected_exceedance_proxy(cat, threshold);
    if (ev.expected_exceedances < cfg.min_expected_exceedances) {
      ev.message = "fewer than " + format_double(cfg.min_expected_exceedances) + " expected exceedances";
      return ev;
    }
    const auto obs = make_observations(cat, threshold);
    ev.fit = fit_mle(obs, cfg.fit);
    if (!ev.fit.converged) {
      ev.message = "fit failed: " + ev.fit.message;
      return ev;
    }
    const auto ens = bootstrap_mles(obs, threshold, cat.tau_max, ev.fit.params, cfg.metric.k, derive_seed(ev.seed, 1),
                                    cfg.bootstrap);
    if (ens.n_converged() == 0) {
      ev.message = "no bootstrap replicate converged";
      return ev;
    }
    ev.metrics = expected_metrics(EventSet::from(cat, threshold), ens, cfg.metric, derive_seed(ev.seed, 2),
                                  cfg.metric_options);
    ev.ok = true;
  } catch (const Error& e) {
    ev.ok = false;
    ev.message = e.what();
  }
  return ev;
}

// Evaluates every candidate and ranks by the configured metric, lowest first; ties go to
// the higher (more conservative) threshold. Skipped candidates are listed last.
[[nodiscard]] inline std::vector<ThresholdEvaluation> grid_search(const Catalogue& cat,
                                                                  const std::vector<ThresholdFn>& candidates,
                                                                  const EvalConfig& cfg, std::uint64_t seed) {
  if (candidates.empty()) throw UsageError("grid search needs at least one candidate threshold");
  std::vector<ThresholdEvaluation> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(evaluate_threshold(cat, c, cfg, seed));
  const double tmax = cat.tau_max;
  std::stable_sort(out.begin(), out.end(), [&](const ThresholdEvaluation& a, const ThresholdEvaluation& b) {
    if (a.ok != b.ok) return a.ok;
    if (a.ok) {
      const double va = a.value(cfg.metric), vb = b.value(cfg.metric);
      if (va != vb) return va < vb;
    }
    const double la = a.threshold.mean_level(tmax), lb = b.threshold.mean_level(tmax);
    if (la != lb) return la > lb;
    return a.threshold.parameters() > b.threshold.parameters();
  });
  return out;
}

// Best successful evaluation under `spec`, with the same tie rule as grid_search.
[[nodiscard]] inline const ThresholdEvaluation& best_by_metric(const std::vector<ThresholdEvaluation>& evals,
                                                               const MetricSpec& spec, double tau_max) {
  const ThresholdEvaluation* best = nullptr;
  for (const auto& e : evals) {
    if (!e.ok) continue;
    if (!best || e.value(spec) < best->value(spec) ||
        (e.value(spec) == best->value(spec) && e.threshold.mean_level(tau_max) > best->threshold.mean_level(tau_max))) {
      best = &e;
    }
  }
  if (!best) throw DataError("no candidate threshold could be evaluated");
  return *best;
}

[[nodiscard]] inline std::vector<ThresholdFn> constant_grid(double from, double to, std::size_t n) {
  if (n < 1) throw UsageError("candidate grid needs at least one point");
  std::vector<ThresholdFn> g;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = n == 1 ? from : from + (to - from) * static_cast<double>(i) / static_cast<double>(n - 1);
    g.push_back(ThresholdFn::constant(std::round(v * 1e10) / 1e10));
  }
  return g;
}

struct BoBudget {
  std::size_t n_init = 20;
  std::size_t n_iter = 100;
  std::size_t acquisition_samples = 1024;
  int gp_restarts = 3;
};

struct TraceRow {
  std::size_t iter = 0;
  std::vector<double> x;
  double value = std::numeric_limits<double>::quiet_NaN();  // NaN when the evaluation failed
  double incumbent = std::numeric_limits<double>::infinity();
};

struct BoResult {
  std::vector<double> best_x;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<TraceRow> trace;
};

// Minimises a noisy black-box objective over a box. `objective` returns nullopt on failure;
// failed points enter the surrogate at the worst value seen so far.
[[nodiscard]] inline BoResult bayes_minimize(const std::function<std::optional<double>(const std::vector<double>&)>& objective,
                                             const SearchSpace& space, const BoBudget& budget, std::uint64_t seed) {
  if (budget.n_init < 2) throw UsageError("Bayesian optimisation needs at least 2 initial points");
  const auto free = space.free_coordinates();
  const std::size_t d = free.size();
  Rng rng = make_rng(seed, 11);
  BoResult res;
  std::vector<std::vector<double>> units;
  std::vector<double> values;
  std::vector<char> failed;

  auto record = [&](const std::vector<double>& unit) {
    const auto x = space.from_unit(unit);
    const auto v = objective(x);
    TraceRow row;
    row.iter = res.trace.size();
    row.x = x;
    units.push_back(unit);
    if (v && std::isfinite(*v)) {
      row.value = *v;
      values.push_back(*v);
      failed.push_back(0);
      if (*v < res.best_value) {
        res.best_value = *v;
        res.best_x = x;
      }
    } else {
      values.push_back(std::numeric_limits<double>::quiet_NaN());
      failed.push_back(1);
    }
    row.incumbent = res.best_value;
    res.trace.push_back(row);
  };

  // Latin hypercube: one point per stratum in every free coordinate.
  std::vector<std::vector<double>> design(budget.n_init, std::vector<double>(d));
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<std::size_t> perm(budget.n_init);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < budget.n_init; ++i) {
      design[i][j] = (static_cast<double>(perm[i]) + uniform01(rng)) / static_cast<double>(budget.n_init);
    }
  }
  for (const auto& u : design) record(u);

  for (std::size_t it = 0; it < budget.n_iter && d > 0; ++it) {
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t n_ok = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!failed[i]) {
        worst = std::max(worst, values[i]);
        ++n_ok;
      }
    }
    std::vector<double> next(d);
    if (n_ok < 2) {
      for (auto& c : next) c = uniform01(rng);
    } else {
      Eigen::MatrixXd x(static_cast<Eigen::Index>(units.size()), static_cast<Eigen::Index>(d));
      Eigen::VectorXd y(static_cast<Eigen::Index>(units.size()));
      for (std::size_t i = 0; i < units.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = units[i][j];
        y(static_cast<Eigen::Index>(i)) = failed[i] ? worst : values[i];
      }
      GaussianProcess gp;
      gp.fit(x, y, derive_seed(seed, 1000 + it), budget.gp_restarts);
      double best_mean = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < x.rows(); ++i) best_mean = std::min(best_mean, gp.predict(x.row(i).transpose()).mean);
      auto neg_ei = [&](const std::vector<double>& u) {
        Eigen::VectorXd p(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) {
          if (u[j] < 0.0 || u[j] > 1.0) return std::numeric_limits<double>::infinity();
          p(static_cast<Eigen::Index>(j)) = u[j];
        }
        return -expected_improvement(gp.predict(p), best_mean);
      };
      double best_ei = std::numeric_limits<double>::infinity();
      std::vector<double> cand(d);
      for (std::size_t s = 0; s < budget.acquisition_samples; ++s) {
        for (auto& c : cand) c = uniform01(rng);
        const double v = neg_ei(cand);
        if (v < best_ei) {
          best_ei = v;
          next = cand;
        }
      }
      const auto polished = nelder_mead(neg_ei, next, std::vector<double>(d, 0.02), {1e-6, 0.0, 300});
      if (polished.value <= best_ei) next = polished.x;
    }
    record(next);
  }
  if (res.best_x.empty()) throw NumericError("Bayesian optimisation: every objective evaluation failed");
  return res;
}

struct BoSelection {
  ThresholdFn best;
  BoResult result;
  std::vector<ThresholdEvaluation> evaluations;
};

[[nodiscard]] inline BoSelection bayes_opt(const Catalogue& cat, const SearchSpace& space, const BoBudget& budget,
                                           const EvalConfig& cfg, std::uint64_t seed) {
  space.validate();
  BoSelection sel;
  auto objective = [&](const std::vector<double>& x) -> std::optional<double> {
    std::optional<ThresholdFn> fn;
    try {
      fn = ThresholdFn::from_parameters(space.family, x);
    } catch (const Error&) {
      return std::nullopt;
    }
    auto ev = evaluate_threshold(cat, *fn, cfg, seed);
    sel.evaluations.push_back(ev);
    if (!ev.ok) return std::nullopt;
    return ev.value(cfg.metric);
  };
  sel.result = bayes_minimize(objective, space, budget, derive_seed(seed, 99));
  sel.best = ThresholdFn::from_parameters(space.family, sel.result.best_x);
  return sel;
}

[[nodiscard]] inline std::string trace_csv(const BoResult& r, ThresholdFamily family) {
  static const std::vector<std::vector<std::string>> names{
      {"v"}, {"v1", "v2", "tau_star"}, {"v_left", "v_right", "mu", "width"}};
  std::string out = "iter";
  for (const auto& n : names[static_cast<std::size_t>(family)]) out += ',' + n;
  out += ",d_value,incumbent\n";
  for (const auto& row : r.trace) {
    out += std::to_string(row.iter);
    for (double v : row.x) out += ',' + format_double(v);
    out += ',' + (std::isfinite(row.value) ? format_double(row.value) : std::string("NA"));
    out += ',' + (std::isfinite(row.incumbent) ? format_double(row.incumbent) : std::string("NA")) + '\n';
  }
  return out;
}

struct StabilityRow {
  double level = 0.0;
  bool ok = false;
  double xi = 0.0;
  Interval ci;
  std::string message;
};

struct StabilityScan {
  std::vector<StabilityRow> rows;
  std::optional<double> stable_from;  // lowest level from which all higher intervals overlap
};

[[nodiscard]] inline StabilityScan parameter_stability_scan(const Catalogue& cat, std::vector<double> levels,
                                                            std::size_t k, std::uint64_t seed, double level = 0.95,
                                                            const FitOptions& fit = {},
                                                            const BootstrapOptions& boot = {}) {
  if (levels.size() < 2) throw UsageError("parameter stability scan needs at least 2 levels");
  std::sort(levels.begin(), levels.end());
  StabilityScan scan;
  for (double v : levels) {
    StabilityRow row;
    row.level = v;
    const auto fn = ThresholdFn::constant(v);
    const auto obs = make_observations(cat, fn);
    try {
      const auto r = fit_mle(obs, fit);
      if (!r.converged) throw NumericError(r.message);
      row.xi = r.params.xi;
      const auto ens = bootstrap_mles(obs, fn, cat.tau_max, r.params, k, candidate_seed(seed, fn), boot);
      row.ci = xi_ci(ens, level);
      row.ok = true;
    } catch (const Error& e) {
      row.message = e.what();
    }
    scan.rows.push_back(row);
  }
  // In one dimension pairwise overlap of a family of intervals is equivalent to a common point.
  double max_lo = -std::numeric_limits<double>::infinity();
  double min_hi = std::numeric_limits<double>::infinity();
  for (std::size_t i = scan.rows.size(); i-- > 0;) {
    const auto& r = scan.rows[i];
    if (!r.ok) break;
    max_lo = std::max(max_lo, r.ci.lo);
    min_hi = std::min(min_hi, r.ci.hi);
    if (max_lo > min_hi) break;
    scan.stable_from = r.level;
  }
  return scan;
}

[[nodiscard]] inline nlohmann::json to_json(const ThresholdEvaluation& e, double tau_max) {
  nlohmann::json j{{"threshold", to_string(e.threshold)},
                   {"mean_level", e.threshold.mean_level(tau_max)},
                   {"ok", e.ok},
                   {"expected_exceedances", e.expected_exceedances},
                   {"seed", e.seed}};
  if (!e.message.empty()) j["message"] = e.message;
  if (e.ok) {
    j["sigma_u"] = e.fit.params.sigma;
    j["xi"] = e.fit.params.xi;
    j["u"] = e.fit.params.u;
    for (const auto& m : e.metrics) {
      j["metrics"][m.spec.name()] = {{"value", m.value}, {"noise_interval", {m.noise_lo, m.noise_hi}}};
    }
  }
  return j;
}

}  // namespace varthresh

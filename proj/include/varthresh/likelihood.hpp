// SPDX-License-Identifier: Apache-2.0
//
// Rounded, threshold-censored GPD likelihoods and maximum-likelihood fitting.
//
// An event with recorded magnitude x and threshold value v contributes
//   w * log Pr(max(v, x - delta) < Y < x + delta | Y > v)
// where w = Pr(Y > v | x) is its exceedance weight. Events are pooled by their (x, v)
// pair; rounding makes the number of distinct pairs small for constant and step
// thresholds, so the likelihood cost is independent of the catalogue size.

#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "varthresh/catalogue.hpp"
#include "varthresh/error.hpp"
#include "varthresh/gpd.hpp"
#include "varthresh/nelder_mead.hpp"
#include "varthresh/threshold.hpp"

namespace varthresh {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct IntervalGroup {
  double x = 0.0;      // recorded magnitude
  double v = 0.0;      // threshold value at the events' times
  double count = 0.0;  // number of events sharing (x, v)
};

struct Observations {
  std::vector<IntervalGroup> groups;
  double delta = 0.05;

  [[nodiscard]] double total() const noexcept {
    double n = 0.0;
    for (const auto& g : groups) n += g.count;
    return n;
  }
  [[nodiscard]] double min_threshold() const noexcept {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& g : groups) m = std::min(m, g.v);
    return m;
  }
  [[nodiscard]] double max_threshold() const noexcept {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& g : groups) m = std::max(m, g.v);
    return m;
  }
  // True when some group straddles its threshold, i.e. has a weight strictly in (0, 1).
  [[nodiscard]] bool has_borderline() const noexcept {
    return std::any_of(groups.begin(), groups.end(), [this](const IntervalGroup& g) {
      return g.x - delta < g.v && g.x + delta > g.v;
    });
  }
};

// Pools (x_i, v_i) pairs. Pairs whose rounding interval lies entirely at or below the
// threshold are dropped: their weight is zero under every parameter value.
[[nodiscard]] inline Observations make_observations(std::span<const double> x, std::span<const double> v,
                                                    double delta) {
  if (x.size() != v.size()) throw DataError("magnitude and threshold vectors differ in length");
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] + delta > v[i]) pairs.emplace_back(x[i], v[i]);
  }
  std::sort(pairs.begin(), pairs.end());
  Observations obs;
  obs.delta = delta;
  for (const auto& [xi, vi] : pairs) {
    if (!obs.groups.empty() && obs.groups.back().x == xi && obs.groups.back().v == vi) {
      obs.groups.back().count += 1.0;
    } else {
      obs.groups.push_back({xi, vi, 1.0});
    }
  }
  return obs;
}

[[nodiscard]] inline std::vector<double> threshold_values(const Catalogue& cat, const ThresholdFn& threshold) {
  std::vector<double> v(cat.size());
  for (std::size_t i = 0; i < cat.size(); ++i) v[i] = threshold(cat.events[i].tau);
  return v;
}

[[nodiscard]] inline Observations make_observations(const Catalogue& cat, const ThresholdFn& threshold) {
  std::vector<double> x(cat.size());
  for (std::size_t i = 0; i < cat.size(); ++i) x[i] = cat.events[i].x;
  const auto v = threshold_values(cat, threshold);
  return make_observations(x, v, cat.delta);
}

// Pr(Y > v | Y rounds to x), with GPD anchored at params.u; the rounding interval is
// (x - delta, x + delta].
[[nodiscard]] inline double exceedance_weight(double x, double v, const GpdParams& params, double delta) {
  validate(params);
  if (x - delta >= v) return 1.0;
  if (x + delta <= v) return 0.0;
  const double lb = detail::log_excess_survival(v - params.u, params.sigma, params.xi);
  const double lh = detail::log_excess_survival(x + delta - params.u, params.sigma, params.xi);
  const double ll = detail::log_excess_survival(x - delta - params.u, params.sigma, params.xi);
  if (std::isinf(lb) || std::isinf(ll)) return 0.0;
  const double den = -std::expm1(lh - ll);
  if (!(den > 0.0)) return 0.0;
  const double w = std::exp(lb - ll) * (-std::expm1(lh - lb)) / den;
  return std::clamp(w, 0.0, 1.0);
}

// log Pr(max(v, x - delta) < Y < x + delta | Y > v); -inf when the interval has no mass.
[[nodiscard]] inline double interval_log_prob(double x, double v, const GpdParams& params, double delta) noexcept {
  const double sigma_v = params.scale_at(v);
  if (!(sigma_v > 0.0)) return kNegInf;
  const double lo = std::max(v, x - delta) - v;
  const double hi = x + delta - v;
  if (!(hi > lo)) return kNegInf;
  const double ls_lo = detail::log_excess_survival(lo, sigma_v, params.xi);
  const double ls_hi = detail::log_excess_survival(hi, sigma_v, params.xi);
  if (std::isinf(ls_lo)) return kNegInf;
  const double mass = -std::expm1(ls_hi - ls_lo);
  if (!(mass > 0.0)) return kNegInf;
  return ls_lo + std::log(mass);
}

[[nodiscard]] inline std::vector<double> group_weights(const Observations& obs, const GpdParams& params) {
  std::vector<double> w(obs.groups.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = exceedance_weight(obs.groups[i].x, obs.groups[i].v, params, obs.delta);
  }
  return w;
}

// Sum of count * weight * log-term with the given (frozen) weights. Terms with zero
// weight contribute nothing even when their log-probability is -inf.
[[nodiscard]] inline double weighted_loglik(const Observations& obs, std::span<const double> weights,
                                            const GpdParams& params) noexcept {
  if (!params.valid()) return kNegInf;
  double ll = 0.0;
  for (std::size_t i = 0; i < obs.groups.size(); ++i) {
    const double w = weights[i];
    if (w <= 0.0) continue;
    const auto& g = obs.groups[i];
    const double t = interval_log_prob(g.x, g.v, params, obs.delta);
    if (std::isinf(t)) return kNegInf;
    ll += g.count * w * t;
  }
  return ll;
}

// Weighted log-likelihood with the weights evaluated at `params` itself.
[[nodiscard]] inline double weighted_loglik(const Observations& obs, const GpdParams& params) {
  if (!params.valid()) return kNegInf;
  const auto w = group_weights(obs, params);
  return weighted_loglik(obs, w, params);
}

[[nodiscard]] inline double weighted_loglik(const Catalogue& cat, const ThresholdFn& threshold,
                                            const GpdParams& params) {
  return weighted_loglik(make_observations(cat, threshold), params);
}

// Every event counts fully: used for bootstrap catalogues, whose latent magnitudes all
// exceed their thresholds by construction.
[[nodiscard]] inline double unweighted_bootstrap_loglik(const Observations& obs, const GpdParams& params) noexcept {
  if (!params.valid()) return kNegInf;
  double ll = 0.0;
  for (const auto& g : obs.groups) {
    const double t = interval_log_prob(g.x, g.v, params, obs.delta);
    if (std::isinf(t)) return kNegInf;
    ll += g.count * t;
  }
  return ll;
}

enum class WeightMode {
  fixed_point,  // alternate: weights at the current estimate, then maximise with them frozen
  joint,        // weights move with the parameters inside the objective
};

enum class LikelihoodKind { weighted, unweighted };

struct FitOptions {
  std::optional<double> reference;  // u; default: lowest threshold value minus 2*delta
  double xi_lower = -0.9;
  double xi_upper = 1.0;
  std::optional<double> fixed_xi;  // e.g. 0 for the exponential model
  int starts = 5;
  double x_tol = 1e-8;
  int max_evals = 4000;
  WeightMode weight_mode = WeightMode::fixed_point;
  int max_rounds = 20;
  double round_tol = 1e-7;
  LikelihoodKind kind = LikelihoodKind::weighted;
};

struct FitResult {
  GpdParams params;
  double loglik = kNegInf;
  double n_effective = 0.0;  // sum of weights at the estimate
  bool converged = false;
  int rounds = 0;
  int evaluations = 0;
  std::string message;
};

[[nodiscard]] inline double default_reference(const Observations& obs) {
  return obs.min_threshold() - 2.0 * obs.delta;
}

namespace detail {

struct Objective {
  const Observations* obs;
  const FitOptions* opt;
  const std::vector<double>* weights;  // null -> unweighted or joint
  double u;
  double v_min;
  double v_max;

  [[nodiscard]] GpdParams unpack(const std::vector<double>& z) const {
    const double xi = opt->fixed_xi ? *opt->fixed_xi : z[1];
    return {std::exp(z[0]), xi, u};
  }

  [[nodiscard]] bool feasible(const GpdParams& p) const {
    if (!(p.xi >= opt->xi_lower && p.xi <= opt->xi_upper)) return false;
    if (!std::isfinite(p.sigma) || !(p.sigma > 0.0)) return false;
    return p.scale_at(v_min) > 0.0 && p.scale_at(v_max) > 0.0;
  }

  double operator()(const std::vector<double>& z) const {
    const GpdParams p = unpack(z);
    if (!feasible(p)) return std::numeric_limits<double>::infinity();
    double ll;
    if (opt->kind == LikelihoodKind::unweighted) {
      ll = unweighted_bootstrap_loglik(*obs, p);
    } else if (weights) {
      ll = weighted_loglik(*obs, *weights, p);
    } else {
      ll = weighted_loglik(*obs, p);
    }
    return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
  }
};

// Moment-matching starting point from the events certainly above their thresholds.
[[nodiscard]] inline GpdParams moment_start(const Observations& obs, double u) {
  double n = 0.0, s1 = 0.0, s2 = 0.0, vbar = 0.0;
  for (const auto& g : obs.groups) {
    if (g.x - obs.delta < g.v) continue;
    const double e = g.x - g.v;
    n += g.count;
    s1 += g.count * e;
    s2 += g.count * e * e;
    vbar += g.count * g.v;
  }
  if (n < 2.0) {
    for (const auto& g : obs.groups) {
      const double e = std::max(g.x + 0.5 * obs.delta - g.v, 0.5 * obs.delta);
      n += g.count;
      s1 += g.count * e;
      s2 += g.count * e * e;
      vbar += g.count * g.v;
    }
  }
  if (n < 1.0) return {1.0, 0.0, u};
  const double mean = std::max(s1 / n, 1e-6);
  const double var = std::max(s2 / n - mean * mean, 1e-12);
  vbar /= n;
  const double r = mean * mean / var;
  double xi = std::clamp(0.5 * (1.0 - r), -0.4, 0.4);
  double sigma_v = 0.5 * mean * (1.0 + r);
  double sigma_u = sigma_v - xi * (vbar - u);
  if (!(sigma_u > 0.05 * sigma_v)) {
    xi = 0.0;
    sigma_u = mean;
  }
  return {sigma_u, xi, u};
}

}  // namespace detail

// Multi-start simplex maximisation of one likelihood with frozen weights (or none).
[[nodiscard]] inline NelderMeadResult maximise_once(const detail::Objective& obj,
                                                    const std::vector<GpdParams>& starts,
                                                    const FitOptions& opt) {
  const bool free_xi = !opt.fixed_xi.has_value();
  NelderMeadOptions nm{opt.x_tol, 0.0, opt.max_evals};
  NelderMeadResult best;
  int evals = 0;
  for (const auto& s : starts) {
    std::vector<double> z{std::log(s.sigma)};
    std::vector<double> step{0.1};
    if (free_xi) {
      z.push_back(std::clamp(s.xi, opt.xi_lower + 1e-3, opt.xi_upper - 1e-3));
      step.push_back(0.05);
    }
    auto r = nelder_mead(obj, z, step, nm);
    evals += r.evals;
    if (r.value < best.value || best.x.empty()) best = r;
  }
  if (!best.x.empty() && std::isfinite(best.value)) {
    // restart from the optimum to guard against simplex collapse
    std::vector<double> step(best.x.size(), 0.02);
    auto r = nelder_mead(obj, best.x, step, nm);
    evals += r.evals;
    if (r.value <= best.value) best = r;
    else best.converged = best.converged && r.converged;
  }
  best.evals = evals;
  return best;
}

namespace detail {

[[nodiscard]] inline std::vector<GpdParams> start_points(const GpdParams& init, int starts, const FitOptions& opt) {
  std::vector<GpdParams> pts{init};
  static constexpr std::array<std::array<double, 2>, 4> kJitter{{{0.3, 0.15}, {-0.3, -0.15}, {0.3, -0.15}, {-0.3, 0.15}}};
  for (int i = 1; i < starts; ++i) {
    const auto& j = kJitter[static_cast<std::size_t>(i - 1) % kJitter.size()];
    const double scale = 1.0 + static_cast<double>((i - 1) / 4);
    GpdParams p = init;
    p.sigma = init.sigma * std::exp(j[0] * scale);
    p.xi = opt.fixed_xi ? *opt.fixed_xi : std::clamp(init.xi + j[1] * scale, opt.xi_lower + 0.01, opt.xi_upper - 0.01);
    pts.push_back(p);
  }
  return pts;
}

}  // namespace detail

// Maximum-likelihood fit of the rounded GPD above `obs` thresholds.
[[nodiscard]] inline FitResult fit_mle(const Observations& obs, const FitOptions& opt = {},
                                       std::optional<GpdParams> init = std::nullopt) {
  FitResult res;
  double positive = 0.0;
  for (const auto& g : obs.groups) positive += g.count;
  if (positive < 2.0) throw DataError("maximum likelihood fit needs at least 2 events with positive weight");

  const double u = opt.reference ? *opt.reference : default_reference(obs);
  if (u > obs.min_threshold()) throw DataError("reference threshold u must not exceed the lowest modelling threshold");
  detail::Objective obj{&obs, &opt, nullptr, u, obs.min_threshold(), obs.max_threshold()};

  GpdParams start = init ? init->rescaled(u) : detail::moment_start(obs, u);
  if (opt.fixed_xi) {
    start.sigma = std::max(start.scale_at(obs.min_threshold()) - *opt.fixed_xi * (obs.min_threshold() - u), 1e-3);
    start.xi = *opt.fixed_xi;
  }
  if (!(start.sigma > 0.0) || !obj.feasible(start)) start = detail::moment_start(obs, u);
  if (!obj.feasible(start)) start = {std::max(start.sigma, 0.1), 0.0, u};

  auto starts = detail::start_points(start, std::max(opt.starts, 1), opt);
  const bool iterate = opt.kind == LikelihoodKind::weighted && opt.weight_mode == WeightMode::fixed_point &&
                       obs.has_borderline();
  const bool joint = opt.kind == LikelihoodKind::weighted && opt.weight_mode == WeightMode::joint;

  GpdParams current = start;
  NelderMeadResult nm;
  if (!iterate) {
    std::vector<double> ones(obs.groups.size(), 1.0);
    if (opt.kind == LikelihoodKind::weighted && !joint) {
      // no borderline groups: every weight is 1
      obj.weights = &ones;
    }
    nm = maximise_once(obj, starts, opt);
    res.evaluations = nm.evals;
    res.rounds = 1;
    res.converged = nm.converged && std::isfinite(nm.value);
    if (!nm.x.empty()) current = obj.unpack(nm.x);
  } else {
    res.converged = false;
    for (int round = 0; round < opt.max_rounds; ++round) {
      std::vector<double> w = group_weights(obs, current);
      obj.weights = &w;
      nm = maximise_once(obj, round == 0 ? starts : std::vector<GpdParams>{current}, opt);
      res.evaluations += nm.evals;
      res.rounds = round + 1;
      if (nm.x.empty() || !std::isfinite(nm.value)) break;
      const GpdParams next = obj.unpack(nm.x);
      const double moved = std::max(std::abs(next.sigma - current.sigma), std::abs(next.xi - current.xi));
      current = next;
      if (round > 0 && moved < opt.round_tol) {
        res.converged = nm.converged;
        break;
      }
    }
    obj.weights = nullptr;
  }

  res.params = current;
  if (opt.kind == LikelihoodKind::unweighted) {
    res.loglik = unweighted_bootstrap_loglik(obs, current);
    res.n_effective = obs.total();
  } else {
    const auto w = group_weights(obs, current);
    res.loglik = weighted_loglik(obs, w, current);
    res.n_effective = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) res.n_effective += w[i] * obs.groups[i].count;
  }
  if (!std::isfinite(res.loglik)) {
    res.converged = false;
    res.message = "no parameter value with finite likelihood was found";
  } else if (!res.converged) {
    res.message = iterate ? "weight iteration did not settle" : "simplex did not converge";
  }
  return res;
}

[[nodiscard]] inline FitResult fit_mle(const Catalogue& cat, const ThresholdFn& threshold,
                                       const FitOptions& opt = {}, std::optional<GpdParams> init = std::nullopt) {
  threshold.validate(cat.tau_max);
  return fit_mle(make_observations(cat, threshold), opt, init);
}

struct LikelihoodRatioTest {
  double statistic = 0.0;
  double p_value = 1.0;
  FitResult gpd;
  FitResult exponential;
};

// chi-square(1) upper tail
[[nodiscard]] inline double chi2_1_sf(double x) noexcept {
  if (!(x > 0.0)) return 1.0;
  return std::erfc(std::sqrt(0.5 * x));
}

// Exponential (xi = 0) versus GPD for the same observations. Fixed-point fits maximise a
// different weighted objective for each model, so both are refined on the joint objective,
// where the models are properly nested.
[[nodiscard]] inline LikelihoodRatioTest likelihood_ratio_test(const Observations& obs, FitOptions opt = {}) {
  opt.fixed_xi.reset();
  LikelihoodRatioTest t;
  FitOptions exp_opt = opt;
  exp_opt.fixed_xi = 0.0;
  t.gpd = fit_mle(obs, opt);
  t.exponential = fit_mle(obs, exp_opt);
  if (opt.kind == LikelihoodKind::weighted && opt.weight_mode == WeightMode::fixed_point) {
    auto refine = [&](FitResult& fit, FitOptions o) {
      o.weight_mode = WeightMode::joint;
      if (!fit.converged) return;
      auto joint = fit_mle(obs, o, fit.params);
      if (joint.converged && joint.loglik >= fit.loglik) fit = std::move(joint);
    };
    refine(t.gpd, opt);
    refine(t.exponential, exp_opt);
  }
  if (!std::isfinite(t.gpd.loglik) || !std::isfinite(t.exponential.loglik) || !t.gpd.converged ||
      !t.exponential.converged) {
    throw NumericError("likelihood ratio test: a model fit failed (" +
                       (t.gpd.converged ? t.exponential.message : t.gpd.message) + ")");
  }
  t.statistic = std::max(0.0, 2.0 * (t.gpd.loglik - t.exponential.loglik));
  t.p_value = chi2_1_sf(t.statistic);
  return t;
}

[[nodiscard]] inline LikelihoodRatioTest likelihood_ratio_test(const Catalogue& cat, const ThresholdFn& threshold,
                                                               FitOptions opt = {}) {
  threshold.validate(cat.tau_max);
  return likelihood_ratio_test(make_observations(cat, threshold), std::move(opt));
}

}  // namespace varthresh

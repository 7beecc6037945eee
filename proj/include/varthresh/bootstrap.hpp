// SPDX-License-Identifier: Apache-2.0
//
// Parametric bootstrap of catalogues from the fitted Poisson process of exceedances and
// ensembles of bootstrap estimates.

#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "varthresh/catalogue.hpp"
#include "varthresh/catalogue_io.hpp"
#include "varthresh/likelihood.hpp"
#include "varthresh/parallel.hpp"
#include "varthresh/random.hpp"

namespace varthresh {

// A_v = {(tau, y) : 0 <= tau <= tau_max, y >= v(tau)}
struct ExceedanceRegion {
  ThresholdFn threshold;
  double tau_max = 0.0;
  int smooth_cells = 512;
};

struct ExceedanceCount {
  std::int64_t m_v = 0;     // sum of Bernoulli(w_i)
  double lambda = 0.0;      // Poisson(m_v) draw, the resampled process mean
  std::int64_t n_v = 0;     // Poisson(lambda) draw, the replicate size
};

// Bernoulli -> Poisson -> Poisson chain for the replicate size.
[[nodiscard]] inline ExceedanceCount sample_exceedance_count(const Observations& obs, const GpdParams& params,
                                                             Rng& rng) {
  ExceedanceCount c;
  for (const auto& g : obs.groups) {
    const double w = exceedance_weight(g.x, g.v, params, obs.delta);
    const auto n = static_cast<std::int64_t>(g.count);
    if (w >= 1.0) {
      c.m_v += n;
    } else if (w > 0.0) {
      std::binomial_distribution<std::int64_t> b(n, w);
      c.m_v += b(rng);
    }
  }
  c.lambda = static_cast<double>(poisson(rng, static_cast<double>(c.m_v)));
  c.n_v = poisson(rng, c.lambda);
  return c;
}

[[nodiscard]] inline ExceedanceCount sample_exceedance_count(const Catalogue& cat, const ThresholdFn& threshold,
                                                             const GpdParams& params, Rng& rng) {
  return sample_exceedance_count(make_observations(cat, threshold), params, rng);
}

// Probability of each threshold cell under the intensity lambda(tau) proportional to
// Fbar(v(tau) - u).
[[nodiscard]] inline std::vector<double> cell_probabilities(const std::vector<ThresholdCell>& cells,
                                                            const GpdParams& params) {
  std::vector<double> p(cells.size());
  double total = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    p[i] = (cells[i].end - cells[i].begin) * gpd_survival(std::max(cells[i].level, params.u), params);
    total += p[i];
  }
  if (!(total > 0.0)) throw DataError("threshold lies above the upper end point of the fitted GPD everywhere");
  for (auto& x : p) x /= total;
  return p;
}

// Event times i.i.d. with density proportional to the exceedance intensity, sorted.
[[nodiscard]] inline std::vector<double> sample_event_times(std::int64_t n_events, const ExceedanceRegion& region,
                                                            const GpdParams& params, Rng& rng) {
  validate(params);
  std::vector<double> times;
  if (n_events <= 0) return times;
  const auto cells = threshold_cells(region.threshold, region.tau_max, region.smooth_cells);
  const auto prob = cell_probabilities(cells, params);
  std::discrete_distribution<std::size_t> pick(prob.begin(), prob.end());
  times.reserve(static_cast<std::size_t>(n_events));
  for (std::int64_t i = 0; i < n_events; ++i) {
    const auto& c = cells[pick(rng)];
    times.push_back(c.begin + uniform01(rng) * (c.end - c.begin));
  }
  std::sort(times.begin(), times.end());
  return times;
}

struct BootstrapSample {
  Catalogue catalogue;         // tau holds the sampled (continuous) index times
  std::vector<double> latent;  // unrounded magnitudes, for tests
  std::vector<double> thresholds;
  ExceedanceCount count;
};

[[nodiscard]] inline BootstrapSample sample_bootstrap_catalogue(const Observations& obs, const ThresholdFn& threshold,
                                                                double tau_max, const GpdParams& params, Rng& rng) {
  BootstrapSample s;
  s.count = sample_exceedance_count(obs, params, rng);
  const auto times = sample_event_times(s.count.n_v, {threshold, tau_max}, params, rng);
  s.catalogue.delta = obs.delta;
  s.catalogue.tau_max = tau_max;
  s.catalogue.source = "parametric bootstrap";
  s.catalogue.events.reserve(times.size());
  s.latent.reserve(times.size());
  s.thresholds.reserve(times.size());
  for (double tau : times) {
    const double v = threshold(tau);
    const GpdParams at_v = params.rescaled(v);
    const double y = gpd_sample(at_v, rng);
    Event e;
    e.t = tau;
    e.tau = tau;
    e.x = round_magnitude(y, obs.delta);
    s.catalogue.events.push_back(e);
    s.latent.push_back(y);
    s.thresholds.push_back(v);
  }
  return s;
}

[[nodiscard]] inline BootstrapSample sample_bootstrap_catalogue(const Catalogue& cat, const ThresholdFn& threshold,
                                                                const GpdParams& params, Rng& rng) {
  return sample_bootstrap_catalogue(make_observations(cat, threshold), threshold, cat.tau_max, params, rng);
}

// Warm start from the point estimate with one start; tolerance stays tight.
[[nodiscard]] inline FitOptions bootstrap_fit_defaults() {
  FitOptions f;
  f.kind = LikelihoodKind::unweighted;
  f.starts = 1;
  f.x_tol = 1e-7;
  return f;
}

struct BootstrapOptions {
  int retries = 3;
  int threads = 0;
  FitOptions fit = bootstrap_fit_defaults();
};

struct BootstrapEnsemble {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  double reference = 0.0;  // u of every estimate
  std::vector<GpdParams> estimates;
  std::vector<std::int64_t> counts;
  std::vector<std::uint64_t> seeds;
  std::vector<bool> converged;
  std::vector<int> attempts;

  [[nodiscard]] std::size_t n_converged() const noexcept {
    return static_cast<std::size_t>(std::count(converged.begin(), converged.end(), true));
  }
};

// k bootstrap estimates. Replicate i uses stream derive_seed(seed, i), so the ensemble
// does not depend on the thread count. A replicate whose fit fails is redrawn up to
// `retries` times and then flagged as not converged.
[[nodiscard]] inline BootstrapEnsemble bootstrap_mles(const Observations& obs, const ThresholdFn& threshold,
                                                      double tau_max, const GpdParams& params, std::size_t k,
                                                      std::uint64_t seed, const BootstrapOptions& opt = {}) {
  if (k == 0) throw UsageError("bootstrap needs k >= 1 replicates");
  validate(params);
  BootstrapEnsemble ens;
  ens.k = k;
  ens.seed = seed;
  ens.reference = params.u;
  ens.estimates.assign(k, params);
  ens.counts.assign(k, 0);
  ens.seeds.assign(k, 0);
  ens.converged.assign(k, false);
  ens.attempts.assign(k, 0);
  std::vector<char> ok(k, 0);

  FitOptions fit = opt.fit;
  fit.kind = LikelihoodKind::unweighted;
  fit.reference = params.u;

  parallel_for(k, opt.threads, [&](std::size_t i) {
    const std::uint64_t s = derive_seed(seed, i);
    ens.seeds[i] = s;
    for (int attempt = 0; attempt <= opt.retries; ++attempt) {
      ens.attempts[i] = attempt + 1;
      Rng rng = make_rng(s, static_cast<std::uint64_t>(attempt));
      auto sample = sample_bootstrap_catalogue(obs, threshold, tau_max, params, rng);
      ens.counts[i] = static_cast<std::int64_t>(sample.catalogue.size());
      if (sample.catalogue.size() < 2) continue;
      std::vector<double> x(sample.catalogue.size());
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = sample.catalogue.events[j].x;
      const auto bobs = make_observations(x, sample.thresholds, obs.delta);
      try {
        const auto r = fit_mle(bobs, fit, params);
        ens.estimates[i] = r.params;
        if (r.converged) {
          ok[i] = 1;
          break;
        }
      } catch (const DataError&) {
        // too few usable events; redraw
      }
    }
  });
  for (std::size_t i = 0; i < k; ++i) ens.converged[i] = ok[i] != 0;
  return ens;
}

[[nodiscard]] inline BootstrapEnsemble bootstrap_mles(const Catalogue& cat, const ThresholdFn& threshold,
                                                      const GpdParams& params, std::size_t k, std::uint64_t seed,
                                                      const BootstrapOptions& opt = {}) {
  threshold.validate(cat.tau_max);
  return bootstrap_mles(make_observations(cat, threshold), threshold, cat.tau_max, params, k, seed, opt);
}

// Type-7 sample quantile (linear interpolation between order statistics) of sorted data.
[[nodiscard]] inline double quantile_type7(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

[[nodiscard]] inline Interval percentile_interval(std::vector<double> values, double level) {
  if (!(level > 0.0 && level < 1.0)) throw UsageError("interval level must lie in (0, 1)");
  if (values.empty()) throw DataError("percentile interval of an empty ensemble");
  const double alpha = 1.0 - level;
  if (static_cast<double>(values.size()) * alpha / 2.0 < 1.0) {
    throw DataError("ensemble of " + std::to_string(values.size()) + " replicates is too small for a " +
                    std::to_string(level) + " interval");
  }
  std::sort(values.begin(), values.end());
  return {quantile_type7(values, alpha / 2.0), quantile_type7(values, 1.0 - alpha / 2.0)};
}

// Percentile interval of a functional of the converged estimates.
[[nodiscard]] inline Interval percentile_ci(const BootstrapEnsemble& ens, double level,
                                            const std::function<double(const GpdParams&)>& functional) {
  std::vector<double> values;
  values.reserve(ens.estimates.size());
  for (std::size_t i = 0; i < ens.estimates.size(); ++i) {
    if (ens.converged[i]) values.push_back(functional(ens.estimates[i]));
  }
  return percentile_interval(std::move(values), level);
}

[[nodiscard]] inline Interval sigma_ci(const BootstrapEnsemble& ens, double level, double at_threshold) {
  return percentile_ci(ens, level, [at_threshold](const GpdParams& p) { return p.scale_at(at_threshold); });
}

[[nodiscard]] inline Interval xi_ci(const BootstrapEnsemble& ens, double level) {
  return percentile_ci(ens, level, [](const GpdParams& p) { return p.xi; });
}

[[nodiscard]] inline std::string ensemble_csv(const BootstrapEnsemble& ens, double report_threshold) {
  std::string out = "index,seed,sigma,xi,n_v,converged\n";
  for (std::size_t i = 0; i < ens.k; ++i) {
    out += std::to_string(i) + ',' + std::to_string(ens.seeds[i]) + ',' +
           format_double(ens.estimates[i].scale_at(report_threshold)) + ',' + format_double(ens.estimates[i].xi) +
           ',' + std::to_string(ens.counts[i]) + ',' + (ens.converged[i] ? "1" : "0") + '\n';
  }
  return out;
}

[[nodiscard]] inline nlohmann::json ensemble_json(const BootstrapEnsemble& ens, double report_threshold) {
  nlohmann::json reps = nlohmann::json::array();
  for (std::size_t i = 0; i < ens.k; ++i) {
    reps.push_back({{"index", i},
                    {"seed", ens.seeds[i]},
                    {"sigma", ens.estimates[i].scale_at(report_threshold)},
                    {"xi", ens.estimates[i].xi},
                    {"n_v", ens.counts[i]},
                    {"converged", static_cast<bool>(ens.converged[i])},
                    {"attempts", ens.attempts[i]}});
  }
  return {{"k", ens.k},
          {"seed", ens.seed},
          {"sigma_reported_at", report_threshold},
          {"quantile_rule", "type 7 (linear interpolation of order statistics)"},
          {"n_converged", ens.n_converged()},
          {"replicates", reps}};
}

}  // namespace varthresh

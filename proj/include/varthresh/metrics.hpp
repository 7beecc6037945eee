// SPDX-License-Identifier: Apache-2.0
//
// PP and QQ distances between standardised exceedances and Exp(1), and their Monte Carlo
// expectation over a bootstrap ensemble.

#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "varthresh/bootstrap.hpp"
#include "varthresh/exceedance_diag.hpp"
#include "varthresh/parallel.hpp"

namespace varthresh {

enum class MetricFamily { q, p };

struct MetricSpec {
  MetricFamily family = MetricFamily::q;
  int power = 1;
  std::size_t m = 500;
  std::size_t k = 500;
  bool pp_weight_variance = false;  // weight by p(1-p)/n instead of p(1-p)/sqrt(n)

  [[nodiscard]] std::string name() const {
    return std::string("d(") + (family == MetricFamily::q ? "q" : "p") + "," + std::to_string(power) + ")";
  }
  void validate() const {
    if (power != 1 && power != 2) throw UsageError("metric power must be 1 or 2");
    if (m < 1) throw UsageError("metric needs m >= 1 evaluation probabilities");
    if (k < 1) throw UsageError("metric needs k >= 1 replicates");
  }
};

[[nodiscard]] inline MetricSpec parse_metric(const std::string& s) {
  MetricSpec spec;
  std::string t;
  for (char c : s) {
    if (c != ' ' && c != '(' && c != ')' && c != 'd' && c != ',') t += c;
  }
  if (t.size() != 2 || (t[0] != 'q' && t[0] != 'p') || (t[1] != '1' && t[1] != '2')) {
    throw UsageError("metric must be one of d(q,1), d(q,2), d(p,1), d(p,2) (or q1, q2, p1, p2); got '" + s + "'");
  }
  spec.family = t[0] == 'q' ? MetricFamily::q : MetricFamily::p;
  spec.power = t[1] - '0';
  return spec;
}

[[nodiscard]] inline double evaluation_probability(std::size_t j, std::size_t m) noexcept {
  return static_cast<double>(j) / static_cast<double>(m + 1);
}

// Q(p) for an unsorted vector.
[[nodiscard]] inline double sample_quantile_fn(std::vector<double> z, double p) {
  std::sort(z.begin(), z.end());
  return sample_quantile_sorted(z, p);
}

// d(q,1), d(q,2), d(p,1), d(p,2) from one sorted vector in a single pass over the grid.
[[nodiscard]] inline std::array<double, 4> all_metrics_sorted(const std::vector<double>& z, std::size_t m,
                                                              bool pp_weight_variance = false) {
  if (z.empty()) throw DataError("metric of an empty exceedance vector");
  const auto n = static_cast<double>(z.size());
  std::array<double, 4> d{0.0, 0.0, 0.0, 0.0};
  std::size_t below = 0;
  for (std::size_t j = 1; j <= m; ++j) {
    const double p = evaluation_probability(j, m);
    const double q = -std::log1p(-p);
    const double eq = std::abs(q - sample_quantile_sorted(z, p));
    while (below < z.size() && z[below] <= q) ++below;
    const double ep = std::abs(p - static_cast<double>(below) / n);
    const double var = p * (1.0 - p) / (pp_weight_variance ? n : std::sqrt(n));
    const double wt = 1.0 / std::sqrt(var);
    d[0] += eq;
    d[1] += eq * eq;
    d[2] += wt * ep;
    d[3] += wt * ep * ep;
  }
  for (auto& x : d) x /= static_cast<double>(m);
  return d;
}

[[nodiscard]] inline std::size_t metric_slot(const MetricSpec& spec) noexcept {
  return (spec.family == MetricFamily::q ? 0 : 2) + (spec.power == 2 ? 1 : 0);
}

[[nodiscard]] inline double metric_q(std::vector<double> z, int power, std::size_t m) {
  if (power != 1 && power != 2) throw UsageError("metric power must be 1 or 2");
  std::sort(z.begin(), z.end());
  return all_metrics_sorted(z, m)[power == 1 ? 0 : 1];
}

[[nodiscard]] inline double metric_p(std::vector<double> z, int power, std::size_t m,
                                     bool pp_weight_variance = false) {
  if (power != 1 && power != 2) throw UsageError("metric power must be 1 or 2");
  std::sort(z.begin(), z.end());
  return all_metrics_sorted(z, m, pp_weight_variance)[power == 1 ? 2 : 3];
}

struct MetricReport {
  MetricSpec spec;
  std::uint64_t seed = 0;
  double value = 0.0;
  double noise_lo = 0.0;
  double noise_hi = 0.0;
  std::size_t repeats = 0;
  std::vector<double> per_replicate;  // NaN where the replicate had no exceedances
  std::size_t n_empty = 0;
};

// Per-replicate values of all four metrics for one draw of standardised exceedances.
struct MetricDraw {
  std::vector<std::array<double, 4>> values;
  std::vector<char> valid;
};

[[nodiscard]] inline MetricDraw draw_metrics(const EventSet& ev, const BootstrapEnsemble& ens, std::size_t m,
                                             bool pp_weight_variance, std::uint64_t seed, int threads) {
  MetricDraw d;
  d.values.assign(ens.k, {0.0, 0.0, 0.0, 0.0});
  d.valid.assign(ens.k, 0);
  parallel_for(ens.k, threads, [&](std::size_t i) {
    if (!ens.converged[i]) return;
    Rng rng = make_rng(seed, i);
    auto s = sample_std_exceedances(ev, ens.estimates[i], rng);
    if (s.z.empty()) return;
    std::sort(s.z.begin(), s.z.end());
    d.values[i] = all_metrics_sorted(s.z, m, pp_weight_variance);
    d.valid[i] = 1;
  });
  return d;
}

struct MetricOptions {
  std::size_t noise_repeats = 0;  // extra evaluations for the noise interval (0 = none)
  int threads = 0;
};

// Mean of the per-replicate metric over the ensemble. The noise interval spans the
// 2.5% and 97.5% points of the mean across repeated draws of the standardised exceedances
// (the first being the reported evaluation), widened if needed to contain the value.
[[nodiscard]] inline std::array<MetricReport, 4> expected_metrics(const EventSet& ev, const BootstrapEnsemble& ens,
                                                                  MetricSpec spec, std::uint64_t seed,
                                                                  const MetricOptions& opt = {}) {
  spec.validate();
  std::array<MetricReport, 4> out;
  std::array<std::vector<double>, 4> means;
  const std::size_t runs = 1 + opt.noise_repeats;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto d = draw_metrics(ev, ens, spec.m, spec.pp_weight_variance, derive_seed(seed, r), opt.threads);
    std::size_t n_ok = 0;
    std::array<double, 4> sum{0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < ens.k; ++i) {
      if (!d.valid[i]) continue;
      ++n_ok;
      for (std::size_t s = 0; s < 4; ++s) sum[s] += d.values[i][s];
    }
    if (n_ok == 0) throw DataError("no bootstrap replicate produced standardised exceedances");
    for (std::size_t s = 0; s < 4; ++s) means[s].push_back(sum[s] / static_cast<double>(n_ok));
    if (r == 0) {
      for (std::size_t s = 0; s < 4; ++s) {
        auto& rep = out[s];
        rep.spec = spec;
        rep.spec.family = s < 2 ? MetricFamily::q : MetricFamily::p;
        rep.spec.power = s % 2 == 0 ? 1 : 2;
        rep.seed = seed;
        rep.value = means[s].back();
        rep.n_empty = ens.k - n_ok;
        rep.per_replicate.resize(ens.k);
        for (std::size_t i = 0; i < ens.k; ++i) {
          rep.per_replicate[i] = d.valid[i] ? d.values[i][s] : std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
  }
  for (std::size_t s = 0; s < 4; ++s) {
    auto& rep = out[s];
    rep.repeats = runs;
    auto v = means[s];
    std::sort(v.begin(), v.end());
    rep.noise_lo = std::min(quantile_type7(v, 0.025), rep.value);
    rep.noise_hi = std::max(quantile_type7(v, 0.975), rep.value);
  }
  return out;
}

[[nodiscard]] inline MetricReport expected_metric(const EventSet& ev, const BootstrapEnsemble& ens,
                                                  const MetricSpec& spec, std::uint64_t seed,
                                                  const MetricOptions& opt = {}) {
  auto all = expected_metrics(ev, ens, spec, seed, opt);
  return all[metric_slot(spec)];
}

[[nodiscard]] inline MetricReport expected_metric(const Catalogue& cat, const ThresholdFn& threshold,
                                                  const BootstrapEnsemble& ens, const MetricSpec& spec,
                                                  std::uint64_t seed, const MetricOptions& opt = {}) {
  return expected_metric(EventSet::from(cat, threshold), ens, spec, seed, opt);
}

[[nodiscard]] inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (double x : r.per_replicate) {
    if (std::isfinite(x)) per.push_back(x);
    else per.push_back(nullptr);
  }
  return {{"metric", r.spec.name()},
          {"value", r.value},
          {"noise_interval", {r.noise_lo, r.noise_hi}},
          {"noise_repeats", r.repeats},
          {"m", r.spec.m},
          {"k", r.spec.k},
          {"pp_weight_variance", r.spec.pp_weight_variance},
          {"empty_replicates", r.n_empty},
          {"seed", r.seed},
          {"per_replicate", per}};
}

}  // namespace varthresh

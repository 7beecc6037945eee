// SPDX-License-Identifier: Apache-2.0
//
// Synthetic catalogues: i.i.d. GPD latent magnitudes, hard or phased censoring below a
// threshold on the latent index, rounding.

#pragma once
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "varthresh/catalogue.hpp"
#include "varthresh/gpd.hpp"
#include "varthresh/random.hpp"
#include "varthresh/threshold.hpp"

namespace varthresh {

enum class CensoringKind { hard, phased };

struct Censoring {
  CensoringKind kind = CensoringKind::hard;
  double lambda = 7.0;  // phased only

  [[nodiscard]] static Censoring hard() { return {CensoringKind::hard, 0.0}; }
  [[nodiscard]] static Censoring phased(double lambda) { return {CensoringKind::phased, lambda}; }

  // Detection probability of a latent magnitude y at threshold value v.
  [[nodiscard]] double detection_probability(double y, double v) const noexcept {
    if (y >= v) return 1.0;
    if (kind == CensoringKind::hard) return 0.0;
    return std::exp(-lambda * (v - y));
  }
};

struct SimDesign {
  std::int64_t n_latent = 1000;
  GpdParams params{0.4, 0.1, 1.05};
  ThresholdFn threshold = ThresholdFn::step(1.65, 1.05, 500.0);  // on the latent index
  Censoring censoring = Censoring::hard();
  double delta = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_latent < 1) throw DataError("simulation design needs n_latent >= 1");
    varthresh::validate(params);
    if (censoring.kind == CensoringKind::phased && !(censoring.lambda > 0.0)) {
      throw DataError("phased censoring needs lambda > 0");
    }
    if (!(delta > 0.0)) throw DataError("rounding half-width delta must be positive");
    for (double p : threshold.parameters()) {
      if (!std::isfinite(p)) throw DataError("censoring threshold parameters must be finite");
    }
  }
};

struct LatentEvent {
  double tau = 0.0;  // latent index, 1..n_latent
  double y = 0.0;
  double v = 0.0;    // censoring threshold at tau
  bool retained = false;
};

struct Simulation {
  Catalogue catalogue;
  std::vector<LatentEvent> latent;  // oracle record; never written to catalogue files
};

[[nodiscard]] inline Simulation simulate_catalogue(const SimDesign& d) {
  d.validate();
  Rng rng = make_rng(d.seed, 0);
  Simulation s;
  s.latent.reserve(static_cast<std::size_t>(d.n_latent));
  s.catalogue.delta = d.delta;
  s.catalogue.source = "simulated";
  for (std::int64_t i = 1; i <= d.n_latent; ++i) {
    LatentEvent e;
    e.tau = static_cast<double>(i);
    e.y = gpd_sample(d.params, rng);
    e.v = d.threshold(e.tau);
    const double a = d.censoring.detection_probability(e.y, e.v);
    e.retained = a >= 1.0 || (a > 0.0 && uniform01(rng) < a);
    if (e.retained) {
      Event ev;
      ev.x = round_magnitude(e.y, d.delta);
      s.catalogue.events.push_back(ev);
    }
    s.latent.push_back(e);
  }
  for (std::size_t j = 0; j < s.catalogue.size(); ++j) {
    s.catalogue.events[j].t = static_cast<double>(j + 1);
    s.catalogue.events[j].tau = static_cast<double>(j + 1);
  }
  s.catalogue.tau_max = static_cast<double>(s.catalogue.size());
  return s;
}

// Number of retained events whose latent index is at most `latent_tau`: the index-time
// position of a latent change point in the retained catalogue.
[[nodiscard]] inline double retained_index_of(const Simulation& s, double latent_tau) {
  double n = 0.0;
  for (const auto& e : s.latent) {
    if (e.tau > latent_tau) break;
    if (e.retained) n += 1.0;
  }
  return n;
}

// Events certainly above `level` after rounding.
[[nodiscard]] inline std::size_t count_exceeding(const Catalogue& cat, double level) {
  std::size_t n = 0;
  for (const auto& e : cat.events) {
    if (e.x - cat.delta >= level - 1e-9) ++n;
  }
  return n;
}

// Appends rounded i.i.d. GPD exceedances of `level` until `target` events exceed it.
[[nodiscard]] inline Catalogue extend_to_count(const SimDesign& d, Catalogue base, std::size_t target, double level,
                                               std::uint64_t seed) {
  const std::size_t have = count_exceeding(base, level);
  if (target < have) {
    throw DataError("extension target " + std::to_string(target) + " is below the current count " +
                    std::to_string(have));
  }
  if (level < d.params.u) throw DataError("extension level lies below the design's GPD threshold");
  Rng rng = make_rng(seed, 1);
  const GpdParams at_level = d.params.rescaled(level);
  double tau = base.tau_max;
  for (std::size_t i = have; i < target; ++i) {
    Event e;
    tau += 1.0;
    e.t = tau;
    e.tau = tau;
    e.x = round_magnitude(gpd_sample(at_level, rng), base.delta);
    base.events.push_back(e);
  }
  base.tau_max = tau;
  return base;
}

[[nodiscard]] inline SimDesign design_from_json(const nlohmann::json& j) {
  SimDesign d;
  if (!j.is_object()) throw UsageError("simulation design must be a JSON object");
  try {
    d.n_latent = j.value("n_latent", d.n_latent);
    if (j.contains("params")) {
      const auto& p = j["params"];
      d.params = {p.at("sigma").get<double>(), p.at("xi").get<double>(), p.at("u").get<double>()};
    }
    if (j.contains("threshold")) d.threshold = parse_threshold(j["threshold"].get<std::string>());
    const std::string c = j.value("censoring", std::string("hard"));
    if (c == "hard") {
      d.censoring = Censoring::hard();
    } else if (c == "phased") {
      d.censoring = Censoring::phased(j.value("lambda", 7.0));
    } else {
      throw UsageError("censoring must be 'hard' or 'phased'");
    }
    d.delta = j.value("delta", d.delta);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad simulation design: ") + e.what());
  }
  return d;
}

[[nodiscard]] inline nlohmann::json to_json(const SimDesign& d) {
  return {{"n_latent", d.n_latent},
          {"params", {{"sigma", d.params.sigma}, {"xi", d.params.xi}, {"u", d.params.u}}},
          {"threshold", to_string(d.threshold)},
          {"censoring", d.censoring.kind == CensoringKind::hard ? "hard" : "phased"},
          {"lambda", d.censoring.lambda},
          {"delta", d.delta}};
}

}  // namespace varthresh

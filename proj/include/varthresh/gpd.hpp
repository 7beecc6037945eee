// SPDX-License-Identifier: Apache-2.0
//
// Generalised Pareto distribution for exceedances of a reference threshold u:
//
//   F(y; sigma, xi) = 1 - [1 + xi (y - u) / sigma]_+^(-1/xi)     (xi != 0)
//   F(y; sigma, xi) = 1 - exp(-(y - u) / sigma)                 (xi == 0)
//
// Everything is evaluated on the log-survival scale through log1p/expm1 so that the
// xi -> 0 limit is reached smoothly.

#pragma once
#include <cmath>
#include <limits>
#include <sstream>

#include "varthresh/error.hpp"
#include "varthresh/random.hpp"

namespace varthresh {

inline constexpr double kExponentialShapeTol = 1e-12;

struct GpdParams {
  double sigma = 1.0;  // scale at the reference threshold u
  double xi = 0.0;
  double u = 0.0;

  // Scale of the exceedances of v >= u implied by threshold stability.
  [[nodiscard]] double scale_at(double v) const noexcept { return sigma + xi * (v - u); }

  // The same distribution re-anchored at v. Only meaningful when scale_at(v) > 0.
  [[nodiscard]] GpdParams rescaled(double v) const noexcept { return {scale_at(v), xi, v}; }

  [[nodiscard]] double upper_endpoint() const noexcept {
    return xi < 0.0 ? u - sigma / xi : std::numeric_limits<double>::infinity();
  }

  [[nodiscard]] bool valid() const noexcept {
    return std::isfinite(sigma) && std::isfinite(xi) && std::isfinite(u) && sigma > 0.0;
  }

  friend bool operator==(const GpdParams&, const GpdParams&) = default;
};

inline void validate(const GpdParams& p) {
  if (!p.valid()) {
    std::ostringstream os;
    os << "invalid GPD parameters (sigma=" << p.sigma << ", xi=" << p.xi << ", u=" << p.u
       << "): sigma must be positive and all values finite";
    throw DataError(os.str());
  }
}

namespace detail {

// log Pr(Z > z) for Z ~ GPD(sigma, xi) excesses; 0 for z <= 0, -inf beyond the endpoint.
[[nodiscard]] inline double log_excess_survival(double z, double sigma, double xi) noexcept {
  if (!(z > 0.0)) return 0.0;
  if (std::isinf(z)) return -std::numeric_limits<double>::infinity();
  if (std::abs(xi) < kExponentialShapeTol) return -z / sigma;
  const double a = xi * z / sigma;
  if (a <= -1.0) return -std::numeric_limits<double>::infinity();
  return -std::log1p(a) / xi;
}

[[nodiscard]] inline double excess_survival(double z, double sigma, double xi) noexcept {
  return std::exp(log_excess_survival(z, sigma, xi));
}

[[nodiscard]] inline double excess_cdf(double z, double sigma, double xi) noexcept {
  return -std::expm1(log_excess_survival(z, sigma, xi));
}

// Inverse of the log-survival: the excess z with log Pr(Z > z) = log_s (log_s <= 0).
[[nodiscard]] inline double excess_from_log_survival(double log_s, double sigma, double xi) noexcept {
  if (std::abs(xi) < kExponentialShapeTol) return -sigma * log_s;
  return sigma / xi * std::expm1(-xi * log_s);
}

[[nodiscard]] inline double log_excess_density(double z, double sigma, double xi) noexcept {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  if (z < 0.0) return ninf;
  if (std::abs(xi) < kExponentialShapeTol) return -std::log(sigma) - z / sigma;
  const double a = xi * z / sigma;
  if (a <= -1.0) return ninf;
  return -std::log(sigma) - (1.0 / xi + 1.0) * std::log1p(a);
}

}  // namespace detail

[[nodiscard]] inline double gpd_log_survival(double y, const GpdParams& p) {
  validate(p);
  return detail::log_excess_survival(y - p.u, p.sigma, p.xi);
}

[[nodiscard]] inline double gpd_survival(double y, const GpdParams& p) {
  return std::exp(gpd_log_survival(y, p));
}

[[nodiscard]] inline double gpd_cdf(double y, const GpdParams& p) {
  return -std::expm1(gpd_log_survival(y, p));
}

[[nodiscard]] inline double gpd_log_density(double y, const GpdParams& p) {
  validate(p);
  return detail::log_excess_density(y - p.u, p.sigma, p.xi);
}

[[nodiscard]] inline double gpd_density(double y, const GpdParams& p) {
  return std::exp(gpd_log_density(y, p));
}

[[nodiscard]] inline double gpd_quantile(double prob, const GpdParams& p) {
  validate(p);
  if (!(prob >= 0.0 && prob < 1.0)) {
    std::ostringstream os;
    os << "GPD quantile requires 0 <= p < 1, got " << prob;
    throw DomainError(os.str());
  }
  return p.u + detail::excess_from_log_survival(std::log1p(-prob), p.sigma, p.xi);
}

// Inverse-transform draw; consumes exactly one uniform from rng.
[[nodiscard]] inline double gpd_sample(const GpdParams& p, Rng& rng) {
  validate(p);
  return p.u + detail::excess_from_log_survival(std::log(uniform01(rng)), p.sigma, p.xi);
}

// Probability integral transform of an exceedance of params_at_v.u onto Exp(1) margins.
[[nodiscard]] inline double to_exp_margin(double y, const GpdParams& params_at_v) {
  validate(params_at_v);
  if (y < params_at_v.u) {
    std::ostringstream os;
    os << "value " << y << " lies below its threshold " << params_at_v.u;
    throw DomainError(os.str());
  }
  return -detail::log_excess_survival(y - params_at_v.u, params_at_v.sigma, params_at_v.xi);
}

// Conditional query "exceeded on average once in every m events above c".
struct CondQuantileQuery {
  double c = 0.0;
  double m = 2.0;

  [[nodiscard]] static CondQuantileQuery from_probability(double c, double p) {
    if (!(p >= 0.0 && p < 1.0)) throw DomainError("conditional quantile probability must lie in [0, 1)");
    return {c, 1.0 / (1.0 - p)};
  }
  [[nodiscard]] double probability() const noexcept { return 1.0 - 1.0 / m; }
};

struct ReturnLevel {
  double value = 0.0;
  bool at_endpoint = false;  // truncated to the finite upper end point (xi < 0)
};

// Solves Pr(Y > y | Y > c) = 1/m exactly:
//   y = u + sigma/xi [(m / zeta_c)^xi - 1],   y = c + sigma log m  (xi = 0),
// with zeta_c = Pr(Y > c | Y > u).
[[nodiscard]] inline ReturnLevel conditional_return_level(const CondQuantileQuery& q,
                                                          const GpdParams& p) {
  validate(p);
  if (q.c < p.u) throw DomainError("conditional return level requires c >= u");
  if (!(q.m >= 1.0)) throw DomainError("return period must satisfy m >= 1");
  const double log_zeta = detail::log_excess_survival(q.c - p.u, p.sigma, p.xi);
  const double endpoint = p.upper_endpoint();
  if (std::isinf(log_zeta) || std::isinf(q.m)) return {endpoint, std::isfinite(endpoint)};
  const double y = p.u + detail::excess_from_log_survival(log_zeta - std::log(q.m), p.sigma, p.xi);
  if (y >= endpoint) return {endpoint, true};
  return {y, false};
}

}  // namespace varthresh

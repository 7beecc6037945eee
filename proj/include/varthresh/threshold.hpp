// SPDX-License-Identifier: Apache-2.0
//
// Parametric modelling thresholds v(tau) on the index-time scale.

#pragma once
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "varthresh/error.hpp"

namespace varthresh {

struct ConstantThreshold {
  double level = 0.0;
  friend bool operator==(const ConstantThreshold&, const ConstantThreshold&) = default;
};

// level_before for tau <= change_point, level_after afterwards.
struct StepThreshold {
  double level_before = 0.0;
  double level_after = 0.0;
  double change_point = 0.0;
  friend bool operator==(const StepThreshold&, const StepThreshold&) = default;
};

// v(tau) = right + (left - right) * Phi((centre - tau) / width)
struct SigmoidThreshold {
  double level_left = 0.0;
  double level_right = 0.0;
  double centre = 0.0;
  double width = 1.0;
  friend bool operator==(const SigmoidThreshold&, const SigmoidThreshold&) = default;
};

enum class ThresholdFamily { constant, step, sigmoid };

[[nodiscard]] inline std::string_view family_name(ThresholdFamily f) noexcept {
  switch (f) {
    case ThresholdFamily::constant: return "constant";
    case ThresholdFamily::step: return "step";
    case ThresholdFamily::sigmoid: return "sigmoid";
  }
  return "?";
}

[[nodiscard]] inline ThresholdFamily parse_family(std::string_view name) {
  if (name == "constant") return ThresholdFamily::constant;
  if (name == "step") return ThresholdFamily::step;
  if (name == "sigmoid") return ThresholdFamily::sigmoid;
  throw UsageError("unknown threshold family '" + std::string(name) +
                   "' (expected constant, step or sigmoid)");
}

[[nodiscard]] inline std::size_t family_dimension(ThresholdFamily f) noexcept {
  switch (f) {
    case ThresholdFamily::constant: return 1;
    case ThresholdFamily::step: return 3;
    case ThresholdFamily::sigmoid: return 4;
  }
  return 0;
}

[[nodiscard]] inline double standard_normal_cdf(double x) noexcept {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

class ThresholdFn {
 public:
  using Variant = std::variant<ConstantThreshold, StepThreshold, SigmoidThreshold>;

  ThresholdFn() : fn_(ConstantThreshold{}) {}
  ThresholdFn(ConstantThreshold c) : fn_(c) {}
  ThresholdFn(StepThreshold s) : fn_(s) {}
  ThresholdFn(SigmoidThreshold s) : fn_(s) {
    if (!(s.width > 0.0)) throw DataError("sigmoid threshold requires a positive width");
  }

  [[nodiscard]] static ThresholdFn constant(double v) { return ConstantThreshold{v}; }
  [[nodiscard]] static ThresholdFn step(double before, double after, double change_point) {
    return StepThreshold{before, after, change_point};
  }
  [[nodiscard]] static ThresholdFn sigmoid(double left, double right, double centre, double width) {
    return SigmoidThreshold{left, right, centre, width};
  }

  [[nodiscard]] const Variant& variant() const noexcept { return fn_; }

  [[nodiscard]] ThresholdFamily family() const noexcept {
    return static_cast<ThresholdFamily>(fn_.index());
  }

  [[nodiscard]] double operator()(double tau) const noexcept {
    return std::visit(
        [tau](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ConstantThreshold>) {
            return f.level;
          } else if constexpr (std::is_same_v<T, StepThreshold>) {
            return tau <= f.change_point ? f.level_before : f.level_after;
          } else {
            return f.level_right +
                   (f.level_left - f.level_right) * standard_normal_cdf((f.centre - tau) / f.width);
          }
        },
        fn_);
  }

  // Infimum of v over (0, tau_max]. Every family is monotone, so the ends suffice.
  [[nodiscard]] double min_level(double tau_max) const noexcept {
    if (const auto* s = std::get_if<StepThreshold>(&fn_)) {
      return s->change_point < tau_max ? std::min(s->level_before, s->level_after) : s->level_before;
    }
    return std::min((*this)(0.0), (*this)(tau_max));
  }

  [[nodiscard]] double max_level(double tau_max) const noexcept {
    if (const auto* s = std::get_if<StepThreshold>(&fn_)) {
      return s->change_point < tau_max ? std::max(s->level_before, s->level_after) : s->level_before;
    }
    return std::max((*this)(0.0), (*this)(tau_max));
  }

  // Average level over (0, tau_max]; orders thresholds by conservativeness.
  [[nodiscard]] double mean_level(double tau_max) const {
    if (tau_max <= 0.0) return (*this)(0.0);
    return std::visit(
        [&](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ConstantThreshold>) {
            return f.level;
          } else if constexpr (std::is_same_v<T, StepThreshold>) {
            const double cp = std::clamp(f.change_point, 0.0, tau_max);
            return (f.level_before * cp + f.level_after * (tau_max - cp)) / tau_max;
          } else {
            constexpr int kCells = 1024;
            double acc = 0.0;
            for (int i = 0; i < kCells; ++i) acc += (*this)((i + 0.5) * tau_max / kCells);
            return acc / kCells;
          }
        },
        fn_);
  }

  [[nodiscard]] std::vector<double> parameters() const {
    return std::visit(
        [](const auto& f) -> std::vector<double> {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, ConstantThreshold>) {
            return {f.level};
          } else if constexpr (std::is_same_v<T, StepThreshold>) {
            return {f.level_before, f.level_after, f.change_point};
          } else {
            return {f.level_left, f.level_right, f.centre, f.width};
          }
        },
        fn_);
  }

  [[nodiscard]] static ThresholdFn from_parameters(ThresholdFamily family,
                                                   const std::vector<double>& x) {
    if (x.size() != family_dimension(family)) {
      throw UsageError("threshold family '" + std::string(family_name(family)) + "' takes " +
                       std::to_string(family_dimension(family)) + " parameters, got " +
                       std::to_string(x.size()));
    }
    switch (family) {
      case ThresholdFamily::constant: return constant(x[0]);
      case ThresholdFamily::step: return step(x[0], x[1], x[2]);
      case ThresholdFamily::sigmoid: return sigmoid(x[0], x[1], x[2], x[3]);
    }
    throw UsageError("unknown threshold family");
  }

  // Checks the structural invariants for a catalogue of length tau_max.
  void validate(double tau_max) const {
    for (double p : parameters()) {
      if (!std::isfinite(p)) throw DataError("threshold parameters must be finite");
    }
    if (const auto* s = std::get_if<StepThreshold>(&fn_)) {
      if (!(s->change_point > 0.0 && s->change_point < tau_max)) {
        std::ostringstream os;
        os << "step threshold change point " << s->change_point << " must lie in (0, " << tau_max
           << ")";
        throw DataError(os.str());
      }
    }
  }

  friend bool operator==(const ThresholdFn&, const ThresholdFn&) = default;

 private:
  Variant fn_;
};

// One cell of a piecewise-constant threshold on (begin, end].
struct ThresholdCell {
  double begin = 0.0;
  double end = 0.0;
  double level = 0.0;
};

// Piecewise-constant representation on (0, tau_max]. Exact for constant and step
// thresholds; smooth thresholds are sampled at cell midpoints on `smooth_cells` cells.
[[nodiscard]] inline std::vector<ThresholdCell> threshold_cells(const ThresholdFn& fn,
                                                                double tau_max,
                                                                int smooth_cells = 512) {
  std::vector<ThresholdCell> cells;
  if (tau_max <= 0.0) return cells;
  if (const auto* c = std::get_if<ConstantThreshold>(&fn.variant())) {
    cells.push_back({0.0, tau_max, c->level});
  } else if (const auto* s = std::get_if<StepThreshold>(&fn.variant())) {
    if (s->change_point <= 0.0) {
      cells.push_back({0.0, tau_max, s->level_after});
    } else if (s->change_point >= tau_max) {
      cells.push_back({0.0, tau_max, s->level_before});
    } else {
      cells.push_back({0.0, s->change_point, s->level_before});
      cells.push_back({s->change_point, tau_max, s->level_after});
    }
  } else {
    cells.reserve(static_cast<std::size_t>(smooth_cells));
    const double h = tau_max / smooth_cells;
    for (int i = 0; i < smooth_cells; ++i) {
      const double b = i * h;
      const double e = (i + 1 == smooth_cells) ? tau_max : (i + 1) * h;
      cells.push_back({b, e, fn(0.5 * (b + e))});
    }
  }
  return cells;
}

[[nodiscard]] inline std::string to_string(const ThresholdFn& fn) {
  std::string out(family_name(fn.family()));
  out += ':';
  const auto p = fn.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, p[i]);
    if (i) out += ',';
    out.append(buf, res.ptr);
  }
  return out;
}

// Parses "constant:1.45", "step:1.65,1.05,500" or "sigmoid:1.15,0.76,600,50".
[[nodiscard]] inline ThresholdFn parse_threshold(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw UsageError("threshold must look like family:p1,p2,... (got '" + std::string(text) + "')");
  }
  const auto family = parse_family(text.substr(0, colon));
  std::vector<double> values;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    std::string token(rest.substr(0, comma));
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw UsageError("bad threshold parameter '" + token + "'");
    }
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return ThresholdFn::from_parameters(family, values);
}

}  // namespace varthresh

// SPDX-License-Identifier: Apache-2.0
//
// Event catalogues of rounded magnitudes on natural and index time.

#pragma once
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "varthresh/error.hpp"

namespace varthresh {

struct Event {
  double t = 0.0;     // natural time (seconds since epoch for timestamps, else as given)
  std::string stamp;  // original ISO-8601 text when the time column held a timestamp
  double tau = 0.0;   // index time
  double x = 0.0;     // recorded (rounded) magnitude

  friend bool operator==(const Event&, const Event&) = default;
};

struct Catalogue {
  std::vector<Event> events;
  double delta = 0.05;  // rounding half-width; magnitudes are multiples of 2*delta
  double tau_max = 0.0;
  std::string source;

  [[nodiscard]] std::size_t size() const noexcept { return events.size(); }
  [[nodiscard]] bool empty() const noexcept { return events.empty(); }

  friend bool operator==(const Catalogue&, const Catalogue&) = default;
};

// Nearest multiple of 2*delta; exact half-way points go away from zero. Values within
// 1e-9 grid units of a half-way point count as half-way so that decimal inputs such as
// 1.65 behave as written.
[[nodiscard]] inline double round_magnitude(double y, double delta) {
  if (!(delta > 0.0)) throw DataError("rounding half-width delta must be positive");
  const double width = 2.0 * delta;
  const double k = y / width;
  const double fl = std::floor(k);
  double r;
  if (std::abs(k - (fl + 0.5)) < 1e-9) {
    r = k >= 0.0 ? fl + 1.0 : fl;
  } else {
    r = std::round(k);
  }
  // Divide by an integral reciprocal when there is one (0.1 -> 10) so 17 -> 1.7 exactly.
  const double inv = 1.0 / width;
  const double inv_r = std::round(inv);
  if (inv_r >= 1.0 && std::abs(inv - inv_r) < 1e-9 * inv_r) return r / inv_r + 0.0;
  return r * width + 0.0;
}

// Assigns tau_i = i (1-based) in event order and sets tau_max = n. Natural times must be
// non-decreasing; equal times keep their input order and produce a warning.
[[nodiscard]] inline Catalogue to_index_time(Catalogue cat,
                                             std::vector<std::string>* warnings = nullptr) {
  std::size_t ties = 0;
  for (std::size_t i = 1; i < cat.events.size(); ++i) {
    const double prev = cat.events[i - 1].t;
    const double cur = cat.events[i].t;
    if (cur < prev) {
      std::ostringstream os;
      os << "catalogue events are not in time order: event " << (i + 1) << " (t=" << cur
         << ") precedes event " << i << " (t=" << prev << ")";
      throw DataError(os.str());
    }
    if (cur == prev) ++ties;
  }
  if (ties > 0) {
    std::ostringstream os;
    os << ties << " event(s) share a timestamp with their predecessor; input order kept";
    if (warnings) {
      warnings->push_back(os.str());
    } else {
      std::clog << "warning: " << os.str() << '\n';
    }
  }
  for (std::size_t i = 0; i < cat.events.size(); ++i) cat.events[i].tau = static_cast<double>(i + 1);
  cat.tau_max = static_cast<double>(cat.events.size());
  return cat;
}

// Snaps every magnitude onto the 2*delta grid.
[[nodiscard]] inline Catalogue quantize(Catalogue cat) {
  for (auto& e : cat.events) e.x = round_magnitude(e.x, cat.delta);
  return cat;
}

[[nodiscard]] inline Catalogue filter_min_magnitude(Catalogue cat, double min_x) {
  std::erase_if(cat.events, [min_x](const Event& e) { return e.x < min_x - 1e-9; });
  return cat;
}

namespace detail {

[[nodiscard]] constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace detail

// Parses YYYY-MM-DD[(T| )HH:MM[:SS[.fff]]][Z] into seconds since 1970-01-01 UTC.
// Returns false when the text is not of that form.
[[nodiscard]] inline bool parse_iso8601(std::string_view s, double& seconds) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0.0;
  std::string text(s);
  if (!text.empty() && (text.back() == 'Z' || text.back() == 'z')) text.pop_back();
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3 || consumed != 10) {
    return false;
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31) return false;
  if (text.size() > 10) {
    const char sep = text[10];
    if (sep != 'T' && sep != ' ') return false;
    int used = 0;
    const std::string clock = text.substr(11);
    if (std::sscanf(clock.c_str(), "%2d:%2d%n", &h, &mi, &used) != 2) return false;
    if (static_cast<std::size_t>(used) < clock.size()) {
      if (clock[static_cast<std::size_t>(used)] != ':') return false;
      const std::string rest = clock.substr(static_cast<std::size_t>(used) + 1);
      char* end = nullptr;
      sec = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str() || *end != '\0') return false;
    }
    if (h > 23 || mi > 59 || sec < 0.0 || sec >= 61.0) return false;
  }
  seconds = static_cast<double>(detail::days_from_civil(y, static_cast<unsigned>(mo),
                                                        static_cast<unsigned>(d))) *
                86400.0 +
            h * 3600.0 + mi * 60.0 + sec;
  return true;
}

}  // namespace varthresh

// SPDX-License-Identifier: Apache-2.0
//
// Catalogue files: a `time,magnitude` CSV with a JSON metadata block, and the KNMI
// induced-events JSON feed.

#pragma once
#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include "json.hpp"
#include "varthresh/catalogue.hpp"

namespace varthresh {

enum class CatalogueFormat { csv, knmi_json };

[[nodiscard]] inline CatalogueFormat parse_catalogue_format(std::string_view s) {
  if (s == "csv") return CatalogueFormat::csv;
  if (s == "knmi" || s == "knmi-json" || s == "json") return CatalogueFormat::knmi_json;
  throw UsageError("unknown catalogue format '" + std::string(s) + "' (expected csv or knmi-json)");
}

// Shortest decimal text that parses back to the same double.
[[nodiscard]] inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

[[nodiscard]] inline std::string metadata_path(const std::filesystem::path& csv_path) {
  return csv_path.string() + ".meta.json";
}

namespace detail {

[[nodiscard]] inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[nodiscard]] inline bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline void apply_metadata(const nlohmann::json& meta, Catalogue& cat, const std::string& where) {
  if (!meta.is_object()) throw DataError(where + ": catalogue metadata must be a JSON object");
  if (!meta.contains("delta")) {
    throw DataError(where + ": catalogue metadata is missing required field 'delta'");
  }
  if (!meta["delta"].is_number() || !(meta["delta"].get<double>() > 0.0)) {
    throw DataError(where + ": metadata field 'delta' must be a positive number");
  }
  cat.delta = meta["delta"].get<double>();
  if (meta.contains("source") && meta["source"].is_string()) cat.source = meta["source"].get<std::string>();
}

[[nodiscard]] inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

[[nodiscard]] inline nlohmann::json catalogue_metadata(const Catalogue& cat) {
  return {{"delta", cat.delta}, {"source", cat.source}, {"tau_max", cat.tau_max}};
}

// Parses CSV text. A leading "# {...}" line may carry the metadata; otherwise
// `fallback_meta` (the sidecar contents) must. The result is indexed.
[[nodiscard]] inline Catalogue parse_catalogue_csv(const std::string& text,
                                                   const nlohmann::json* fallback_meta = nullptr,
                                                   const std::string& name = "catalogue") {
  Catalogue cat;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_meta = false;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    if (trimmed[0] == '#') {
      const std::string body = detail::trim(std::string_view(trimmed).substr(1));
      if (!have_header && !body.empty() && body[0] == '{') {
        nlohmann::json meta;
        try {
          meta = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
          throw DataError(where + ": malformed metadata block: " + e.what());
        }
        detail::apply_metadata(meta, cat, where);
        have_meta = true;
      }
      continue;
    }
    if (!have_header) {
      std::string h = trimmed;
      h.erase(std::remove_if(h.begin(), h.end(), [](char c) { return c == ' ' || c == '"'; }), h.end());
      if (h != "time,magnitude") {
        throw DataError(where + ": expected header 'time,magnitude', found '" + trimmed + "'");
      }
      have_header = true;
      continue;
    }
    const auto comma = trimmed.find(',');
    if (comma == std::string::npos || trimmed.find(',', comma + 1) != std::string::npos) {
      throw DataError(where + ": expected 2 comma-separated fields");
    }
    Event e;
    const std::string t = detail::trim(std::string_view(trimmed).substr(0, comma));
    const std::string m = detail::trim(std::string_view(trimmed).substr(comma + 1));
    if (!detail::parse_real(t, e.t)) {
      if (!parse_iso8601(t, e.t)) throw DataError(where + ": unparseable time '" + t + "'");
      e.stamp = t;
    }
    if (!detail::parse_real(m, e.x)) throw DataError(where + ": unparseable magnitude '" + m + "'");
    cat.events.push_back(std::move(e));
  }
  if (!have_header) throw DataError(name + ": missing header row 'time,magnitude'");
  if (!have_meta) {
    if (!fallback_meta) {
      throw DataError(name + ": catalogue metadata is missing required field 'delta' (no metadata block or sidecar)");
    }
    detail::apply_metadata(*fallback_meta, cat, name + " metadata");
  }
  return to_index_time(std::move(cat));
}

// Writes `path` (CSV) and `path.meta.json`.
inline void save_catalogue_csv(const Catalogue& cat, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << "time,magnitude\n";
    for (const auto& e : cat.events) {
      out << (e.stamp.empty() ? format_double(e.t) : e.stamp) << ',' << format_double(e.x) << '\n';
    }
    if (!out) throw DataError("failed writing '" + path.string() + "'");
  }
  std::ofstream meta(metadata_path(path), std::ios::binary | std::ios::trunc);
  if (!meta) throw DataError("cannot write '" + metadata_path(path) + "'");
  meta << catalogue_metadata(cat).dump(2) << '\n';
}

// Field names of the KNMI induced-events feed. Alternatives are tried in order.
struct KnmiFeedFormat {
  std::vector<std::string> date_fields{"date", "datetime", "origintime"};
  std::vector<std::string> time_fields{"time"};
  std::vector<std::string> magnitude_fields{"mag", "magnitude", "MAGNITUDE"};
  double delta = 0.05;  // magnitudes are reported to one decimal place
};

struct DateRange {
  std::string from;  // YYYY-MM-DD, inclusive; empty = unbounded
  std::string to;    // YYYY-MM-DD, inclusive; empty = unbounded

  [[nodiscard]] bool contains(const std::string& date) const {
    const std::string day = date.substr(0, 10);
    return (from.empty() || day >= from) && (to.empty() || day <= to);
  }
  [[nodiscard]] bool is_empty() const { return !from.empty() && !to.empty() && to < from; }
};

// Parses a KNMI feed body: a JSON array of events, or an object wrapping one under
// "events", "data" or "features".
[[nodiscard]] inline Catalogue parse_knmi_json(const std::string& body, const DateRange& range = {},
                                               const KnmiFeedFormat& fmt = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("KNMI feed is not valid JSON: ") + e.what());
  }
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    list = nullptr;
    for (const char* key : {"events", "data", "features"}) {
      if (doc.contains(key) && doc[key].is_array()) {
        list = &doc[key];
        break;
      }
    }
  }
  if (!list || !list->is_array()) throw DataError("KNMI feed: expected a JSON array of events");

  auto field = [](const nlohmann::json& obj, const std::vector<std::string>& names) -> const nlohmann::json* {
    const nlohmann::json* o = &obj;
    if (obj.contains("properties") && obj["properties"].is_object()) o = &obj["properties"];
    for (const auto& n : names) {
      if (o->contains(n) && !(*o)[n].is_null()) return &(*o)[n];
    }
    return nullptr;
  };

  Catalogue cat;
  cat.delta = fmt.delta;
  cat.source = "KNMI induced events feed";
  std::size_t idx = 0;
  for (const auto& item : *list) {
    ++idx;
    const std::string where = "KNMI feed event " + std::to_string(idx);
    const auto* date = field(item, fmt.date_fields);
    const auto* mag = field(item, fmt.magnitude_fields);
    if (!date || !date->is_string()) throw DataError(where + ": missing date field");
    if (!mag) throw DataError(where + ": missing magnitude field");
    std::string stamp = date->get<std::string>();
    if (const auto* time = field(item, fmt.time_fields); time && time->is_string() && stamp.size() == 10) {
      stamp += "T" + time->get<std::string>();
    }
    if (!range.contains(stamp)) continue;
    Event e;
    if (!parse_iso8601(stamp, e.t)) throw DataError(where + ": unparseable date '" + stamp + "'");
    e.stamp = stamp;
    if (mag->is_number()) {
      e.x = mag->get<double>();
    } else if (!mag->is_string() || !detail::parse_real(detail::trim(mag->get<std::string>()), e.x)) {
      throw DataError(where + ": unparseable magnitude");
    }
    cat.events.push_back(std::move(e));
  }
  std::stable_sort(cat.events.begin(), cat.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  std::vector<std::string> ignored;
  return quantize(to_index_time(std::move(cat), &ignored));
}

[[nodiscard]] inline Catalogue load_catalogue(const std::filesystem::path& path,
                                              CatalogueFormat format = CatalogueFormat::csv) {
  const std::string text = detail::read_file(path);
  if (format == CatalogueFormat::knmi_json) return parse_knmi_json(text);
  const auto sidecar = metadata_path(path);
  if (std::filesystem::exists(sidecar)) {
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(detail::read_file(sidecar));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(sidecar + ": malformed metadata: " + e.what());
    }
    return parse_catalogue_csv(text, &meta, path.string());
  }
  return parse_catalogue_csv(text, nullptr, path.string());
}

inline void save_catalogue(const Catalogue& cat, const std::filesystem::path& path,
                           CatalogueFormat format = CatalogueFormat::csv) {
  if (format != CatalogueFormat::csv) throw UsageError("catalogues can only be written as CSV");
  save_catalogue_csv(cat, path);
}

}  // namespace varthresh

// SPDX-License-Identifier: Apache-2.0
//
// HTTP client for the KNMI induced-earthquake feed. The endpoint is configuration.

#pragma once
#include <string>

#include "httplib.h"
#include "varthresh/catalogue_io.hpp"

namespace varthresh {

struct FetchOptions {
  int connect_timeout_s = 10;
  int read_timeout_s = 60;
  KnmiFeedFormat format{};
};

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string target;  // /path?query
};

[[nodiscard]] inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw UsageError("endpoint URL must include a scheme: '" + url + "'");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw UsageError("unsupported URL scheme '" + scheme + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw UsageError("https endpoints need a build with OpenSSL");
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

// One blocking GET. Connection failures, timeouts, 429 and 5xx are retriable; other HTTP
// statuses and unparseable bodies are permanent. Nothing is returned on failure.
[[nodiscard]] inline Catalogue fetch_knmi(const std::string& endpoint_url, const DateRange& range,
                                          const FetchOptions& opts = {}) {
  const auto url = detail::split_url(endpoint_url);
  if (range.is_empty()) {
    Catalogue empty;
    empty.delta = opts.format.delta;
    empty.source = endpoint_url;
    return empty;
  }
  httplib::Client client(url.origin);
  client.set_connection_timeout(opts.connect_timeout_s, 0);
  client.set_read_timeout(opts.read_timeout_s, 0);
  client.set_follow_location(true);
  auto res = client.Get(url.target);
  if (!res) {
    throw NetworkError("request to " + endpoint_url + " failed: " + httplib::to_string(res.error()),
                       /*retriable=*/true);
  }
  if (res->status != 200) {
    const bool retriable = res->status == 429 || res->status >= 500;
    throw NetworkError("request to " + endpoint_url + " returned HTTP " + std::to_string(res->status),
                       retriable);
  }
  Catalogue cat;
  try {
    cat = parse_knmi_json(res->body, range, opts.format);
  } catch (const DataError& e) {
    throw NetworkError(std::string("unusable response from ") + endpoint_url + ": " + e.what(),
                       /*retriable=*/false);
  }
  cat.source = endpoint_url;
  return cat;
}

}  // namespace varthresh

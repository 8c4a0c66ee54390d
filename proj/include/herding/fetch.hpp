#pragma once

#include <chrono>
#include <filesystem>
#include <string>

#include "herding/date.hpp"

namespace herding {

struct DateRange {
  Date start;
  Date end;
};

struct FetchConfig {
  std::filesystem::path cache_dir = "cache";
  std::chrono::seconds timeout{30};
  bool allow_network = true;
};

// Substitutes {asset}, {start} and {end} (ISO dates). Throws InputError if a
// placeholder is missing from the template.
std::string expand_endpoint(const std::string& endpoint_template, const std::string& asset,
                            const DateRange& range);

std::filesystem::path cache_path(const FetchConfig& config, const std::string& asset,
                                 const DateRange& range);

// Returns the raw response body for (asset, range). A cached body is served
// without network I/O; otherwise the body is fetched over HTTP(S) and written
// to the cache. Throws FetchError on non-2xx status, timeout, or cache-write
// failure.
std::string fetch_history(const std::string& endpoint_template, const std::string& asset,
                          const DateRange& range, const FetchConfig& config);

}  // namespace herding

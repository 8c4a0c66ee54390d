#include "herding/fetch.hpp"

#include <fstream>
#include <sstream>

#include "httplib.h"

#include "herding/error.hpp"

namespace herding {

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out;
}

}  // namespace

std::string expand_endpoint(const std::string& endpoint_template, const std::string& asset,
                            const DateRange& range) {
  for (const char* key : {"{asset}", "{start}", "{end}"})
    if (endpoint_template.find(key) == std::string::npos)
      throw InputError("endpoint template lacks placeholder " + std::string(key));
  std::string url = endpoint_template;
  replace_all(url, "{asset}", asset);
  replace_all(url, "{start}", range.start.iso());
  replace_all(url, "{end}", range.end.iso());
  return url;
}

std::filesystem::path cache_path(const FetchConfig& config, const std::string& asset,
                                 const DateRange& range) {
  return config.cache_dir /
         (sanitize(asset) + "_" + range.start.iso() + "_" + range.end.iso() + ".body");
}

std::string fetch_history(const std::string& endpoint_template, const std::string& asset,
                          const DateRange& range, const FetchConfig& config) {
  const auto url = expand_endpoint(endpoint_template, asset, range);
  const auto cached = cache_path(config, asset, range);
  if (std::filesystem::exists(cached)) {
    std::ifstream in(cached, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
  }
  if (!config.allow_network)
    throw FetchError("network access disabled and no cache entry for " + url, 0, url);

  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw FetchError("malformed URL " + url, 0, url);
  const auto path_start = url.find('/', scheme_end + 3);
  const auto origin = url.substr(0, path_start);
  const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);

  httplib::Client client(origin);
  const auto secs = static_cast<time_t>(config.timeout.count());
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_follow_location(true);
  auto res = client.Get(path);
  if (!res)
    throw FetchError("request to " + url + " failed: " + httplib::to_string(res.error()), 0, url);
  if (res->status < 200 || res->status >= 300)
    throw FetchError("HTTP " + std::to_string(res->status) + " from " + url, res->status, url);

  std::error_code ec;
  std::filesystem::create_directories(config.cache_dir, ec);
  auto staging = cached;
  staging += ".part";
  {
    std::ofstream out(staging, std::ios::binary);
    if (ec || !out || !(out << res->body) || !out.flush())
      throw FetchError("cannot write cache file " + cached.string(), res->status, url);
  }
  std::filesystem::rename(staging, cached, ec);
  if (ec) throw FetchError("cannot write cache file " + cached.string(), res->status, url);
  return res->body;
}

}  // namespace herding

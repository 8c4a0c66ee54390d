#include <atomic>
#include <chrono>
#include <fstream>
#include <thread>

#include "doctest.h"

#include "herding/error.hpp"
#include "herding/fetch.hpp"
#include "support.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen internals.
#include "httplib.h"

using namespace herding;
using testing::day;

namespace {

// Serves /hist/<asset> with a small per-asset CSV; /missing/* answers 404.
class LocalServer {
 public:
  LocalServer() {
    server_.Get(R"(/hist/([A-Za-z]+))", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_query = req.get_param_value("s") + ".." + req.get_param_value("e");
      res.set_content("date,close,market_cap\n2017-01-01,1,10\n2017-01-02,1.1,11\n", "text/csv");
    });
    server_.Get(R"(/missing/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 404;
      res.set_content("not found", "text/plain");
    });
    server_.Get(R"(/slow/.*)", [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(2500));
      res.set_content("late", "text/plain");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> hits{0};
  std::string last_query;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_SUITE("fetch") {

TEST_CASE("placeholders are substituted") {
  const DateRange r{day("2013-04-29"), day("2018-04-03")};
  CHECK(expand_endpoint("https://x/{asset}?s={start}&e={end}", "BTC", r) ==
        "https://x/BTC?s=2013-04-29&e=2018-04-03");
  CHECK_THROWS_AS(expand_endpoint("https://x/{asset}?s={start}", "BTC", r), InputError);
}

TEST_CASE("second identical call is served from the cache") {
  LocalServer server;
  FetchConfig cfg;
  cfg.cache_dir = testing::scratch_dir("fetch_cache");
  const DateRange r{day("2017-01-01"), day("2017-01-02")};
  const auto tmpl = server.base() + "/hist/{asset}?s={start}&e={end}";
  const auto first = fetch_history(tmpl, "BTC", r, cfg);
  CHECK(server.hits == 1);
  CHECK(server.last_query == "2017-01-01..2017-01-02");
  CHECK(std::filesystem::exists(cache_path(cfg, "BTC", r)));
  const auto second = fetch_history(tmpl, "BTC", r, cfg);
  CHECK(server.hits == 1);
  CHECK(second == first);
  // Offline mode still serves cached bodies.
  cfg.allow_network = false;
  CHECK(fetch_history(tmpl, "BTC", r, cfg) == first);
  CHECK_THROWS_AS(fetch_history(tmpl, "ETH", r, cfg), FetchError);
}

TEST_CASE("404 carries status and url") {
  LocalServer server;
  FetchConfig cfg;
  cfg.cache_dir = testing::scratch_dir("fetch_404");
  const DateRange r{day("2017-01-01"), day("2017-01-02")};
  const auto tmpl = server.base() + "/missing/{asset}?s={start}&e={end}";
  try {
    fetch_history(tmpl, "BTC", r, cfg);
    FAIL("expected FetchError");
  } catch (const FetchError& e) {
    CHECK(e.status() == 404);
    CHECK(e.url() == server.base() + "/missing/BTC?s=2017-01-01&e=2017-01-02");
    CHECK(std::string(e.what()).find("404") != std::string::npos);
  }
  CHECK(!std::filesystem::exists(cache_path(cfg, "BTC", r)));
}

TEST_CASE("timeout is reported") {
  LocalServer server;
  FetchConfig cfg;
  cfg.cache_dir = testing::scratch_dir("fetch_timeout");
  cfg.timeout = std::chrono::seconds(1);
  const DateRange r{day("2017-01-01"), day("2017-01-02")};
  try {
    fetch_history(server.base() + "/slow/{asset}/{start}/{end}", "BTC", r, cfg);
    FAIL("expected FetchError");
  } catch (const FetchError& e) {
    CHECK(e.status() == 0);
  }
}

TEST_CASE("cache write failure is an error") {
  LocalServer server;
  const auto dir = testing::scratch_dir("fetch_blocked");
  FetchConfig cfg;
  cfg.cache_dir = dir / "file_not_dir";
  std::ofstream(cfg.cache_dir) << "x";
  const DateRange r{day("2017-01-01"), day("2017-01-02")};
  CHECK_THROWS_AS(fetch_history(server.base() + "/hist/{asset}?s={start}&e={end}", "BTC", r, cfg),
                  FetchError);
}

}  // TEST_SUITE

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "herding/linreg.hpp"
#include "herding/panel.hpp"

namespace herding {

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitEstimation = 3 };

struct RunConfig {
  // ingest
  std::string input;
  PanelFormat format = PanelFormat::Long;
  std::size_t top_n = 0;  // 0 keeps every asset
  std::string fetch_template;
  std::vector<std::string> assets;
  std::string start;
  std::string end;
  std::filesystem::path cache_dir = "cache";
  int timeout_seconds = 30;
  bool offline = false;
  double winsorize = 0.0;  // 0 disables
  std::size_t min_assets = 2;

  // estimation
  Aggregator aggregator = Aggregator::Median;
  int lags = 3;
  double tail_fraction = 0.05;
  std::set<int> regimes = {1, 2, 3, 4};
  double alpha = 0.05;
  std::optional<int> bandwidth;  // nullopt = automatic
  std::uint64_t seed = 0;
  int restarts = 10;
  int max_iter = 1000;
  double tol = 1e-8;
  bool switching_intercept = false;
  std::string model = "static";
  DesignKind design = DesignKind::Symmetric;

  // simulate
  std::string fixture;

  std::filesystem::path output_dir = "herding-out";
  bool overwrite = false;
};

// Flat key/value text: `key = value` (or `key value`), '#' comments. Keys
// are the long flag names; '-' and '_' are interchangeable.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

// Applies settings over the defaults. Throws InputError on unknown keys or
// invalid values.
RunConfig make_config(const std::map<std::string, std::string>& settings);

void cmd_ingest(const RunConfig& config, std::ostream& log);
void cmd_dispersion(const RunConfig& config, std::ostream& log);
void cmd_fit(const RunConfig& config, std::ostream& log);
void cmd_select(const RunConfig& config, std::ostream& log);
void cmd_report(const RunConfig& config, std::ostream& log);
void cmd_simulate(const RunConfig& config, std::ostream& log);

// Full command line (argv[0] excluded); returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace herding

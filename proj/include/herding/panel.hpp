#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "herding/date.hpp"

namespace herding {

enum class PanelFormat { Long, Wide };
enum class Aggregator { Mean, Median };

PanelFormat parse_panel_format(std::string_view name);
Aggregator parse_aggregator(std::string_view name);
std::string_view to_string(Aggregator a);

// Dense date x asset grid of optional values, stored row-major by date.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), cells_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::optional<T>& operator()(std::size_t r, std::size_t c) { return cells_[r * cols_ + c]; }
  const std::optional<T>& operator()(std::size_t r, std::size_t c) const {
    return cells_[r * cols_ + c];
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::optional<T>> cells_;
};

// Closing prices (quote currency) and market capitalizations per date and
// asset. Dates are strictly increasing; every present close is finite and > 0.
struct PricePanel {
  std::vector<Date> dates;
  std::vector<std::string> assets;
  Grid<double> close;
  Grid<double> market_cap;

  std::size_t n_dates() const { return dates.size(); }
  std::size_t n_assets() const { return assets.size(); }

  // Throws InputError when an invariant does not hold.
  void validate(std::size_t min_assets = 2, std::size_t min_dates = 2) const;
};

struct AssetSpan {
  std::string asset;
  std::optional<Date> first;
  std::optional<Date> last;
  std::size_t observations = 0;
};

struct ValidationReport {
  std::size_t rows_read = 0;
  std::size_t missing_cells = 0;  // grid cells without a usable close
  std::size_t invalid_close = 0;  // rows whose close was empty, zero, negative or non-numeric
  std::size_t invalid_market_cap = 0;
  std::size_t dropped_rows = 0;
  std::vector<AssetSpan> spans;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const ValidationReport& report);

struct ParsedPanel {
  PricePanel panel;
  ValidationReport report;
};

struct ParseOptions {
  std::size_t min_assets = 2;
  std::size_t min_dates = 2;
};

// Long format: header with date, asset, close and optionally market_cap
// (any column order). Wide format: date followed by one close column per
// asset. Throws InputError with line context on malformed input.
ParsedPanel parse_panel(std::istream& in, PanelFormat format, const ParseOptions& opts = {});
ParsedPanel read_panel_file(const std::string& path, PanelFormat format,
                            const ParseOptions& opts = {});

// Long CSV `date,asset,close,market_cap`; only cells with a close are written.
void write_panel_csv(std::ostream& out, const PricePanel& panel);

// Keeps the n assets with the largest mean market capitalization (assets
// without any cap rank last, ties by name). n >= n_assets is a no-op.
PricePanel top_n_by_market_cap(const PricePanel& panel, std::size_t n);

// Returns on panel.dates[1..]: R = (P_t - P_{t-1}) / P_{t-1}; present iff
// both closes are present.
struct ReturnPanel {
  std::vector<Date> dates;
  std::vector<std::string> assets;
  Grid<double> returns;

  std::size_t n_dates() const { return dates.size(); }
  std::size_t n_assets() const { return assets.size(); }
  // Present returns on row t, in asset order.
  std::vector<double> cross_section(std::size_t t) const;
};

ReturnPanel compute_returns(const PricePanel& panel);

void write_returns_csv(std::ostream& out, const ReturnPanel& rp);
ReturnPanel read_returns_csv(std::istream& in);

// Symmetric per-asset winsorization at the given tail fraction in (0, 0.5).
ReturnPanel winsorize(const ReturnPanel& rp, double fraction);

// Equal-weighted market return per date. Dates whose cross-section holds
// fewer than min_assets returns are excluded.
struct MarketSeries {
  std::vector<Date> dates;
  std::vector<double> rm;
  std::vector<int> n_assets;
  Aggregator aggregator = Aggregator::Median;

  std::size_t size() const { return dates.size(); }
};

MarketSeries market_return(const ReturnPanel& rp, Aggregator aggregator,
                           std::size_t min_assets = 2);

double aggregate(std::vector<double> values, Aggregator aggregator);

struct AssetSummary {
  std::string asset;
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  std::optional<double> skewness;
  std::optional<double> excess_kurtosis;
  double min = 0.0;
  double max = 0.0;
};

struct PanelSummary {
  std::vector<AssetSummary> assets;
  // Averages of the per-asset statistics over the summarized assets.
  double grand_mean = 0.0;
  double grand_median = 0.0;
  double grand_sd = 0.0;
  std::optional<double> grand_skewness;
  std::vector<std::string> skipped;
  std::vector<std::string> warnings;
};

PanelSummary summarize_panel(const ReturnPanel& rp, std::size_t min_observations = 4);

nlohmann::json to_json(const PanelSummary& summary);

}  // namespace herding

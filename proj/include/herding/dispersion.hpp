#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "herding/date.hpp"
#include "herding/panel.hpp"

namespace herding {

struct DatedSeries {
  std::vector<Date> dates;
  std::vector<double> values;
};

// Cross-sectional dispersion aligned with the market series dates. Both
// measures are centered on the market return rm, so the aggregator that
// produced rm is also the centering rule.
struct DispersionSeries {
  std::vector<Date> dates;
  std::vector<double> rm;
  std::vector<double> csad;
  std::vector<std::optional<double>> cssd;
  std::vector<int> n_assets;
  Aggregator aggregator = Aggregator::Median;

  std::size_t size() const { return dates.size(); }
};

// sqrt( sum_i (R_it - rm_t)^2 / (N_t - 1) ) per market-series date.
DatedSeries cssd_series(const ReturnPanel& rp, const MarketSeries& ms);

// (1/N_t) sum_i |R_it - rm_t| per market-series date.
DatedSeries csad_series(const ReturnPanel& rp, const MarketSeries& ms);

DispersionSeries build_dispersion(const ReturnPanel& rp, const MarketSeries& ms);

// Extreme-day indicators for the Christie-Huang regression. d_lower flags
// rm at or below the ceil(q*T)-th smallest value, d_upper rm at or above the
// ceil(q*T)-th largest.
struct ExtremeDummies {
  std::vector<Date> dates;
  std::vector<int> d_lower;
  std::vector<int> d_upper;
  double tail_fraction = 0.05;
};

ExtremeDummies extreme_day_dummies(std::span<const Date> dates, std::span<const double> rm,
                                   double tail_fraction);
ExtremeDummies extreme_day_dummies(const MarketSeries& ms, double tail_fraction);

// `date,rm,rm_squared,csad,cssd,n_assets`; an absent cssd is an empty field.
void write_dispersion_csv(std::ostream& out, const DispersionSeries& ds);
DispersionSeries read_dispersion_csv(std::istream& in);

}  // namespace herding

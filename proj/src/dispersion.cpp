#include "herding/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "herding/csv.hpp"
#include "herding/error.hpp"

namespace herding {

namespace {

std::size_t row_of(const ReturnPanel& rp, Date d) {
  const auto it = std::lower_bound(rp.dates.begin(), rp.dates.end(), d);
  if (it == rp.dates.end() || *it != d)
    throw InputError("market series date " + d.iso() + " not present in return panel");
  return static_cast<std::size_t>(it - rp.dates.begin());
}

struct Deviations {
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  std::size_t n = 0;
};

Deviations deviations(const ReturnPanel& rp, std::size_t row, double center) {
  Deviations d;
  for (std::size_t c = 0; c < rp.n_assets(); ++c) {
    if (const auto& r = rp.returns(row, c)) {
      const double e = *r - center;
      d.abs_sum += std::abs(e);
      d.sq_sum += e * e;
      ++d.n;
    }
  }
  return d;
}

}  // namespace

DatedSeries cssd_series(const ReturnPanel& rp, const MarketSeries& ms) {
  DatedSeries out;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto d = deviations(rp, row_of(rp, ms.dates[i]), ms.rm[i]);
    if (d.n < 2) continue;
    out.dates.push_back(ms.dates[i]);
    out.values.push_back(std::sqrt(d.sq_sum / static_cast<double>(d.n - 1)));
  }
  return out;
}

DatedSeries csad_series(const ReturnPanel& rp, const MarketSeries& ms) {
  DatedSeries out;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto d = deviations(rp, row_of(rp, ms.dates[i]), ms.rm[i]);
    if (d.n < 2) continue;
    out.dates.push_back(ms.dates[i]);
    out.values.push_back(d.abs_sum / static_cast<double>(d.n));
  }
  return out;
}

DispersionSeries build_dispersion(const ReturnPanel& rp, const MarketSeries& ms) {
  DispersionSeries ds;
  ds.aggregator = ms.aggregator;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto d = deviations(rp, row_of(rp, ms.dates[i]), ms.rm[i]);
    if (d.n < 2) continue;
    ds.dates.push_back(ms.dates[i]);
    ds.rm.push_back(ms.rm[i]);
    ds.csad.push_back(d.abs_sum / static_cast<double>(d.n));
    ds.cssd.push_back(std::sqrt(d.sq_sum / static_cast<double>(d.n - 1)));
    ds.n_assets.push_back(static_cast<int>(d.n));
  }
  if (ds.dates.empty()) throw InputError("no date has a cross-section of at least 2 returns");
  return ds;
}

ExtremeDummies extreme_day_dummies(std::span<const Date> dates, std::span<const double> rm,
                                   double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 0.10))
    throw InputError("tail fraction must lie in (0, 0.10]");
  if (dates.size() != rm.size()) throw InputError("dates and market returns differ in length");
  const auto T = rm.size();
  if (static_cast<double>(T) * tail_fraction < 1.0)
    throw InputError("series of " + std::to_string(T) + " dates too short for tail fraction " +
                     csv::format_double(tail_fraction));
  std::vector<double> sorted(rm.begin(), rm.end());
  std::sort(sorted.begin(), sorted.end());
  const auto k = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(T) - 1e-9));
  const double lower = sorted[k - 1];
  const double upper = sorted[T - k];
  if (!(lower < upper))
    throw InputError("degenerate market-return distribution: lower and upper tail quantiles coincide");

  ExtremeDummies out;
  out.dates.assign(dates.begin(), dates.end());
  out.tail_fraction = tail_fraction;
  out.d_lower.reserve(T);
  out.d_upper.reserve(T);
  for (double r : rm) {
    out.d_lower.push_back(r <= lower ? 1 : 0);
    out.d_upper.push_back(r >= upper ? 1 : 0);
  }
  return out;
}

ExtremeDummies extreme_day_dummies(const MarketSeries& ms, double tail_fraction) {
  return extreme_day_dummies(ms.dates, ms.rm, tail_fraction);
}

void write_dispersion_csv(std::ostream& out, const DispersionSeries& ds) {
  out << "date,rm,rm_squared,csad,cssd,n_assets\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.dates[i].iso() << ',' << csv::format_double(ds.rm[i]) << ','
        << csv::format_double(ds.rm[i] * ds.rm[i]) << ',' << csv::format_double(ds.csad[i]) << ',';
    if (ds.cssd[i]) out << csv::format_double(*ds.cssd[i]);
    out << ',' << ds.n_assets[i] << '\n';
  }
}

DispersionSeries read_dispersion_csv(std::istream& in) {
  csv::Reader reader(in);
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw InputError("dispersion file is empty");
  std::ptrdiff_t i_date = -1, i_rm = -1, i_csad = -1, i_cssd = -1, i_n = -1;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto name = csv::lower(fields[i]);
    const auto idx = static_cast<std::ptrdiff_t>(i);
    if (name == "date") i_date = idx;
    else if (name == "rm") i_rm = idx;
    else if (name == "csad") i_csad = idx;
    else if (name == "cssd") i_cssd = idx;
    else if (name == "n_assets") i_n = idx;
  }
  if (i_date < 0 || i_rm < 0 || i_csad < 0)
    throw InputError("dispersion file: malformed header (need date,rm,csad)");

  auto where = [&] { return "dispersion file line " + std::to_string(reader.line()) + ": "; };
  auto field = [&](std::ptrdiff_t i) -> const std::string& {
    static const std::string empty;
    return i >= 0 && static_cast<std::size_t>(i) < fields.size() ? fields[i] : empty;
  };
  DispersionSeries ds;
  while (reader.next(fields)) {
    const auto date = Date::try_parse(field(i_date));
    if (!date) throw InputError(where() + "unparseable date '" + field(i_date) + "'");
    if (!ds.dates.empty() && !(ds.dates.back() < *date))
      throw InputError(where() + "dates not strictly increasing");
    const auto rm = csv::parse_double(field(i_rm));
    const auto csad = csv::parse_double(field(i_csad));
    if (!rm || !csad || !std::isfinite(*rm) || !std::isfinite(*csad))
      throw InputError(where() + "invalid rm or csad value");
    std::optional<double> cssd;
    if (!field(i_cssd).empty()) {
      cssd = csv::parse_double(field(i_cssd));
      if (!cssd || !std::isfinite(*cssd) || *cssd < 0.0)
        throw InputError(where() + "invalid cssd value '" + field(i_cssd) + "'");
    }
    int n = 0;
    if (!field(i_n).empty()) {
      const auto v = csv::parse_double(field(i_n));
      if (!v) throw InputError(where() + "invalid n_assets");
      n = static_cast<int>(*v);
    }
    ds.dates.push_back(*date);
    ds.rm.push_back(*rm);
    ds.csad.push_back(*csad);
    ds.cssd.push_back(cssd);
    ds.n_assets.push_back(n);
  }
  if (ds.dates.empty()) throw InputError("dispersion file has no rows");
  return ds;
}

}  // namespace herding

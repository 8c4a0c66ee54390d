#include "herding/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "herding/csv.hpp"
#include "herding/error.hpp"

namespace herding {

PanelFormat parse_panel_format(std::string_view name) {
  const auto n = csv::lower(name);
  if (n == "long") return PanelFormat::Long;
  if (n == "wide") return PanelFormat::Wide;
  throw InputError("unknown panel format '" + std::string(name) + "' (expected long|wide)");
}

Aggregator parse_aggregator(std::string_view name) {
  const auto n = csv::lower(name);
  if (n == "mean") return Aggregator::Mean;
  if (n == "median") return Aggregator::Median;
  throw InputError("unknown aggregator '" + std::string(name) + "' (expected mean|median)");
}

std::string_view to_string(Aggregator a) { return a == Aggregator::Mean ? "mean" : "median"; }

void PricePanel::validate(std::size_t min_assets, std::size_t min_dates) const {
  if (assets.size() < min_assets)
    throw InputError("panel has " + std::to_string(assets.size()) + " asset(s); at least " +
                     std::to_string(min_assets) + " required");
  if (dates.size() < min_dates)
    throw InputError("panel has " + std::to_string(dates.size()) + " date(s); at least " +
                     std::to_string(min_dates) + " required");
  for (std::size_t t = 1; t < dates.size(); ++t)
    if (!(dates[t - 1] < dates[t]))
      throw InputError("panel dates not strictly increasing at " + dates[t].iso());
  if (close.rows() != dates.size() || close.cols() != assets.size())
    throw InputError("close grid does not match panel dimensions");
  for (std::size_t t = 0; t < dates.size(); ++t)
    for (std::size_t c = 0; c < assets.size(); ++c)
      if (const auto& p = close(t, c); p && !(std::isfinite(*p) && *p > 0.0))
        throw InputError("non-positive close for " + assets[c] + " on " + dates[t].iso());
}

nlohmann::json to_json(const ValidationReport& report) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : report.spans) {
    spans.push_back({{"asset", s.asset},
                     {"first", s.first ? nlohmann::json(s.first->iso()) : nlohmann::json()},
                     {"last", s.last ? nlohmann::json(s.last->iso()) : nlohmann::json()},
                     {"observations", s.observations}});
  }
  return {{"rows_read", report.rows_read},
          {"missing_cells", report.missing_cells},
          {"invalid_close", report.invalid_close},
          {"invalid_market_cap", report.invalid_market_cap},
          {"dropped_rows", report.dropped_rows},
          {"assets", spans},
          {"warnings", report.warnings}};
}

namespace {

struct Cell {
  std::optional<double> close;
  std::optional<double> cap;
};

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::optional<double> positive_close(std::string_view field) {
  auto v = csv::parse_double(field);
  if (!v || !std::isfinite(*v) || *v <= 0.0) return std::nullopt;
  return v;
}

// Builds the dense panel from per-asset observations keyed by date.
ParsedPanel assemble(std::vector<std::string> assets,
                     const std::vector<std::map<int, Cell>>& obs, ValidationReport report,
                     const ParseOptions& opts) {
  std::vector<int> days;
  for (const auto& m : obs)
    for (const auto& [d, cell] : m) days.push_back(d);
  std::sort(days.begin(), days.end());
  days.erase(std::unique(days.begin(), days.end()), days.end());

  ParsedPanel out;
  auto& p = out.panel;
  p.assets = std::move(assets);
  p.dates.reserve(days.size());
  for (int d : days) p.dates.push_back(Date::from_days(d));
  p.close = Grid<double>(days.size(), p.assets.size());
  p.market_cap = Grid<double>(days.size(), p.assets.size());

  std::unordered_map<int, std::size_t> row_of;
  for (std::size_t i = 0; i < days.size(); ++i) row_of[days[i]] = i;

  for (std::size_t c = 0; c < p.assets.size(); ++c) {
    AssetSpan span{p.assets[c], std::nullopt, std::nullopt, 0};
    for (const auto& [d, cell] : obs[c]) {
      const auto r = row_of.at(d);
      p.close(r, c) = cell.close;
      p.market_cap(r, c) = cell.cap;
      if (cell.close) {
        if (!span.first) span.first = Date::from_days(d);
        span.last = Date::from_days(d);
        ++span.observations;
      }
    }
    if (span.observations == 0) report.warnings.push_back("asset " + p.assets[c] + " has no valid close");
    report.spans.push_back(std::move(span));
  }
  std::size_t present = 0;
  for (std::size_t r = 0; r < days.size(); ++r)
    for (std::size_t c = 0; c < p.assets.size(); ++c)
      if (p.close(r, c)) ++present;
  report.missing_cells = days.size() * p.assets.size() - present;

  p.validate(opts.min_assets, opts.min_dates);
  out.report = std::move(report);
  return out;
}

ParsedPanel parse_long(csv::Reader& reader, const ParseOptions& opts) {
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw InputError("empty input: missing header");
  std::ptrdiff_t i_date = -1, i_asset = -1, i_close = -1, i_cap = -1;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto name = csv::lower(fields[i]);
    auto set = [&](std::ptrdiff_t& slot) {
      if (slot >= 0) throw InputError(at_line(reader.line()) + "malformed header: duplicate column '" + name + "'");
      slot = static_cast<std::ptrdiff_t>(i);
    };
    if (name == "date") set(i_date);
    else if (name == "asset") set(i_asset);
    else if (name == "close") set(i_close);
    else if (name == "market_cap") set(i_cap);
  }
  if (i_date < 0 || i_asset < 0 || i_close < 0)
    throw InputError(at_line(reader.line()) +
                     "malformed header: expected columns date,asset,close[,market_cap]");
  const auto width = static_cast<std::size_t>(std::max({i_date, i_asset, i_close, i_cap})) + 1;

  ValidationReport report;
  std::vector<std::string> assets;
  std::unordered_map<std::string, std::size_t> asset_index;
  std::vector<std::map<int, Cell>> obs;

  while (reader.next(fields)) {
    ++report.rows_read;
    if (fields.size() < width) {
      ++report.dropped_rows;
      report.warnings.push_back(at_line(reader.line()) + "short row dropped");
      continue;
    }
    const auto date = Date::try_parse(fields[i_date]);
    if (!date)
      throw InputError(at_line(reader.line()) + "unparseable date '" + fields[i_date] + "'");
    const auto& asset = fields[i_asset];
    if (asset.empty()) {
      ++report.dropped_rows;
      report.warnings.push_back(at_line(reader.line()) + "row without asset dropped");
      continue;
    }
    auto [it, inserted] = asset_index.try_emplace(asset, assets.size());
    if (inserted) {
      assets.push_back(asset);
      obs.emplace_back();
    }
    Cell cell;
    cell.close = positive_close(fields[i_close]);
    if (!cell.close) {
      ++report.invalid_close;
      report.warnings.push_back(at_line(reader.line()) + "unusable close '" + fields[i_close] +
                                "' for " + asset + " recorded as missing");
    }
    if (i_cap >= 0 && !fields[i_cap].empty()) {
      auto cap = csv::parse_double(fields[i_cap]);
      if (cap && std::isfinite(*cap) && *cap >= 0.0) cell.cap = cap;
      else ++report.invalid_market_cap;
    }
    if (!obs[it->second].emplace(date->days(), cell).second)
      throw InputError(at_line(reader.line()) + "duplicate (date, asset) pair (" + date->iso() +
                       ", " + asset + ")");
  }
  if (assets.size() < opts.min_assets)
    throw InputError("fewer than " + std::to_string(opts.min_assets) + " assets in input (found " +
                     std::to_string(assets.size()) + ")");
  return assemble(std::move(assets), obs, std::move(report), opts);
}

ParsedPanel parse_wide(csv::Reader& reader, const ParseOptions& opts) {
  std::vector<std::string> header;
  if (!reader.next(header)) throw InputError("empty input: missing header");
  if (header.empty() || csv::lower(header[0]) != "date")
    throw InputError(at_line(reader.line()) + "malformed header: first column must be 'date'");
  std::vector<std::string> assets(header.begin() + 1, header.end());
  {
    auto sorted = assets;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw InputError(at_line(reader.line()) + "malformed header: duplicate asset column");
    if (std::find(sorted.begin(), sorted.end(), std::string()) != sorted.end())
      throw InputError(at_line(reader.line()) + "malformed header: empty asset name");
  }
  if (assets.size() < opts.min_assets)
    throw InputError("fewer than " + std::to_string(opts.min_assets) + " assets in input (found " +
                     std::to_string(assets.size()) + ")");

  ValidationReport report;
  std::vector<std::map<int, Cell>> obs(assets.size());
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    ++report.rows_read;
    const auto date = Date::try_parse(fields[0]);
    if (!date) throw InputError(at_line(reader.line()) + "unparseable date '" + fields[0] + "'");
    if (fields.size() > header.size())
      throw InputError(at_line(reader.line()) + "row has more fields than the header");
    for (std::size_t c = 0; c < assets.size(); ++c) {
      Cell cell;
      if (c + 1 < fields.size() && !fields[c + 1].empty()) {
        cell.close = positive_close(fields[c + 1]);
        if (!cell.close) {
          ++report.invalid_close;
          report.warnings.push_back(at_line(reader.line()) + "unusable close '" + fields[c + 1] +
                                    "' for " + assets[c] + " recorded as missing");
        }
      }
      if (!obs[c].emplace(date->days(), cell).second)
        throw InputError(at_line(reader.line()) + "duplicate (date, asset) pair (" + date->iso() +
                         ", " + assets[c] + ")");
    }
  }
  return assemble(std::move(assets), obs, std::move(report), opts);
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ParsedPanel parse_panel(std::istream& in, PanelFormat format, const ParseOptions& opts) {
  csv::Reader reader(in);
  return format == PanelFormat::Long ? parse_long(reader, opts) : parse_wide(reader, opts);
}

ParsedPanel read_panel_file(const std::string& path, PanelFormat format, const ParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open panel file '" + path + "'");
  try {
    return parse_panel(in, format, opts);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_panel_csv(std::ostream& out, const PricePanel& panel) {
  out << "date,asset,close,market_cap\n";
  for (std::size_t t = 0; t < panel.n_dates(); ++t) {
    for (std::size_t c = 0; c < panel.n_assets(); ++c) {
      const auto& p = panel.close(t, c);
      if (!p) continue;
      out << panel.dates[t].iso() << ',' << quote_if_needed(panel.assets[c]) << ','
          << csv::format_double(*p) << ',';
      if (const auto& cap = panel.market_cap(t, c)) out << csv::format_double(*cap);
      out << '\n';
    }
  }
}

PricePanel top_n_by_market_cap(const PricePanel& panel, std::size_t n) {
  if (n >= panel.n_assets()) return panel;
  struct Rank {
    std::size_t index;
    std::optional<double> mean_cap;
  };
  std::vector<Rank> ranks;
  for (std::size_t c = 0; c < panel.n_assets(); ++c) {
    double sum = 0.0;
    std::size_t k = 0;
    for (std::size_t t = 0; t < panel.n_dates(); ++t)
      if (const auto& cap = panel.market_cap(t, c)) {
        sum += *cap;
        ++k;
      }
    ranks.push_back({c, k ? std::optional<double>(sum / static_cast<double>(k)) : std::nullopt});
  }
  std::stable_sort(ranks.begin(), ranks.end(), [&](const Rank& a, const Rank& b) {
    if (a.mean_cap.has_value() != b.mean_cap.has_value()) return a.mean_cap.has_value();
    if (a.mean_cap && *a.mean_cap != *b.mean_cap) return *a.mean_cap > *b.mean_cap;
    return panel.assets[a.index] < panel.assets[b.index];
  });
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) keep.push_back(ranks[i].index);
  std::sort(keep.begin(), keep.end());

  PricePanel out;
  out.dates = panel.dates;
  out.close = Grid<double>(panel.n_dates(), keep.size());
  out.market_cap = Grid<double>(panel.n_dates(), keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.assets.push_back(panel.assets[keep[j]]);
    for (std::size_t t = 0; t < panel.n_dates(); ++t) {
      out.close(t, j) = panel.close(t, keep[j]);
      out.market_cap(t, j) = panel.market_cap(t, keep[j]);
    }
  }
  return out;
}

std::vector<double> ReturnPanel::cross_section(std::size_t t) const {
  std::vector<double> out;
  out.reserve(n_assets());
  for (std::size_t c = 0; c < n_assets(); ++c)
    if (const auto& r = returns(t, c)) out.push_back(*r);
  return out;
}

ReturnPanel compute_returns(const PricePanel& panel) {
  ReturnPanel rp;
  rp.assets = panel.assets;
  if (panel.n_dates() < 2) return rp;
  rp.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  rp.returns = Grid<double>(rp.dates.size(), rp.assets.size());
  for (std::size_t t = 1; t < panel.n_dates(); ++t)
    for (std::size_t c = 0; c < panel.n_assets(); ++c) {
      const auto& prev = panel.close(t - 1, c);
      const auto& cur = panel.close(t, c);
      if (prev && cur) rp.returns(t - 1, c) = (*cur - *prev) / *prev;
    }
  return rp;
}

void write_returns_csv(std::ostream& out, const ReturnPanel& rp) {
  out << "date";
  for (const auto& a : rp.assets) out << ',' << quote_if_needed(a);
  out << '\n';
  for (std::size_t t = 0; t < rp.n_dates(); ++t) {
    out << rp.dates[t].iso();
    for (std::size_t c = 0; c < rp.n_assets(); ++c) {
      out << ',';
      if (const auto& r = rp.returns(t, c)) out << csv::format_double(*r);
    }
    out << '\n';
  }
}

ReturnPanel read_returns_csv(std::istream& in) {
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header) || header.empty() || csv::lower(header[0]) != "date")
    throw InputError("returns file: malformed header (expected date,<asset>...)");
  ReturnPanel rp;
  rp.assets.assign(header.begin() + 1, header.end());
  std::vector<std::vector<std::optional<double>>> rows;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    const auto date = Date::try_parse(fields[0]);
    if (!date)
      throw InputError(at_line(reader.line()) + "returns file: unparseable date '" + fields[0] + "'");
    if (!rp.dates.empty() && !(rp.dates.back() < *date))
      throw InputError(at_line(reader.line()) + "returns file: dates not strictly increasing");
    rp.dates.push_back(*date);
    std::vector<std::optional<double>> row(rp.assets.size());
    for (std::size_t c = 0; c < rp.assets.size() && c + 1 < fields.size(); ++c) {
      if (fields[c + 1].empty()) continue;
      auto v = csv::parse_double(fields[c + 1]);
      if (!v || !std::isfinite(*v) || *v <= -1.0)
        throw InputError(at_line(reader.line()) + "returns file: invalid return '" + fields[c + 1] + "'");
      row[c] = v;
    }
    rows.push_back(std::move(row));
  }
  rp.returns = Grid<double>(rows.size(), rp.assets.size());
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t c = 0; c < rp.assets.size(); ++c) rp.returns(t, c) = rows[t][c];
  return rp;
}

ReturnPanel winsorize(const ReturnPanel& rp, double fraction) {
  if (!(fraction > 0.0 && fraction < 0.5))
    throw InputError("winsorize fraction must lie in (0, 0.5)");
  ReturnPanel out = rp;
  for (std::size_t c = 0; c < rp.n_assets(); ++c) {
    std::vector<double> v;
    for (std::size_t t = 0; t < rp.n_dates(); ++t)
      if (const auto& r = rp.returns(t, c)) v.push_back(*r);
    if (v.size() < 3) continue;
    std::sort(v.begin(), v.end());
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(v.size())));
    const double lo = v[k];
    const double hi = v[v.size() - 1 - k];
    for (std::size_t t = 0; t < rp.n_dates(); ++t)
      if (auto& r = out.returns(t, c)) *r = std::clamp(*r, lo, hi);
  }
  return out;
}

double aggregate(std::vector<double> values, Aggregator aggregator) {
  if (values.empty()) throw InputError("aggregate of an empty cross-section");
  if (aggregator == Aggregator::Mean) {
    // Offset by the first value so a constant cross-section averages to itself exactly.
    const double base = values.front();
    double dev = 0.0;
    for (double v : values) dev += v - base;
    return base + dev / static_cast<double>(values.size());
  }
  const auto n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return lower + (upper - lower) / 2.0;
}

MarketSeries market_return(const ReturnPanel& rp, Aggregator aggregator, std::size_t min_assets) {
  if (min_assets < 2) throw InputError("minimum cross-section size must be at least 2");
  MarketSeries ms;
  ms.aggregator = aggregator;
  for (std::size_t t = 0; t < rp.n_dates(); ++t) {
    auto xs = rp.cross_section(t);
    if (xs.size() < min_assets) continue;
    ms.dates.push_back(rp.dates[t]);
    ms.n_assets.push_back(static_cast<int>(xs.size()));
    ms.rm.push_back(aggregate(std::move(xs), aggregator));
  }
  if (ms.dates.empty())
    throw InputError("no date has a cross-section of at least " + std::to_string(min_assets) +
                     " returns");
  return ms;
}

PanelSummary summarize_panel(const ReturnPanel& rp, std::size_t min_observations) {
  PanelSummary out;
  double skew_sum = 0.0;
  std::size_t skew_n = 0;
  for (std::size_t c = 0; c < rp.n_assets(); ++c) {
    std::vector<double> v;
    for (std::size_t t = 0; t < rp.n_dates(); ++t)
      if (const auto& r = rp.returns(t, c)) v.push_back(*r);
    if (v.size() < min_observations) {
      out.skipped.push_back(rp.assets[c]);
      out.warnings.push_back("asset " + rp.assets[c] + " skipped: " + std::to_string(v.size()) +
                             " return(s), at least " + std::to_string(min_observations) + " needed");
      continue;
    }
    AssetSummary s;
    s.asset = rp.assets[c];
    s.count = v.size();
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : v) {
      const double d = x - s.mean;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    s.min = *mn;
    s.max = *mx;
    const double scale = std::max(std::abs(s.min), std::abs(s.max));
    // Rounding in the mean leaves m2 at ~1e-34 for a constant series.
    if (std::sqrt(m2) <= 1e-13 * scale || m2 == 0.0) {
      s.sd = 0.0;
    } else {
      s.sd = std::sqrt(m2 * n / (n - 1.0));
      s.skewness = m3 / std::pow(m2, 1.5);
      s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    }
    s.median = aggregate(v, Aggregator::Median);
    out.grand_mean += s.mean;
    out.grand_median += s.median;
    out.grand_sd += s.sd;
    if (s.skewness) {
      skew_sum += *s.skewness;
      ++skew_n;
    }
    out.assets.push_back(std::move(s));
  }
  if (!out.assets.empty()) {
    const double k = static_cast<double>(out.assets.size());
    out.grand_mean /= k;
    out.grand_median /= k;
    out.grand_sd /= k;
  }
  if (skew_n) out.grand_skewness = skew_sum / static_cast<double>(skew_n);
  return out;
}

nlohmann::json to_json(const PanelSummary& summary) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  nlohmann::json assets = nlohmann::json::array();
  for (const auto& s : summary.assets)
    assets.push_back({{"asset", s.asset},
                      {"count", s.count},
                      {"mean", s.mean},
                      {"median", s.median},
                      {"sd", s.sd},
                      {"skewness", opt(s.skewness)},
                      {"excess_kurtosis", opt(s.excess_kurtosis)},
                      {"min", s.min},
                      {"max", s.max}});
  return {{"assets", assets},
          {"grand_mean", summary.grand_mean},
          {"grand_median", summary.grand_median},
          {"grand_sd", summary.grand_sd},
          {"grand_skewness", opt(summary.grand_skewness)},
          {"skipped", summary.skipped},
          {"warnings", summary.warnings}};
}

}  // namespace herding

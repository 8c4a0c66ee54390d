#include "herding/report.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace herding {

std::string format_fixed(double v, int decimals) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  // "-0.000" reads as a sign error in a table.
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

std::string column_label(std::string_view column) {
  if (column == "intercept") return "Intercept";
  if (column == "abs_rm") return "|R_m,t|";
  if (column == "rm_sq") return "R_m,t^2";
  if (column == "down_abs_rm") return "D x |R_m,t|";
  if (column == "up_abs_rm") return "(1-D) x |R_m,t|";
  if (column == "down_rm_sq") return "D x R_m,t^2";
  if (column == "up_rm_sq") return "(1-D) x R_m,t^2";
  if (column == "d_lower") return "D^L";
  if (column == "d_upper") return "D^U";
  if (column.rfind("csad_lag", 0) == 0) return "CSAD_t-" + std::string(column.substr(8));
  return std::string(column);
}

namespace {

double num(const nlohmann::json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

struct Block {
  std::string heading;
  std::vector<std::string> coef;   // formatted with stars
  std::vector<std::string> t;
  std::string r2;
};

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' ');
}

}  // namespace

std::string render_fit_table(const nlohmann::json* static_report, const nlohmann::json* ms_report,
                             std::string_view title) {
  std::vector<std::string> columns;
  if (static_report) columns = (*static_report)["columns"].get<std::vector<std::string>>();
  else if (ms_report) columns = (*ms_report)["columns"].get<std::vector<std::string>>();

  std::vector<Block> blocks;
  if (static_report) {
    const auto& r = *static_report;
    Block b{"Static", {}, {}, format_fixed(num(r["r2"]), 2)};
    for (std::size_t j = 0; j < columns.size(); ++j) {
      b.coef.push_back(format_fixed(num(r["coef"][j]), 3) + r["stars"][j].get<std::string>());
      b.t.push_back(format_fixed(num(r["t"][j]), 3));
    }
    blocks.push_back(std::move(b));
  }
  if (ms_report) {
    for (const auto& reg : (*ms_report)["regimes"]) {
      Block b{"Regime " + std::to_string(reg["regime"].get<int>()), {}, {}, format_fixed(num(reg["r2"]), 2)};
      for (std::size_t j = 0; j < columns.size(); ++j) {
        b.coef.push_back(format_fixed(num(reg["coef"][j]), 3) + reg["stars"][j].get<std::string>());
        b.t.push_back(format_fixed(num(reg["t"][j]), 3));
      }
      blocks.push_back(std::move(b));
    }
  }

  constexpr std::size_t label_w = 18, cell_w = 12;
  std::ostringstream out;
  out << title << "\n";
  std::string rule(label_w + blocks.size() * 2 * cell_w, '-');
  out << rule << "\n" << pad("Coef.", label_w);
  for (const auto& b : blocks) out << pad(b.heading, 2 * cell_w);
  out << "\n" << pad("", label_w);
  for (std::size_t i = 0; i < blocks.size(); ++i) out << pad("coef", cell_w) << pad("t", cell_w);
  out << "\n" << rule << "\n";
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out << pad(column_label(columns[j]), label_w);
    for (const auto& b : blocks) out << pad(b.coef[j], cell_w) << pad(b.t[j], cell_w);
    out << "\n";
  }
  out << rule << "\n" << pad("R^2", label_w);
  for (const auto& b : blocks) out << pad(b.r2, 2 * cell_w);
  out << "\n" << pad("AIC", label_w);
  if (static_report) out << pad(format_fixed(num((*static_report)["aic"]), 1), 2 * cell_w);
  if (ms_report) out << format_fixed(num((*ms_report)["aic"]), 1);
  out << "\n" << rule << "\n";
  out << "***, ** and * denote significance at 1%, 5% and 10% (two-sided normal).\n";
  if (const auto* any = static_report ? static_report : ms_report; any && any->contains("aggregator"))
    out << "Market return R_m,t: cross-sectional " << (*any)["aggregator"].get<std::string>() << ".\n";
  if (static_report)
    out << "Static: Newey-West t-statistics, bandwidth "
        << (*static_report)["bandwidth"].get<int>() << ".\n";
  if (ms_report) {
    const auto& m = *ms_report;
    out << "Regimes: t-statistics from " << m["se_method"].get<std::string>()
        << "; pooled (non-switching) columns:";
    bool any = false;
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (!m["switching"][j].get<bool>()) {
        out << " " << column_label(columns[j]);
        any = true;
      }
    out << (any ? "" : " none") << ".\n";
    out << "Transition matrix (row = from):\n";
    for (const auto& row : m["transition"]) {
      out << "  ";
      for (const auto& v : row) out << pad(format_fixed(num(v), 3), 8);
      out << "\n";
    }
  }
  return out.str();
}

std::string render_summary_table(const PanelSummary& summary) {
  constexpr std::size_t w = 11;
  std::ostringstream out;
  out << pad("Asset", 14);
  for (const char* h : {"N", "Mean", "Median", "SD", "Skewness", "Min", "Max"}) out << pad(h, w);
  out << "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_fixed(*v, 3) : std::string("NA"); };
  for (const auto& a : summary.assets) {
    out << pad(a.asset, 14) << pad(std::to_string(a.count), w) << pad(format_fixed(a.mean, 4), w)
        << pad(format_fixed(a.median, 4), w) << pad(format_fixed(a.sd, 4), w) << pad(opt(a.skewness), w)
        << pad(format_fixed(a.min, 4), w) << pad(format_fixed(a.max, 4), w) << "\n";
  }
  out << pad("Grand average", 14) << pad("", w) << pad(format_fixed(summary.grand_mean, 4), w)
      << pad(format_fixed(summary.grand_median, 4), w) << pad(format_fixed(summary.grand_sd, 4), w)
      << pad(opt(summary.grand_skewness), w) << "\n";
  return out.str();
}

std::string render_aic_table(const nlohmann::json& table) {
  std::ostringstream out;
  out << pad("Regimes", 10) << pad("AIC", 14) << pad("logLik", 14) << pad("Params", 8) << "Status\n";
  for (const auto& row : table) {
    out << pad(std::to_string(row["n_regimes"].get<int>()), 10)
        << pad(format_fixed(num(row["aic"]), 1), 14) << pad(format_fixed(num(row["loglik"]), 1), 14)
        << pad(std::to_string(row["n_params"].get<int>()), 8)
        << (row["error"].is_null() ? std::string("ok") : row["error"].get<std::string>()) << "\n";
  }
  return out.str();
}

}  // namespace herding

#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

#include "herding/panel.hpp"

namespace herding {

// Fixed-point formatting used by every text table.
std::string format_fixed(double v, int decimals);

// Display label for a design column ("abs_rm" -> "|R_m,t|").
std::string column_label(std::string_view column);

// Coefficient table in the Static | Regime 1..S layout: a (coef+stars, t)
// pair per column, then R^2 and AIC rows. Either report may be null. The
// numbers are taken from the JSON reports, so table and JSON agree.
std::string render_fit_table(const nlohmann::json* static_report, const nlohmann::json* ms_report,
                             std::string_view title);

// Per-asset descriptive statistics table (count, mean, median, sd, skewness,
// min, max) followed by the grand averages.
std::string render_summary_table(const PanelSummary& summary);

std::string render_aic_table(const nlohmann::json& table);

}  // namespace herding

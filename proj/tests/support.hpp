#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "herding/date.hpp"
#include "herding/linreg.hpp"
#include "herding/ms_regime.hpp"
#include "herding/panel.hpp"
#include "herding/rng.hpp"

namespace testing {

using herding::Date;

inline Date day(const char* iso) { return Date::parse(iso); }

using Row = std::vector<std::optional<double>>;

inline herding::ReturnPanel make_returns(const std::vector<Row>& rows,
                                         const char* start = "2017-01-01") {
  herding::ReturnPanel rp;
  const auto first = day(start);
  const std::size_t n = rows.empty() ? 0 : rows.front().size();
  for (std::size_t c = 0; c < n; ++c) rp.assets.push_back("A" + std::to_string(c));
  rp.returns = herding::Grid<double>(rows.size(), n);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    rp.dates.push_back(first + static_cast<int>(t));
    for (std::size_t c = 0; c < n; ++c) rp.returns(t, c) = rows[t][c];
  }
  return rp;
}

// Random panel with occasional gaps; every date keeps at least two returns.
inline herding::ReturnPanel random_returns(herding::Rng& rng, std::size_t dates, std::size_t assets,
                                           double gap_rate = 0.1) {
  std::vector<Row> rows(dates, Row(assets));
  for (auto& row : rows) {
    for (auto& cell : row)
      if (rng.uniform() >= gap_rate) cell = 0.05 * rng.normal();
    std::size_t present = 0;
    for (auto& cell : row) present += cell.has_value();
    for (std::size_t c = 0; present < 2 && c < assets; ++c)
      if (!row[c]) {
        row[c] = 0.05 * rng.normal();
        ++present;
      }
  }
  return make_returns(rows);
}

// Random well-conditioned MS parameters: intercept pooled unless the
// caller says otherwise, transition rows drawn around a strong diagonal.
inline herding::MSParams random_params(herding::Rng& rng, int S, int p) {
  herding::MSParams prm;
  prm.coefficients.resize(S, p);
  for (int s = 0; s < S; ++s)
    for (int j = 0; j < p; ++j) prm.coefficients(s, j) = rng.normal();
  prm.sigmas.resize(S);
  for (int s = 0; s < S; ++s) prm.sigmas(s) = 0.3 + rng.uniform();
  prm.transition.resize(S, S);
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) prm.transition(i, j) = rng.uniform() + (i == j ? 2.0 : 0.0);
    prm.transition.row(i) /= prm.transition.row(i).sum();
  }
  prm.initial_probs.resize(S);
  for (int s = 0; s < S; ++s) prm.initial_probs(s) = rng.uniform() + 0.1;
  prm.initial_probs /= prm.initial_probs.sum();
  return prm;
}

inline herding::Design random_design(herding::Rng& rng, int T, int p) {
  herding::Design d;
  d.y.resize(T);
  d.X.resize(T, p);
  for (int t = 0; t < T; ++t) {
    d.X(t, 0) = 1.0;
    for (int j = 1; j < p; ++j) d.X(t, j) = rng.normal();
    d.y(t) = rng.normal() * 1.5;
  }
  for (int j = 0; j < p; ++j) d.column_names.push_back(j == 0 ? "intercept" : "x" + std::to_string(j));
  return d;
}

// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("herding_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing

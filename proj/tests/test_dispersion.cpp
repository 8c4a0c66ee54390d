#include <algorithm>
#include <numeric>
#include <sstream>

#include "doctest.h"

#include "herding/dispersion.hpp"
#include "herding/error.hpp"
#include "support.hpp"

using namespace herding;
using testing::Row;

namespace {

// Direct-summation oracle over one row of raw cells.
struct Oracle {
  double rm, csad, cssd;
};

Oracle oracle_row(const Row& row, Aggregator agg) {
  std::vector<double> xs;
  for (const auto& c : row)
    if (c) xs.push_back(*c);
  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  double rm;
  if (agg == Aggregator::Mean) {
    rm = 0.0;
    for (double x : xs) rm += x;
    rm /= static_cast<double>(n);
  } else {
    rm = n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  }
  double a = 0.0, s = 0.0;
  for (double x : xs) {
    a += std::abs(x - rm);
    s += (x - rm) * (x - rm);
  }
  return {rm, a / static_cast<double>(n), std::sqrt(s / static_cast<double>(n - 1))};
}

}  // namespace

TEST_SUITE("dispersion") {

TEST_CASE("hand values") {
  const auto rp = testing::make_returns({{0.01, 0.03}});
  const auto ms = market_return(rp, Aggregator::Mean);
  CHECK(ms.rm[0] == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(csad_series(rp, ms).values[0] == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(cssd_series(rp, ms).values[0] == doctest::Approx(0.014142135623730951).epsilon(1e-14));
}

TEST_CASE("identical returns give zero dispersion") {
  const auto rp = testing::make_returns({{0.02, 0.02, 0.02}, {-0.1, -0.1, -0.1}});
  for (auto agg : {Aggregator::Mean, Aggregator::Median}) {
    const auto ds = build_dispersion(rp, market_return(rp, agg));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(ds.csad[i] == 0.0);
      CHECK(*ds.cssd[i] == 0.0);
    }
  }
}

TEST_CASE("single-asset dates are excluded") {
  const auto rp = testing::make_returns({{0.01, std::nullopt}, {0.01, 0.03}});
  MarketSeries ms;
  ms.dates = rp.dates;
  ms.rm = {0.01, 0.02};
  ms.n_assets = {1, 2};
  const auto s = cssd_series(rp, ms);
  REQUIRE(s.dates.size() == 1);
  CHECK(s.dates[0] == rp.dates[1]);
}

TEST_CASE("random panels match the direct-summation oracle") {
  Rng rng(2024);
  for (int rep = 0; rep < 300; ++rep) {
    const auto dates = 1 + rng.below(12);
    const auto assets = 2 + rng.below(8);
    const auto rp = testing::random_returns(rng, dates, assets, 0.25);
    const auto agg = rep % 2 ? Aggregator::Mean : Aggregator::Median;
    const auto ds = build_dispersion(rp, market_return(rp, agg));
    REQUIRE(ds.size() == dates);
    for (std::size_t t = 0; t < dates; ++t) {
      Row row;
      for (std::size_t c = 0; c < assets; ++c) row.push_back(rp.returns(t, c));
      const auto o = oracle_row(row, agg);
      CHECK(std::abs(ds.rm[t] - o.rm) <= 1e-12);
      CHECK(std::abs(ds.csad[t] - o.csad) <= 1e-12);
      CHECK(std::abs(*ds.cssd[t] - o.cssd) <= 1e-12);
      CHECK(*ds.cssd[t] >= ds.csad[t]);
    }
  }
}

TEST_CASE("csad is positively homogeneous") {
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const auto rp = testing::random_returns(rng, 6, 5, 0.2);
    auto scaled = rp;
    const double lambda = 0.1 + 3.0 * rng.uniform();
    for (std::size_t t = 0; t < rp.n_dates(); ++t)
      for (std::size_t c = 0; c < rp.n_assets(); ++c)
        if (scaled.returns(t, c)) *scaled.returns(t, c) *= lambda;
    for (auto agg : {Aggregator::Mean, Aggregator::Median}) {
      const auto a = build_dispersion(rp, market_return(rp, agg));
      const auto b = build_dispersion(scaled, market_return(scaled, agg));
      for (std::size_t t = 0; t < a.size(); ++t)
        CHECK(std::abs(b.csad[t] - lambda * a.csad[t]) <= 1e-12);
    }
  }
}

TEST_CASE("dispersion csv round trip") {
  Rng rng(9);
  const auto rp = testing::random_returns(rng, 20, 6);
  auto ds = build_dispersion(rp, market_return(rp, Aggregator::Median));
  ds.cssd[3].reset();
  std::ostringstream out;
  write_dispersion_csv(out, ds);
  std::istringstream in(out.str());
  const auto back = read_dispersion_csv(in);
  CHECK(back.dates == ds.dates);
  CHECK(back.rm == ds.rm);
  CHECK(back.csad == ds.csad);
  CHECK(back.cssd == ds.cssd);
  CHECK(back.n_assets == ds.n_assets);
}

TEST_CASE("malformed dispersion files") {
  auto read = [](const std::string& s) {
    std::istringstream in(s);
    return read_dispersion_csv(in);
  };
  CHECK_THROWS_AS(read(""), InputError);
  CHECK_THROWS_AS(read("date,rm\n2017-01-01,0.1\n"), InputError);
  CHECK_THROWS_AS(read("date,rm,csad\n2017-01-02,0.1,0.2\n2017-01-01,0.1,0.2\n"), InputError);
  CHECK_THROWS_AS(read("date,rm,csad\n2017-01-01,x,0.2\n"), InputError);
  CHECK(read("date,rm,csad\n2017-01-01,0.1,0.2\n").size() == 1);
}

}  // TEST_SUITE

TEST_SUITE("extreme_day_dummies") {

TEST_CASE("five lowest of one hundred distinct dates") {
  Rng rng(1);
  std::vector<double> rm(100);
  std::vector<Date> dates;
  for (int t = 0; t < 100; ++t) {
    rm[t] = rng.normal();
    dates.push_back(testing::day("2016-01-01") + t);
  }
  const auto dm = extreme_day_dummies(dates, rm, 0.05);
  std::vector<std::size_t> order(100);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rm[a] < rm[b]; });
  CHECK(std::accumulate(dm.d_lower.begin(), dm.d_lower.end(), 0) == 5);
  CHECK(std::accumulate(dm.d_upper.begin(), dm.d_upper.end(), 0) == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(dm.d_lower[order[i]] == 1);
    CHECK(dm.d_upper[order[99 - i]] == 1);
  }
  for (int t = 0; t < 100; ++t) CHECK(dm.d_lower[t] + dm.d_upper[t] <= 1);
}

TEST_CASE("degenerate and invalid inputs") {
  std::vector<Date> dates;
  for (int t = 0; t < 40; ++t) dates.push_back(testing::day("2016-01-01") + t);
  CHECK_THROWS_AS(extreme_day_dummies(dates, std::vector<double>(40, 0.01), 0.05), InputError);
  std::vector<double> rm(40);
  for (int t = 0; t < 40; ++t) rm[t] = t;
  CHECK_THROWS_AS(extreme_day_dummies(dates, rm, 0.2), InputError);
  CHECK_THROWS_AS(extreme_day_dummies(dates, rm, 0.0), InputError);
  CHECK_THROWS_AS(extreme_day_dummies(dates, rm, 0.01), InputError);  // 40 * 0.01 < 1
  CHECK(extreme_day_dummies(dates, rm, 0.025).d_lower[0] == 1);
}

}  // TEST_SUITE

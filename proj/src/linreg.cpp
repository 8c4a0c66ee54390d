#include "herding/linreg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "herding/csv.hpp"
#include "herding/error.hpp"

namespace herding {

DesignKind parse_design_kind(std::string_view name) {
  const auto n = csv::lower(name);
  if (n == "symmetric") return DesignKind::Symmetric;
  if (n == "asymmetric") return DesignKind::Asymmetric;
  if (n == "ch") return DesignKind::ChristieHuang;
  throw InputError("unknown design '" + std::string(name) + "' (expected symmetric|asymmetric|ch)");
}

std::string_view to_string(DesignKind k) {
  switch (k) {
    case DesignKind::Symmetric: return "symmetric";
    case DesignKind::Asymmetric: return "asymmetric";
    case DesignKind::ChristieHuang: return "ch";
    case DesignKind::Custom: break;
  }
  return "custom";
}

std::optional<Eigen::Index> Design::column(std::string_view name) const {
  for (std::size_t i = 0; i < column_names.size(); ++i)
    if (column_names[i] == name) return static_cast<Eigen::Index>(i);
  return std::nullopt;
}

void Design::validate() const {
  if (X.rows() != y.size()) throw InputError("design: y and X differ in row count");
  if (static_cast<std::size_t>(X.cols()) != column_names.size())
    throw InputError("design: column names do not match X");
  if (!dates.empty() && dates.size() != static_cast<std::size_t>(y.size()))
    throw InputError("design: dates do not match rows");
  if (X.cols() == 0 || X.rows() <= X.cols())
    throw InputError("design: need more rows (" + std::to_string(X.rows()) + ") than columns (" +
                     std::to_string(X.cols()) + ")");
  if (!X.allFinite() || !y.allFinite()) throw InputError("design: non-finite values");
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    if (X.col(j).cwiseAbs().maxCoeff() == 0.0)
      throw EstimationError("rank-deficient design: column '" + column_names[j] +
                            "' is identically zero");
  // Rank is judged on unit-norm columns so small-magnitude regressors
  // (squared returns) are not mistaken for numerical noise.
  Eigen::MatrixXd scaled = X;
  for (Eigen::Index j = 0; j < X.cols(); ++j) scaled.col(j) /= X.col(j).norm();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols())
    throw EstimationError("rank-deficient design: rank " + std::to_string(qr.rank()) + " < " +
                          std::to_string(X.cols()) + " columns");
}

Design make_design(Eigen::VectorXd y, Eigen::MatrixXd X, std::vector<std::string> names,
                   std::vector<Date> dates, int lag_count, DesignKind kind) {
  Design d{std::move(y), std::move(X), std::move(names), lag_count, std::move(dates), kind};
  d.validate();
  return d;
}

namespace {

void check_lags(const DispersionSeries& ds, int lags) {
  if (lags < 0 || lags > 10) throw InputError("lag count must lie in [0, 10]");
  if (ds.size() <= static_cast<std::size_t>(lags) + 4)
    throw InputError("dispersion series of " + std::to_string(ds.size()) +
                     " dates too short for " + std::to_string(lags) + " lag(s)");
}

// Fills lag columns starting at `first_col` and returns rows/dates/y.
void fill_common(const DispersionSeries& ds, int lags, Eigen::Index first_col, Design& d) {
  const auto T = static_cast<Eigen::Index>(ds.size()) - lags;
  d.y.resize(T);
  d.dates.clear();
  for (Eigen::Index r = 0; r < T; ++r) {
    const auto t = static_cast<std::size_t>(r + lags);
    d.y(r) = ds.csad[t];
    d.dates.push_back(ds.dates[t]);
    for (int k = 1; k <= lags; ++k) d.X(r, first_col + k - 1) = ds.csad[t - k];
  }
  for (int k = 1; k <= lags; ++k) d.column_names.push_back("csad_lag" + std::to_string(k));
  d.lag_count = lags;
}

}  // namespace

Design build_design_static(const DispersionSeries& ds, int lags) {
  check_lags(ds, lags);
  const auto T = static_cast<Eigen::Index>(ds.size()) - lags;
  Design d;
  d.kind = DesignKind::Symmetric;
  d.X.resize(T, 3 + lags);
  d.column_names = {"intercept", "abs_rm", "rm_sq"};
  for (Eigen::Index r = 0; r < T; ++r) {
    const double rm = ds.rm[static_cast<std::size_t>(r + lags)];
    d.X(r, 0) = 1.0;
    d.X(r, 1) = std::abs(rm);
    d.X(r, 2) = rm * rm;
  }
  fill_common(ds, lags, 3, d);
  d.validate();
  return d;
}

Design build_design_asymmetric(const DispersionSeries& ds, int lags) {
  check_lags(ds, lags);
  const auto T = static_cast<Eigen::Index>(ds.size()) - lags;
  Design d;
  d.kind = DesignKind::Asymmetric;
  d.X.resize(T, 5 + lags);
  d.column_names = {"intercept", "down_abs_rm", "up_abs_rm", "down_rm_sq", "up_rm_sq"};
  for (Eigen::Index r = 0; r < T; ++r) {
    const double rm = ds.rm[static_cast<std::size_t>(r + lags)];
    const double down = rm < 0.0 ? 1.0 : 0.0;
    d.X(r, 0) = 1.0;
    d.X(r, 1) = down * std::abs(rm);
    d.X(r, 2) = (1.0 - down) * std::abs(rm);
    d.X(r, 3) = down * rm * rm;
    d.X(r, 4) = (1.0 - down) * rm * rm;
  }
  fill_common(ds, lags, 5, d);
  d.validate();
  return d;
}

Design build_design_ch(const DispersionSeries& ds, const ExtremeDummies& dummies) {
  if (dummies.dates != ds.dates)
    throw InputError("extreme-day dummies are not aligned with the dispersion dates");
  const auto T = static_cast<Eigen::Index>(ds.size());
  Design d;
  d.kind = DesignKind::ChristieHuang;
  d.y.resize(T);
  d.X.resize(T, 3);
  d.column_names = {"intercept", "d_lower", "d_upper"};
  d.dates = ds.dates;
  for (Eigen::Index r = 0; r < T; ++r) {
    const auto& cssd = ds.cssd[static_cast<std::size_t>(r)];
    if (!cssd) throw InputError("CSSD missing on " + ds.dates[r].iso());
    d.y(r) = *cssd;
    d.X(r, 0) = 1.0;
    d.X(r, 1) = dummies.d_lower[r];
    d.X(r, 2) = dummies.d_upper[r];
  }
  d.validate();
  return d;
}

int auto_bandwidth(Eigen::Index n) {
  return static_cast<int>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
}

namespace {

Eigen::MatrixXd xtx_inverse(const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-15)
    throw EstimationError("singular X'X");
  return ldlt.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
}

}  // namespace

Eigen::MatrixXd newey_west_cov(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                               int bandwidth) {
  const Eigen::Index T = X.rows();
  if (residuals.size() != T) throw InputError("newey_west_cov: residual length mismatch");
  if (bandwidth < 0 || bandwidth >= T)
    throw InputError("Newey-West bandwidth must lie in [0, " + std::to_string(T) + ")");
  const Eigen::MatrixXd bread = xtx_inverse(X);
  const Eigen::MatrixXd scores = X.array().colwise() * residuals.array();
  Eigen::MatrixXd meat = scores.transpose() * scores;
  for (int l = 1; l <= bandwidth; ++l) {
    const double w = 1.0 - static_cast<double>(l) / (bandwidth + 1.0);
    const Eigen::MatrixXd gamma = scores.bottomRows(T - l).transpose() * scores.topRows(T - l);
    meat += w * (gamma + gamma.transpose());
  }
  Eigen::MatrixXd v = bread * meat * bread;
  return 0.5 * (v + v.transpose());
}

FitResult ols_fit(const Design& d, std::optional<int> bandwidth) {
  d.validate();
  const Eigen::Index n = d.rows();
  const Eigen::Index p = d.cols();
  FitResult fit;
  fit.column_names = d.column_names;
  fit.nobs = n;
  fit.bandwidth = bandwidth.value_or(auto_bandwidth(n));

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.X);
  fit.coefficients = qr.solve(d.y);
  fit.residuals = d.y - d.X * fit.coefficients;

  const double ssr = fit.residuals.squaredNorm();
  const double sst = (d.y.array() - d.y.mean()).square().sum();
  fit.r_squared = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : (ssr == 0.0 ? 1.0 : 0.0);
  fit.adj_r_squared = 1.0 - (1.0 - fit.r_squared) * static_cast<double>(n - 1) / static_cast<double>(n - p);
  const double nd = static_cast<double>(n);
  fit.sigma = std::sqrt(ssr / nd);
  fit.loglik = -0.5 * nd * (std::log(2.0 * std::numbers::pi) + std::log(ssr / nd) + 1.0);
  fit.aic = 2.0 * static_cast<double>(p) - 2.0 * fit.loglik;

  fit.covariance = newey_west_cov(d.X, fit.residuals, fit.bandwidth);
  fit.hac_se = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.t_stats = fit.coefficients.cwiseQuotient(fit.hac_se);
  const double s2 = ssr / static_cast<double>(n - p);
  fit.classical_se = (s2 * xtx_inverse(d.X).diagonal()).cwiseSqrt();
  return fit;
}

double two_sided_p(double t) { return std::erfc(std::abs(t) / std::numbers::sqrt2); }

std::string significance_stars(double t) {
  if (!std::isfinite(t)) return std::isnan(t) ? "" : "***";
  const double p = two_sided_p(t);
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.10) return "*";
  return "";
}

namespace {

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

nlohmann::json numbers(const Eigen::VectorXd& v) {
  auto out = nlohmann::json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

}  // namespace

nlohmann::json fit_report_json(const FitResult& fit, const FitContext& ctx) {
  auto stars = nlohmann::json::array();
  for (double t : fit.t_stats) stars.push_back(significance_stars(t));
  return {{"model", ctx.model},
          {"columns", fit.column_names},
          {"coef", numbers(fit.coefficients)},
          {"se", numbers(fit.hac_se)},
          {"t", numbers(fit.t_stats)},
          {"stars", stars},
          {"classical_se", numbers(fit.classical_se)},
          {"r2", number(fit.r_squared)},
          {"adj_r2", number(fit.adj_r_squared)},
          {"loglik", number(fit.loglik)},
          {"aic", number(fit.aic)},
          {"sigma", number(fit.sigma)},
          {"nobs", fit.nobs},
          {"bandwidth", fit.bandwidth},
          {"lag_count", ctx.lag_count},
          {"aggregator", ctx.aggregator},
          {"se_method", "newey-west (bartlett)"}};
}

}  // namespace herding

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "herding/date.hpp"
#include "herding/dispersion.hpp"

namespace herding {

enum class DesignKind { Symmetric, Asymmetric, ChristieHuang, Custom };

DesignKind parse_design_kind(std::string_view name);
std::string_view to_string(DesignKind k);

// Regression design. Column 0 is the intercept; rows are aligned with
// `dates` (the first `lag_count` dispersion dates are consumed by lags).
struct Design {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::string> column_names;
  int lag_count = 0;
  std::vector<Date> dates;
  DesignKind kind = DesignKind::Custom;

  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index cols() const { return X.cols(); }
  // Index of the named column, or nullopt.
  std::optional<Eigen::Index> column(std::string_view name) const;

  // Throws EstimationError naming an all-zero column or on rank deficiency;
  // InputError on shape problems or non-finite values.
  void validate() const;
};

// CSAD_t on [1, |rm_t|, rm_t^2, CSAD_{t-1}, ..., CSAD_{t-k}].
Design build_design_static(const DispersionSeries& ds, int lags);

// D_t = 1 when rm_t < 0. Columns [1, D|rm|, (1-D)|rm|, D rm^2, (1-D) rm^2, lags].
Design build_design_asymmetric(const DispersionSeries& ds, int lags);

// CSSD_t on [1, D^L, D^U].
Design build_design_ch(const DispersionSeries& ds, const ExtremeDummies& dummies);

// Generic constructor; validates.
Design make_design(Eigen::VectorXd y, Eigen::MatrixXd X, std::vector<std::string> names,
                   std::vector<Date> dates, int lag_count = 0,
                   DesignKind kind = DesignKind::Custom);

struct FitResult {
  std::vector<std::string> column_names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd hac_se;
  Eigen::VectorXd t_stats;
  Eigen::VectorXd classical_se;
  Eigen::MatrixXd covariance;  // Newey-West
  double r_squared = 0.0;
  double adj_r_squared = 0.0;
  double loglik = 0.0;
  double aic = 0.0;
  double sigma = 0.0;  // ML residual scale sqrt(SSR / n)
  Eigen::VectorXd residuals;
  Eigen::Index nobs = 0;
  int bandwidth = 0;
};

// floor(4 (n/100)^(2/9)).
int auto_bandwidth(Eigen::Index n);

// (X'X)^-1 S (X'X)^-1 with Bartlett-weighted score autocovariances up to
// `bandwidth` lags. Bandwidth 0 gives White's HC0 estimator.
Eigen::MatrixXd newey_west_cov(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                               int bandwidth);

// OLS with Newey-West standard errors. Bandwidth defaults to auto_bandwidth.
// AIC = 2p - 2 lnL with the Gaussian concentrated likelihood, p = columns.
FitResult ols_fit(const Design& d, std::optional<int> bandwidth = std::nullopt);

// Two-sided normal p-value.
double two_sided_p(double t);
// "***" at 1%, "**" at 5%, "*" at 10%, "" otherwise.
std::string significance_stars(double t);

struct FitContext {
  std::string model;
  int lag_count = 0;
  std::string aggregator;
};

// {model, columns[], coef[], se[], t[], stars[], r2, adj_r2, aic, nobs,
//  bandwidth, lag_count, aggregator, ...}
nlohmann::json fit_report_json(const FitResult& fit, const FitContext& ctx);

}  // namespace herding

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "herding/date.hpp"
#include "herding/linreg.hpp"

namespace herding {

// Parameters of a Gaussian Markov-switching regression
//   y_t = x_t' b_{s_t} + sigma_{s_t} e_t,  P(s_t = j | s_{t-1} = i) = transition(i, j).
struct MSParams {
  Eigen::MatrixXd coefficients;  // S x p
  Eigen::VectorXd sigmas;        // S, all > 0
  Eigen::MatrixXd transition;    // S x S, row-stochastic
  Eigen::VectorXd initial_probs; // S, distribution of s_1

  Eigen::Index n_regimes() const { return sigmas.size(); }
  // Throws InputError when shapes or stochastic constraints are violated.
  void validate(Eigen::Index n_columns) const;
};

// Stationary distribution of a row-stochastic matrix (least-squares solution
// of pi' P = pi', sum pi = 1, clipped to the simplex).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition);

struct FilterResult {
  double loglik = 0.0;
  Eigen::MatrixXd filtered;   // T x S, P(s_t | y_1..t)
  Eigen::MatrixXd predicted;  // T x S, P(s_t | y_1..t-1); row 0 = initial_probs
};

// Hamilton forward filter. Densities are combined in log space with a
// per-step max shift, so long samples do not underflow. Throws
// EstimationError naming the date if every regime density vanishes.
FilterResult hamilton_filter(const MSParams& params, const Design& d);
FilterResult hamilton_filter(const MSParams& params, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& X, std::span<const Date> dates = {});

// Kim backward smoother. Terms with a zero predicted probability are dropped.
Eigen::MatrixXd kim_smoother(const Eigen::MatrixXd& filtered, const Eigen::MatrixXd& predicted,
                             const Eigen::MatrixXd& transition);

struct MSSpec {
  int n_regimes = 2;
  bool switching_intercept = false;
  bool switching_variance = true;
  int max_iter = 1000;
  double tol = 1e-8;
  int n_restarts = 10;
  std::uint64_t seed = 0;
  // Upper bound on worker threads for restarts; 0 = hardware concurrency.
  int max_threads = 0;

  void validate() const;
};

struct MSFit {
  MSParams params;
  Eigen::MatrixXd se;        // S x p, observed-information standard errors
  Eigen::MatrixXd filtered;  // T x S
  Eigen::MatrixXd smoothed;  // T x S
  double loglik = 0.0;
  double aic = 0.0;
  int n_params = 0;
  bool converged = false;
  int n_iter = 0;
  int restart_index = 0;
  std::vector<double> loglik_trace;     // one entry per E-step of the chosen restart
  std::vector<double> restart_logliks;  // NaN for failed restarts
  std::vector<bool> switching;          // per column
  std::vector<std::string> column_names;
  std::vector<Date> dates;
  DesignKind kind = DesignKind::Custom;
  Eigen::VectorXd regime_r2;         // smoothed-probability weighted R^2 per regime
  Eigen::VectorXd occupancy;         // sum_t smoothed(t, s)
  std::string se_method = "observed information (numerical Hessian)";

  Eigen::Index n_regimes() const { return params.n_regimes(); }
  Eigen::MatrixXd t_stats() const { return params.coefficients.cwiseQuotient(se); }
};

// EM estimation (filter + smoother E-step, conditional-maximization M-step)
// with multiple contiguous-block restarts. The fit with the highest
// log-likelihood among converged restarts is returned, canonically ordered.
// Throws EstimationError when no restart converges or a regime is starved.
MSFit fit_ms(const Design& d, const MSSpec& spec);

// Number of free parameters counted by the AIC.
int ms_parameter_count(int n_regimes, int n_switching, int n_pooled, bool switching_variance);

// Permutes regimes so the key ascends: coefficient on rm_sq (symmetric),
// down_rm_sq + up_rm_sq (asymmetric), otherwise sigma.
MSFit order_regimes(const MSFit& fit);

// Standard errors from the inverse of the numerically differentiated
// negative Hessian of the log-likelihood at `params`.
Eigen::MatrixXd observed_information_se(const MSParams& params, const Design& d,
                                        const std::vector<bool>& switching,
                                        bool switching_variance);

struct AicRow {
  int n_regimes = 0;
  std::optional<double> aic;
  std::optional<double> loglik;
  int n_params = 0;
  bool converged = false;
  std::string error;
};

struct RegimeSelection {
  MSFit best;
  std::vector<AicRow> table;
  std::vector<std::string> warnings;
};

// Fits every candidate regime count and returns the minimum-AIC fit.
// Candidates that fail are excluded with a warning.
RegimeSelection select_regime_count(const Design& d, const std::set<int>& candidates,
                                    const MSSpec& defaults);

enum class HerdingLabel { Herding, AdverseHerding, Neutral };
std::string_view to_string(HerdingLabel l);

struct RegimeVerdict {
  int regime = 0;              // 1-based, after canonical ordering
  std::string market_state;    // "all", "down" or "up"
  std::string column;
  double gamma_sq = 0.0;
  double t_stat = 0.0;
  HerdingLabel label = HerdingLabel::Neutral;
  double alpha = 0.05;
};

// Sign of the squared-return coefficient, significant at two-sided alpha.
HerdingLabel classify_coefficient(double coef, double t_stat, double alpha);

std::vector<RegimeVerdict> classify_regimes(const MSFit& fit, double alpha);

nlohmann::json ms_report_json(const MSFit& fit, const std::vector<RegimeVerdict>& verdicts,
                              const FitContext& ctx);
nlohmann::json to_json(const RegimeVerdict& v);
nlohmann::json to_json(const AicRow& row);

// `date,regime_1,...,regime_S`.
void write_smoothed_csv(std::ostream& out, const MSFit& fit);

}  // namespace herding

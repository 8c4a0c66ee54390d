#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "herding/dispersion.hpp"
#include "herding/linreg.hpp"
#include "herding/ms_regime.hpp"

namespace herding {

struct GroundTruth {
  std::vector<int> states;  // 0-based regime per design row
  MSParams params;
  std::uint64_t seed = 0;
};

// First state from the stationary distribution, then transition rows.
// Deterministic given seed. Throws InputError on a non-stochastic matrix.
std::vector<int> simulate_chain(const Eigen::MatrixXd& transition, std::size_t T,
                                std::uint64_t seed);

// Regressors for simulation. With `exogenous` set, its rows are used as x_t
// directly (no lags). Otherwise rm_t = rm_scale * t(rm_dof), clipped to
// [-rm_clip, rm_clip], feeds the symmetric or asymmetric herding columns and
// `lag_count` lagged values of the generated y are appended.
struct RegressorTemplate {
  DesignKind kind = DesignKind::Symmetric;
  int lag_count = 3;
  double rm_scale = 0.03;
  int rm_dof = 3;
  double rm_clip = 0.5;
  int burn_in = 200;
  std::optional<Eigen::MatrixXd> exogenous;
};

struct SimulatedData {
  Design design;
  GroundTruth truth;
  // Series in dispersion-file layout (y as csad), including the lag_count
  // leading rows consumed by the lags. Empty for exogenous templates.
  DispersionSeries series;
};

// y_t = x_t' b_{s_t} + sigma_{s_t} z_t, z_t ~ N(0, 1). Sigmas may be zero
// (noiseless) here even though the filter requires them positive.
SimulatedData simulate_ms_data(const MSParams& params, const RegressorTemplate& tmpl,
                               std::size_t T, std::uint64_t seed);

// log sum over all S^T regime paths of
//   pi(s_1) prod p(s_{t-1}, s_t) prod N(y_t; x_t' b_{s_t}, sigma_{s_t}^2).
// Throws InputError if S^T exceeds 2e6.
double brute_force_loglik(const MSParams& params, const Design& d);

// Exact posterior P(s_t = s | y_1..T) by path enumeration (same size limit).
Eigen::MatrixXd brute_force_posterior(const MSParams& params, const Design& d);

// Fixture files: {"seed", "T", "template": {...}, "params": {...}}.
nlohmann::json params_to_json(const MSParams& params);
MSParams params_from_json(const nlohmann::json& j);

}  // namespace herding

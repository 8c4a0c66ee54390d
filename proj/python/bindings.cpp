#include <cmath>
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "herding/cli.hpp"
#include "herding/dispersion.hpp"
#include "herding/error.hpp"
#include "herding/linreg.hpp"
#include "herding/ms_regime.hpp"
#include "herding/synthetic.hpp"

namespace py = pybind11;
using namespace herding;

namespace {

std::vector<std::string> default_names(Eigen::Index p) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

Design to_design(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                 std::optional<std::vector<std::string>> names) {
  auto cols = names ? *names : default_names(X.cols());
  DesignKind kind = DesignKind::Custom;
  if (cols.size() > 2 && cols[2] == "rm_sq") kind = DesignKind::Symmetric;
  else if (cols.size() > 4 && cols[3] == "down_rm_sq") kind = DesignKind::Asymmetric;
  Design d{y, X, std::move(cols), 0, {}, kind};
  d.validate();
  return d;
}

ReturnPanel to_panel(const Eigen::MatrixXd& returns) {
  ReturnPanel rp;
  const auto start = Date::parse("2000-01-01");
  for (Eigen::Index t = 0; t < returns.rows(); ++t) rp.dates.push_back(start + static_cast<int>(t));
  for (Eigen::Index c = 0; c < returns.cols(); ++c) rp.assets.push_back("a" + std::to_string(c));
  rp.returns = Grid<double>(static_cast<std::size_t>(returns.rows()), static_cast<std::size_t>(returns.cols()));
  for (Eigen::Index t = 0; t < returns.rows(); ++t)
    for (Eigen::Index c = 0; c < returns.cols(); ++c)
      if (std::isfinite(returns(t, c))) rp.returns(t, c) = returns(t, c);
  return rp;
}

MSParams make_params(const Eigen::MatrixXd& coefficients, const Eigen::VectorXd& sigmas,
                     const Eigen::MatrixXd& transition, std::optional<Eigen::VectorXd> initial) {
  MSParams p{coefficients, sigmas, transition,
             initial ? *initial : stationary_distribution(transition)};
  p.validate(coefficients.cols());
  return p;
}

py::dict ms_dict(const MSFit& fit) {
  py::dict out;
  out["columns"] = fit.column_names;
  out["coefficients"] = fit.params.coefficients;
  out["se"] = fit.se;
  out["t"] = fit.t_stats();
  out["sigmas"] = fit.params.sigmas;
  out["transition"] = fit.params.transition;
  out["initial_probs"] = fit.params.initial_probs;
  out["filtered"] = fit.filtered;
  out["smoothed"] = fit.smoothed;
  out["loglik"] = fit.loglik;
  out["aic"] = fit.aic;
  out["n_params"] = fit.n_params;
  out["converged"] = fit.converged;
  out["n_iter"] = fit.n_iter;
  out["restart_index"] = fit.restart_index;
  out["loglik_trace"] = fit.loglik_trace;
  out["regime_r2"] = fit.regime_r2;
  out["occupancy"] = fit.occupancy;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Herding detection: dispersion measures, HAC regressions and Markov-switching fits";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<EstimationError>(m, "EstimationError", PyExc_RuntimeError);

  m.def(
      "dispersion",
      [](const Eigen::MatrixXd& returns, const std::string& aggregator, std::size_t min_assets) {
        const auto rp = to_panel(returns);
        const auto ms = market_return(rp, parse_aggregator(aggregator), min_assets);
        const auto ds = build_dispersion(rp, ms);
        std::vector<long> rows;
        for (const auto& d : ds.dates) rows.push_back(d.days() - rp.dates.front().days());
        std::vector<double> cssd;
        for (const auto& v : ds.cssd) cssd.push_back(v.value_or(NAN));
        py::dict out;
        out["row"] = rows;
        out["rm"] = ds.rm;
        out["csad"] = ds.csad;
        out["cssd"] = cssd;
        out["n_assets"] = ds.n_assets;
        return out;
      },
      py::arg("returns"), py::arg("aggregator") = "median", py::arg("min_assets") = 2,
      "Market return, CSAD and CSSD per row of a dates x assets return matrix (NaN = missing).");

  m.def("auto_bandwidth", &auto_bandwidth, py::arg("n"));
  m.def("newey_west_cov", &newey_west_cov, py::arg("X"), py::arg("residuals"), py::arg("bandwidth"));

  m.def(
      "ols_fit",
      [](const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
         std::optional<std::vector<std::string>> names, std::optional<int> bandwidth) {
        const auto fit = ols_fit(to_design(y, X, names), bandwidth);
        py::dict out;
        out["columns"] = fit.column_names;
        out["coefficients"] = fit.coefficients;
        out["se"] = fit.hac_se;
        out["t"] = fit.t_stats;
        out["classical_se"] = fit.classical_se;
        out["covariance"] = fit.covariance;
        out["r2"] = fit.r_squared;
        out["adj_r2"] = fit.adj_r_squared;
        out["loglik"] = fit.loglik;
        out["aic"] = fit.aic;
        out["sigma"] = fit.sigma;
        out["residuals"] = fit.residuals;
        out["bandwidth"] = fit.bandwidth;
        return out;
      },
      py::arg("y"), py::arg("X"), py::arg("names") = py::none(), py::arg("bandwidth") = py::none(),
      "OLS with Newey-West (Bartlett) standard errors.");

  m.def(
      "hamilton_filter",
      [](const Eigen::MatrixXd& coefficients, const Eigen::VectorXd& sigmas,
         const Eigen::MatrixXd& transition, const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
         std::optional<Eigen::VectorXd> initial_probs) {
        const auto params = make_params(coefficients, sigmas, transition, initial_probs);
        const auto f = hamilton_filter(params, y, X);
        return py::make_tuple(f.loglik, f.filtered, f.predicted,
                              kim_smoother(f.filtered, f.predicted, params.transition));
      },
      py::arg("coefficients"), py::arg("sigmas"), py::arg("transition"), py::arg("y"), py::arg("X"),
      py::arg("initial_probs") = py::none(),
      "Returns (loglik, filtered, predicted, smoothed).");

  m.def(
      "fit_ms",
      [](const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::optional<std::vector<std::string>> names,
         int n_regimes, bool switching_intercept, int restarts, std::uint64_t seed, int max_iter,
         double tol, int max_threads) {
        MSSpec spec;
        spec.n_regimes = n_regimes;
        spec.switching_intercept = switching_intercept;
        spec.n_restarts = restarts;
        spec.seed = seed;
        spec.max_iter = max_iter;
        spec.tol = tol;
        spec.max_threads = max_threads;
        const auto d = to_design(y, X, names);
        MSFit fit;
        {
          py::gil_scoped_release release;
          fit = fit_ms(d, spec);
        }
        return ms_dict(fit);
      },
      py::arg("y"), py::arg("X"), py::arg("names") = py::none(), py::arg("n_regimes") = 2,
      py::arg("switching_intercept") = false, py::arg("restarts") = 10, py::arg("seed") = 0,
      py::arg("max_iter") = 1000, py::arg("tol") = 1e-8, py::arg("max_threads") = 0,
      "EM fit of a Markov-switching regression; column 0 is the pooled intercept by default.");

  m.def(
      "simulate",
      [](const Eigen::MatrixXd& coefficients, const Eigen::VectorXd& sigmas,
         const Eigen::MatrixXd& transition, std::size_t T, std::uint64_t seed, const std::string& kind,
         int lag_count) {
        RegressorTemplate tmpl;
        tmpl.kind = parse_design_kind(kind);
        tmpl.lag_count = lag_count;
        MSParams params{coefficients, sigmas, transition, stationary_distribution(transition)};
        const auto sim = simulate_ms_data(params, tmpl, T, seed);
        return py::make_tuple(sim.design.y, sim.design.X, sim.design.column_names, sim.truth.states);
      },
      py::arg("coefficients"), py::arg("sigmas"), py::arg("transition"), py::arg("T"),
      py::arg("seed") = 0, py::arg("kind") = "symmetric", py::arg("lag_count") = 3,
      "Synthetic (y, X, columns, states) with known regimes.");

  m.def(
      "brute_force_loglik",
      [](const Eigen::MatrixXd& coefficients, const Eigen::VectorXd& sigmas,
         const Eigen::MatrixXd& transition, const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
         std::optional<Eigen::VectorXd> initial_probs) {
        return brute_force_loglik(make_params(coefficients, sigmas, transition, initial_probs),
                                  to_design(y, X, std::nullopt));
      },
      py::arg("coefficients"), py::arg("sigmas"), py::arg("transition"), py::arg("y"), py::arg("X"),
      py::arg("initial_probs") = py::none());

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}

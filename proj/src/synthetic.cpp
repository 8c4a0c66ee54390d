#include "herding/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "herding/error.hpp"
#include "herding/rng.hpp"

namespace herding {

namespace {

void check_stochastic(const Eigen::MatrixXd& P) {
  if (P.rows() < 1 || P.rows() != P.cols()) throw InputError("transition matrix must be square");
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    if ((P.row(i).array() < 0.0).any() || std::abs(P.row(i).sum() - 1.0) > 1e-10)
      throw InputError("transition matrix is not row-stochastic");
}

int draw(const Eigen::VectorXd& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index s = 0; s < probs.size(); ++s) {
    acc += probs(s);
    if (u < acc) return static_cast<int>(s);
  }
  for (Eigen::Index s = probs.size() - 1; s >= 0; --s)
    if (probs(s) > 0.0) return static_cast<int>(s);
  return 0;
}

}  // namespace

std::vector<int> simulate_chain(const Eigen::MatrixXd& transition, std::size_t T,
                                std::uint64_t seed) {
  check_stochastic(transition);
  Rng rng(mix_seed(seed, 0));
  std::vector<int> states;
  states.reserve(T);
  if (T == 0) return states;
  states.push_back(draw(stationary_distribution(transition), rng));
  for (std::size_t t = 1; t < T; ++t)
    states.push_back(draw(transition.row(states.back()).transpose(), rng));
  return states;
}

SimulatedData simulate_ms_data(const MSParams& params, const RegressorTemplate& tmpl,
                               std::size_t T, std::uint64_t seed) {
  const auto S = params.n_regimes();
  check_stochastic(params.transition);
  if (params.sigmas.size() != S || (params.sigmas.array() < 0.0).any())
    throw InputError("simulation: sigmas must be non-negative, one per regime");
  if (T < 2) throw InputError("simulation: T must be at least 2");

  SimulatedData out;
  out.truth.params = params;
  out.truth.seed = seed;
  Rng noise(mix_seed(seed, 1));

  if (tmpl.exogenous) {
    const auto& X = *tmpl.exogenous;
    if (static_cast<std::size_t>(X.rows()) != T || X.cols() != params.coefficients.cols())
      throw InputError("simulation: exogenous regressors must be T x p");
    out.truth.states = simulate_chain(params.transition, T, seed);
    Eigen::VectorXd y(static_cast<Eigen::Index>(T));
    for (std::size_t t = 0; t < T; ++t) {
      const int s = out.truth.states[t];
      y(t) = X.row(t).dot(params.coefficients.row(s)) + params.sigmas(s) * noise.normal();
    }
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < X.cols(); ++j) names.push_back(j == 0 ? "intercept" : "x" + std::to_string(j));
    std::vector<Date> dates;
    for (std::size_t t = 0; t < T; ++t) dates.push_back(Date::from_days(static_cast<int>(t)));
    out.design = Design{std::move(y), X, std::move(names), 0, std::move(dates), DesignKind::Custom};
    return out;
  }

  if (tmpl.kind != DesignKind::Symmetric && tmpl.kind != DesignKind::Asymmetric)
    throw InputError("simulation: generated regressors support symmetric or asymmetric designs");
  const int k = tmpl.lag_count;
  const int n_base = tmpl.kind == DesignKind::Symmetric ? 3 : 5;
  if (params.coefficients.cols() != n_base + k)
    throw InputError("simulation: coefficient count does not match template columns");

  const std::size_t total = T + static_cast<std::size_t>(k + tmpl.burn_in);
  const auto states = simulate_chain(params.transition, total, seed);
  Rng market(mix_seed(seed, 2));
  std::vector<double> rm(total), y(total, 0.0);
  const Eigen::VectorXd pi = stationary_distribution(params.transition);
  {
    // Start lags at the stationary-average unconditional mean.
    double lag_sum = 0.0, intercept = 0.0;
    for (Eigen::Index s = 0; s < S; ++s) {
      intercept += pi(s) * params.coefficients(s, 0);
      for (int l = 0; l < k; ++l) lag_sum += pi(s) * params.coefficients(s, n_base + l);
    }
    const double start = lag_sum < 1.0 ? intercept / (1.0 - lag_sum) : intercept;
    std::fill(y.begin(), y.end(), start);
  }
  Eigen::VectorXd x(n_base + k);
  auto row_of = [&](std::size_t t) {
    const double r = rm[t];
    x(0) = 1.0;
    if (tmpl.kind == DesignKind::Symmetric) {
      x(1) = std::abs(r);
      x(2) = r * r;
    } else {
      const double down = r < 0.0 ? 1.0 : 0.0;
      x(1) = down * std::abs(r);
      x(2) = (1.0 - down) * std::abs(r);
      x(3) = down * r * r;
      x(4) = (1.0 - down) * r * r;
    }
    for (int l = 1; l <= k; ++l) x(n_base + l - 1) = y[t - static_cast<std::size_t>(l)];
  };
  for (std::size_t t = 0; t < total; ++t) {
    rm[t] = std::clamp(tmpl.rm_scale * market.student_t(tmpl.rm_dof), -tmpl.rm_clip, tmpl.rm_clip);
    if (t < static_cast<std::size_t>(k)) continue;
    row_of(t);
    const int s = states[t];
    y[t] = x.dot(params.coefficients.row(s).transpose()) + params.sigmas(s) * noise.normal();
  }

  // Keep the last T + k points; the first k feed the lags of row 0.
  const std::size_t first = total - T - static_cast<std::size_t>(k);
  auto& ds = out.series;
  ds.aggregator = Aggregator::Median;
  const Date origin = Date::parse("2013-04-29");
  for (std::size_t t = first; t < total; ++t) {
    ds.dates.push_back(origin + static_cast<int>(t - first));
    ds.rm.push_back(rm[t]);
    ds.csad.push_back(y[t]);
    ds.cssd.push_back(std::nullopt);
    ds.n_assets.push_back(0);
  }
  out.truth.states.assign(states.begin() + static_cast<std::ptrdiff_t>(first + k), states.end());

  Design d;
  d.kind = tmpl.kind;
  d.lag_count = k;
  d.y.resize(static_cast<Eigen::Index>(T));
  d.X.resize(static_cast<Eigen::Index>(T), n_base + k);
  for (std::size_t r = 0; r < T; ++r) {
    const std::size_t t = first + k + r;
    row_of(t);
    d.X.row(static_cast<Eigen::Index>(r)) = x.transpose();
    d.y(static_cast<Eigen::Index>(r)) = y[t];
    d.dates.push_back(ds.dates[k + r]);
  }
  if (tmpl.kind == DesignKind::Symmetric) d.column_names = {"intercept", "abs_rm", "rm_sq"};
  else d.column_names = {"intercept", "down_abs_rm", "up_abs_rm", "down_rm_sq", "up_rm_sq"};
  for (int l = 1; l <= k; ++l) d.column_names.push_back("csad_lag" + std::to_string(l));
  out.design = std::move(d);
  return out;
}

namespace {

struct PathTerms {
  Eigen::MatrixXd logdens;  // T x S
  Eigen::MatrixXd logP;     // S x S
  Eigen::VectorXd logpi;
};

PathTerms path_terms(const MSParams& params, const Design& d) {
  params.validate(d.cols());
  const auto T = d.rows();
  const auto S = params.n_regimes();
  const double states = std::pow(static_cast<double>(S), static_cast<double>(T));
  if (states > 2e6)
    throw InputError("brute-force enumeration of " + std::to_string(states) + " paths exceeds 2e6");
  PathTerms pt;
  pt.logdens.resize(T, S);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index s = 0; s < S; ++s) {
      const double sd = params.sigmas(s);
      const double e = d.y(t) - d.X.row(t).dot(params.coefficients.row(s));
      pt.logdens(t, s) = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * (e / sd) * (e / sd);
    }
  pt.logP = params.transition.array().log();
  pt.logpi = params.initial_probs.array().log();
  return pt;
}

// Calls fn(path, log weight) for every regime path.
template <typename Fn>
void for_each_path(const PathTerms& pt, Fn&& fn) {
  const auto T = pt.logdens.rows();
  const auto S = pt.logdens.cols();
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  for (;;) {
    double lw = pt.logpi(path[0]) + pt.logdens(0, path[0]);
    for (Eigen::Index t = 1; t < T; ++t) lw += pt.logP(path[t - 1], path[t]) + pt.logdens(t, path[t]);
    fn(path, lw);
    Eigen::Index t = T - 1;
    while (t >= 0 && path[t] == S - 1) path[t--] = 0;
    if (t < 0) break;
    ++path[t];
  }
}

}  // namespace

double brute_force_loglik(const MSParams& params, const Design& d) {
  const auto pt = path_terms(params, d);
  std::vector<double> weights;
  for_each_path(pt, [&](const std::vector<int>&, double lw) { weights.push_back(lw); });
  const double m = *std::max_element(weights.begin(), weights.end());
  if (!std::isfinite(m)) return -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double w : weights) sum += std::exp(w - m);
  return m + std::log(sum);
}

Eigen::MatrixXd brute_force_posterior(const MSParams& params, const Design& d) {
  const auto pt = path_terms(params, d);
  const double total = brute_force_loglik(params, d);
  Eigen::MatrixXd post = Eigen::MatrixXd::Zero(d.rows(), params.n_regimes());
  for_each_path(pt, [&](const std::vector<int>& path, double lw) {
    const double w = std::exp(lw - total);
    for (std::size_t t = 0; t < path.size(); ++t) post(static_cast<Eigen::Index>(t), path[t]) += w;
  });
  return post;
}

nlohmann::json params_to_json(const MSParams& params) {
  auto rows = [](const Eigen::MatrixXd& m) {
    auto out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      auto r = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
      out.push_back(r);
    }
    return out;
  };
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"coefficients", rows(params.coefficients)},
          {"sigmas", vec(params.sigmas)},
          {"transition", rows(params.transition)},
          {"initial_probs", vec(params.initial_probs)}};
}

MSParams params_from_json(const nlohmann::json& j) {
  auto matrix = [](const nlohmann::json& a) {
    const auto r = static_cast<Eigen::Index>(a.size());
    const auto c = r ? static_cast<Eigen::Index>(a.at(0).size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      if (static_cast<Eigen::Index>(a.at(i).size()) != c) throw InputError("ragged matrix in fixture");
      for (Eigen::Index k = 0; k < c; ++k) m(i, k) = a.at(i).at(k).get<double>();
    }
    return m;
  };
  auto vector = [](const nlohmann::json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a.at(i).get<double>();
    return v;
  };
  try {
    MSParams p;
    p.coefficients = matrix(j.at("coefficients"));
    p.sigmas = vector(j.at("sigmas"));
    p.transition = matrix(j.at("transition"));
    p.initial_probs = j.contains("initial_probs") ? vector(j.at("initial_probs"))
                                                  : stationary_distribution(p.transition);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid parameter fixture: ") + e.what());
  }
}

}  // namespace herding

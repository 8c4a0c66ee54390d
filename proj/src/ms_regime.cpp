#include "herding/ms_regime.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <thread>

#include "herding/csv.hpp"
#include "herding/error.hpp"
#include "herding/rng.hpp"

namespace herding {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

void MSParams::validate(Eigen::Index n_columns) const {
  const auto S = n_regimes();
  if (S < 1) throw InputError("MS parameters: at least one regime required");
  if (coefficients.rows() != S || coefficients.cols() != n_columns)
    throw InputError("MS parameters: coefficient matrix must be S x p");
  if (transition.rows() != S || transition.cols() != S)
    throw InputError("MS parameters: transition matrix must be S x S");
  if (initial_probs.size() != S) throw InputError("MS parameters: initial_probs must have S entries");
  if (!(sigmas.array() > 0.0).all() || !sigmas.allFinite())
    throw InputError("MS parameters: sigmas must be positive and finite");
  for (Eigen::Index i = 0; i < S; ++i) {
    if ((transition.row(i).array() < 0.0).any() || (transition.row(i).array() > 1.0).any() ||
        std::abs(transition.row(i).sum() - 1.0) > 1e-10)
      throw InputError("MS parameters: transition matrix is not row-stochastic");
  }
  if ((initial_probs.array() < 0.0).any() || std::abs(initial_probs.sum() - 1.0) > 1e-10)
    throw InputError("MS parameters: initial_probs is not a probability vector");
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition) {
  const auto S = transition.rows();
  if (S == 1) return Eigen::VectorXd::Ones(1);
  Eigen::MatrixXd A(S + 1, S);
  A.topRows(S) = transition.transpose() - Eigen::MatrixXd::Identity(S, S);
  A.row(S).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(S + 1);
  b(S) = 1.0;
  Eigen::VectorXd pi = A.completeOrthogonalDecomposition().solve(b);
  pi = pi.cwiseMax(0.0);
  const double total = pi.sum();
  if (!(total > 0.0) || !std::isfinite(total)) return Eigen::VectorXd::Constant(S, 1.0 / S);
  return pi / total;
}

FilterResult hamilton_filter(const MSParams& params, const Design& d) {
  return hamilton_filter(params, d.y, d.X, d.dates);
}

FilterResult hamilton_filter(const MSParams& params, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& X, std::span<const Date> dates) {
  params.validate(X.cols());
  const auto T = y.size();
  const auto S = params.n_regimes();
  FilterResult out;
  out.filtered.resize(T, S);
  out.predicted.resize(T, S);

  const Eigen::MatrixXd fitted = X * params.coefficients.transpose();  // T x S
  const Eigen::ArrayXd log_sigma = params.sigmas.array().log();
  const Eigen::ArrayXd inv_sigma = params.sigmas.array().inverse();

  Eigen::VectorXd pred = params.initial_probs;
  Eigen::ArrayXd logw(S);
  double loglik = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    out.predicted.row(t) = pred.transpose();
    double m = kNegInf;
    for (Eigen::Index s = 0; s < S; ++s) {
      if (pred(s) <= 0.0) {
        logw(s) = kNegInf;
        continue;
      }
      const double z = (y(t) - fitted(t, s)) * inv_sigma(s);
      logw(s) = std::log(pred(s)) - kLogSqrt2Pi - log_sigma(s) - 0.5 * z * z;
      m = std::max(m, logw(s));
    }
    if (m == kNegInf || !std::isfinite(m)) {
      const auto when = static_cast<std::size_t>(t) < dates.size() ? dates[t].iso()
                                                                   : "row " + std::to_string(t);
      throw EstimationError("zero total likelihood at " + when);
    }
    const Eigen::ArrayXd w = (logw - m).exp();
    const double total = w.sum();
    loglik += m + std::log(total);
    out.filtered.row(t) = (w / total).matrix().transpose();
    pred = params.transition.transpose() * out.filtered.row(t).transpose();
  }
  out.loglik = loglik;
  return out;
}

Eigen::MatrixXd kim_smoother(const Eigen::MatrixXd& filtered, const Eigen::MatrixXd& predicted,
                             const Eigen::MatrixXd& transition) {
  const auto T = filtered.rows();
  const auto S = filtered.cols();
  Eigen::MatrixXd smoothed(T, S);
  if (T == 0) return smoothed;
  smoothed.row(T - 1) = filtered.row(T - 1);
  Eigen::VectorXd ratio(S);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index j = 0; j < S; ++j)
      ratio(j) = predicted(t + 1, j) > 0.0 ? smoothed(t + 1, j) / predicted(t + 1, j) : 0.0;
    Eigen::VectorXd row = filtered.row(t).transpose().cwiseProduct(transition * ratio);
    const double total = row.sum();
    if (total > 0.0) smoothed.row(t) = (row / total).transpose();
    else smoothed.row(t) = filtered.row(t);
  }
  return smoothed;
}

void MSSpec::validate() const {
  if (n_regimes < 1 || n_regimes > 6) throw InputError("regime count must lie in [1, 6]");
  if (!(tol > 0.0)) throw InputError("tolerance must be positive");
  if (max_iter < 1) throw InputError("max_iter must be at least 1");
  if (n_restarts < 1) throw InputError("n_restarts must be at least 1");
}

int ms_parameter_count(int n_regimes, int n_switching, int n_pooled, bool switching_variance) {
  return n_regimes * n_switching + n_pooled + (switching_variance ? n_regimes : 1) +
         n_regimes * (n_regimes - 1);
}

namespace {

// Regime failed to keep enough posterior mass during EM.
struct StarvedRegime {
  int regime;
  double occupancy;
};

struct Layout {
  std::vector<Eigen::Index> pooled;
  std::vector<Eigen::Index> switching;
  std::vector<bool> mask;
};

Layout make_layout(const Design& d, bool switching_intercept) {
  Layout l;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const bool sw = j != 0 || switching_intercept;
    l.mask.push_back(sw);
    (sw ? l.switching : l.pooled).push_back(j);
  }
  return l;
}

struct EStep {
  double loglik = 0.0;
  Eigen::MatrixXd filtered;
  Eigen::MatrixXd smoothed;
  Eigen::MatrixXd transitions;  // sum_t P(s_t = i, s_{t+1} = j | Y)
};

EStep e_step(const MSParams& params, const Design& d) {
  auto f = hamilton_filter(params, d);
  EStep e;
  e.loglik = f.loglik;
  e.smoothed = kim_smoother(f.filtered, f.predicted, params.transition);
  const auto T = d.rows();
  const auto S = params.n_regimes();
  e.transitions = Eigen::MatrixXd::Zero(S, S);
  Eigen::VectorXd ratio(S);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    for (Eigen::Index j = 0; j < S; ++j)
      ratio(j) = f.predicted(t + 1, j) > 0.0 ? e.smoothed(t + 1, j) / f.predicted(t + 1, j) : 0.0;
    for (Eigen::Index i = 0; i < S; ++i) {
      const double fi = f.filtered(t, i);
      if (fi == 0.0) continue;
      for (Eigen::Index j = 0; j < S; ++j) e.transitions(i, j) += fi * params.transition(i, j) * ratio(j);
    }
  }
  e.filtered = std::move(f.filtered);
  return e;
}

// Weighted least squares over all coefficients given regime weights
// gamma(t, s) / sigma_s^2; pooled columns share one coefficient.
Eigen::MatrixXd solve_coefficients(const Design& d, const Layout& layout,
                                   const Eigen::MatrixXd& gamma, const Eigen::VectorXd& sigmas) {
  const auto S = gamma.cols();
  const auto p = d.cols();
  const auto pp = static_cast<Eigen::Index>(layout.pooled.size());
  const auto ps = static_cast<Eigen::Index>(layout.switching.size());
  const auto dim = pp + S * ps;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index s = 0; s < S; ++s) {
    const Eigen::VectorXd w = gamma.col(s) / (sigmas(s) * sigmas(s));
    const Eigen::MatrixXd Xw = d.X.array().colwise() * w.array();
    const Eigen::MatrixXd M = d.X.transpose() * Xw;
    const Eigen::VectorXd v = Xw.transpose() * d.y;
    const auto off = pp + s * ps;
    for (Eigen::Index a = 0; a < pp; ++a) {
      b(a) += v(layout.pooled[a]);
      for (Eigen::Index c = 0; c < pp; ++c) A(a, c) += M(layout.pooled[a], layout.pooled[c]);
      for (Eigen::Index c = 0; c < ps; ++c) {
        A(a, off + c) = M(layout.pooled[a], layout.switching[c]);
        A(off + c, a) = A(a, off + c);
      }
    }
    for (Eigen::Index a = 0; a < ps; ++a) {
      b(off + a) = v(layout.switching[a]);
      for (Eigen::Index c = 0; c < ps; ++c) A(off + a, off + c) = M(layout.switching[a], layout.switching[c]);
    }
  }
  // Jacobi scaling keeps squared-return columns well conditioned.
  Eigen::VectorXd scale = A.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd As = scale.asDiagonal() * A * scale.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(As);
  Eigen::VectorXd z;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-14) {
    z = ldlt.solve(scale.asDiagonal() * b);
  } else {
    z = As.completeOrthogonalDecomposition().solve(scale.asDiagonal() * b);
  }
  const Eigen::VectorXd beta = scale.asDiagonal() * z;

  Eigen::MatrixXd coef(S, p);
  for (Eigen::Index s = 0; s < S; ++s) {
    for (Eigen::Index a = 0; a < pp; ++a) coef(s, layout.pooled[a]) = beta(a);
    for (Eigen::Index a = 0; a < ps; ++a) coef(s, layout.switching[a]) = beta(pp + s * ps + a);
  }
  return coef;
}

Eigen::VectorXd solve_sigmas(const Design& d, const Eigen::MatrixXd& gamma,
                             const Eigen::MatrixXd& coef, bool switching_variance,
                             double variance_floor) {
  const auto S = gamma.cols();
  Eigen::MatrixXd resid2 = (d.X * coef.transpose()).colwise() - d.y;
  resid2 = resid2.array().square().matrix();
  Eigen::VectorXd sig(S);
  if (switching_variance) {
    for (Eigen::Index s = 0; s < S; ++s) {
      const double mass = gamma.col(s).sum();
      const double v = mass > 0.0 ? gamma.col(s).dot(resid2.col(s)) / mass : variance_floor;
      sig(s) = std::sqrt(std::max(v, variance_floor));
    }
  } else {
    const double v = gamma.cwiseProduct(resid2).sum() / static_cast<double>(d.rows());
    sig.setConstant(std::sqrt(std::max(v, variance_floor)));
  }
  return sig;
}

// Transition part of the expected complete-data log-likelihood, including
// the initial-state term through the stationary distribution.
double transition_objective(const Eigen::MatrixXd& P, const Eigen::MatrixXd& counts,
                            const Eigen::VectorXd& first) {
  double q = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j)
      if (counts(i, j) > 0.0) q += counts(i, j) * (P(i, j) > 0.0 ? std::log(P(i, j)) : kNegInf);
  const Eigen::VectorXd pi = stationary_distribution(P);
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    if (first(i) > 0.0) q += first(i) * (pi(i) > 0.0 ? std::log(pi(i)) : kNegInf);
  return q;
}

// Count-based update; backtracks toward the current matrix if the initial
// state term would make the step decrease the objective.
Eigen::MatrixXd update_transition(const Eigen::MatrixXd& current, const Eigen::MatrixXd& counts,
                                  const Eigen::VectorXd& first) {
  const auto S = current.rows();
  Eigen::MatrixXd target = current;
  for (Eigen::Index i = 0; i < S; ++i) {
    const double row = counts.row(i).sum();
    if (row > 0.0) target.row(i) = counts.row(i) / row;
  }
  const double q0 = transition_objective(current, counts, first);
  for (double step = 1.0; step > 1e-6; step *= 0.5) {
    Eigen::MatrixXd cand = (1.0 - step) * current + step * target;
    for (Eigen::Index i = 0; i < S; ++i) cand.row(i) /= cand.row(i).sum();
    if (transition_objective(cand, counts, first) >= q0) return cand;
  }
  return current;
}

struct RestartResult {
  MSParams params;
  EStep estep;
  std::vector<double> trace;
  bool converged = false;
  int n_iter = 0;
};

void check_occupancy(const Eigen::MatrixXd& gamma, Eigen::Index p) {
  for (Eigen::Index s = 0; s < gamma.cols(); ++s) {
    const double occ = gamma.col(s).sum();
    if (occ < static_cast<double>(p)) throw StarvedRegime{static_cast<int>(s), occ};
  }
}

RestartResult run_restart(const Design& d, const Layout& layout, const MSSpec& spec, int restart) {
  const auto T = d.rows();
  const auto S = static_cast<Eigen::Index>(spec.n_regimes);
  const auto p = d.cols();
  double ybar = d.y.mean();
  const double var_y = (d.y.array() - ybar).square().sum() / static_cast<double>(T);
  const double floor = 1e-12 * std::max(var_y, std::numeric_limits<double>::min());

  // Contiguous blocks, circularly rotated by a seed-dependent offset.
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(restart)));
  const auto offset = restart == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(T)));
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(T, S);
  std::vector<Eigen::Index> label(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto pos = (t + offset) % T;
    label[t] = std::min<Eigen::Index>(S - 1, pos * S / T);
    gamma(t, label[t]) = 1.0;
  }
  Eigen::MatrixXd counts = Eigen::MatrixXd::Ones(S, S);
  for (Eigen::Index t = 0; t + 1 < T; ++t) counts(label[t], label[t + 1]) += 1.0;

  MSParams params;
  {
    const Eigen::VectorXd ols_beta = d.X.colPivHouseholderQr().solve(d.y);
    const double ols_var = (d.y - d.X * ols_beta).squaredNorm() / static_cast<double>(T);
    params.coefficients = solve_coefficients(
        d, layout, gamma, Eigen::VectorXd::Constant(S, std::sqrt(std::max(ols_var, floor))));
  }
  params.sigmas = solve_sigmas(d, gamma, params.coefficients, spec.switching_variance, floor);
  params.transition = counts.array().colwise() / counts.rowwise().sum().array();
  params.initial_probs = stationary_distribution(params.transition);

  RestartResult r;
  r.estep = e_step(params, d);
  check_occupancy(r.estep.smoothed, p);
  r.trace.push_back(r.estep.loglik);
  for (int iter = 1; iter <= spec.max_iter; ++iter) {
    const auto& g = r.estep.smoothed;
    MSParams next;
    next.coefficients = solve_coefficients(d, layout, g, params.sigmas);
    next.sigmas = solve_sigmas(d, g, next.coefficients, spec.switching_variance, floor);
    next.transition = update_transition(params.transition, r.estep.transitions, g.row(0).transpose());
    next.initial_probs = stationary_distribution(next.transition);
    EStep e = e_step(next, d);
    check_occupancy(e.smoothed, p);
    const double prev = r.estep.loglik;
    params = std::move(next);
    r.estep = std::move(e);
    r.trace.push_back(r.estep.loglik);
    r.n_iter = iter;
    if (std::abs(r.estep.loglik - prev) / std::max(1.0, std::abs(prev)) < spec.tol) {
      r.converged = true;
      break;
    }
  }
  r.params = std::move(params);
  return r;
}

// Free-parameter vector for the numerical Hessian: pooled and switching
// coefficients, log sigmas, and per-row log-odds of interior transition
// probabilities against the row's largest entry.
struct Packing {
  Layout layout;
  bool switching_variance = true;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> free_cells;  // (row, col)
  std::vector<Eigen::Index> reference;                            // per row

  Eigen::Index n_coef(Eigen::Index S) const {
    return static_cast<Eigen::Index>(layout.pooled.size() + layout.switching.size() * S);
  }

  Eigen::VectorXd pack(const MSParams& prm) const {
    const auto S = prm.n_regimes();
    const auto nc = n_coef(S);
    const Eigen::Index nsig = switching_variance ? S : 1;
    Eigen::VectorXd th(nc + nsig + static_cast<Eigen::Index>(free_cells.size()));
    Eigen::Index k = 0;
    for (auto j : layout.pooled) th(k++) = prm.coefficients(0, j);
    for (Eigen::Index s = 0; s < S; ++s)
      for (auto j : layout.switching) th(k++) = prm.coefficients(s, j);
    for (Eigen::Index s = 0; s < nsig; ++s) th(k++) = std::log(prm.sigmas(s));
    for (auto [i, j] : free_cells) th(k++) = std::log(prm.transition(i, j) / prm.transition(i, reference[i]));
    return th;
  }

  MSParams unpack(const Eigen::VectorXd& th, Eigen::Index S, Eigen::Index p) const {
    MSParams prm;
    prm.coefficients.resize(S, p);
    Eigen::Index k = 0;
    for (auto j : layout.pooled) prm.coefficients.col(j).setConstant(th(k++));
    for (Eigen::Index s = 0; s < S; ++s)
      for (auto j : layout.switching) prm.coefficients(s, j) = th(k++);
    prm.sigmas.resize(S);
    if (switching_variance) {
      for (Eigen::Index s = 0; s < S; ++s) prm.sigmas(s) = std::exp(th(k++));
    } else {
      prm.sigmas.setConstant(std::exp(th(k++)));
    }
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(S, S);
    for (Eigen::Index i = 0; i < S; ++i) w(i, reference[i]) = 1.0;
    for (auto [i, j] : free_cells) w(i, j) = std::exp(th(k++));
    prm.transition = w.array().colwise() / w.rowwise().sum().array();
    prm.initial_probs = stationary_distribution(prm.transition);
    return prm;
  }
};

}  // namespace

Eigen::MatrixXd observed_information_se(const MSParams& params, const Design& d,
                                        const std::vector<bool>& switching,
                                        bool switching_variance) {
  const auto S = params.n_regimes();
  const auto p = d.cols();
  Packing pk;
  for (Eigen::Index j = 0; j < p; ++j) {
    pk.layout.mask.push_back(switching[j]);
    (switching[j] ? pk.layout.switching : pk.layout.pooled).push_back(j);
  }
  pk.switching_variance = switching_variance;
  for (Eigen::Index i = 0; i < S; ++i) {
    Eigen::Index ref = 0;
    params.transition.row(i).maxCoeff(&ref);
    pk.reference.push_back(ref);
    for (Eigen::Index j = 0; j < S; ++j)
      if (j != ref && params.transition(i, j) > 1e-10) pk.free_cells.emplace_back(i, j);
  }

  const Eigen::VectorXd theta = pk.pack(params);
  const auto n = theta.size();
  auto ll = [&](const Eigen::VectorXd& th) {
    try {
      return hamilton_filter(pk.unpack(th, S, p), d).loglik;
    } catch (const std::exception&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) h(i) = 1e-4 * std::max(1.0, std::abs(theta(i)));

  const double f0 = ll(theta);
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp(i) += h(i);
    tm(i) -= h(i);
    H(i, i) = (ll(tp) - 2.0 * f0 + ll(tm)) / (h(i) * h(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      Eigen::VectorXd pp = theta, pm = theta, mp = theta, mm = theta;
      pp(i) += h(i); pp(j) += h(j);
      pm(i) += h(i); pm(j) -= h(j);
      mp(i) -= h(i); mp(j) += h(j);
      mm(i) -= h(i); mm(j) -= h(j);
      H(i, j) = H(j, i) = (ll(pp) - ll(pm) - ll(mp) + ll(mm)) / (4.0 * h(i) * h(j));
    }
  }

  Eigen::MatrixXd se = Eigen::MatrixXd::Constant(S, p, std::numeric_limits<double>::quiet_NaN());
  if (!H.allFinite()) return se;
  const Eigen::MatrixXd info = -H;
  Eigen::MatrixXd cov;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    cov = ldlt.solve(Eigen::MatrixXd::Identity(n, n));
  } else {
    cov = info.completeOrthogonalDecomposition().pseudoInverse();
  }
  auto sd = [&](Eigen::Index k) {
    const double v = cov(k, k);
    return v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
  };
  Eigen::Index k = 0;
  for (auto j : pk.layout.pooled) {
    se.col(j).setConstant(sd(k));
    ++k;
  }
  for (Eigen::Index s = 0; s < S; ++s)
    for (auto j : pk.layout.switching) se(s, j) = sd(k++);
  return se;
}

MSFit fit_ms(const Design& d, const MSSpec& spec) {
  spec.validate();
  d.validate();
  const auto T = d.rows();
  const auto p = d.cols();
  const auto S = static_cast<Eigen::Index>(spec.n_regimes);
  if (T <= S * p)
    throw InputError("sample of " + std::to_string(T) + " rows too short for " +
                     std::to_string(S) + " regimes x " + std::to_string(p) + " columns");
  const Layout layout = make_layout(d, spec.switching_intercept);

  const auto n = static_cast<std::size_t>(spec.n_restarts);
  std::vector<std::optional<RestartResult>> results(n);
  std::vector<std::string> failures(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < n;) {
      try {
        results[r] = run_restart(d, layout, spec, static_cast<int>(r));
      } catch (const StarvedRegime& s) {
        failures[r] = "regime " + std::to_string(s.regime + 1) + " starved (occupancy " +
                      csv::format_double(s.occupancy) + " < " + std::to_string(p) + ")";
      } catch (const std::exception& e) {
        failures[r] = e.what();
      }
    }
  };
  unsigned hw = spec.max_threads > 0 ? static_cast<unsigned>(spec.max_threads)
                                     : std::max(1u, std::thread::hardware_concurrency());
  const auto n_threads = std::min<std::size_t>(hw, n);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }

  std::optional<std::size_t> best;
  std::vector<double> restart_ll(n, std::numeric_limits<double>::quiet_NaN());
  bool any_starved = false;
  for (std::size_t r = 0; r < n; ++r) {
    if (!results[r]) {
      any_starved |= failures[r].find("starved") != std::string::npos;
      continue;
    }
    restart_ll[r] = results[r]->estep.loglik;
    if (!results[r]->converged) continue;
    if (!best || results[r]->estep.loglik > results[*best]->estep.loglik) best = r;
  }
  if (!best) {
    if (any_starved && std::none_of(results.begin(), results.end(), [](auto& x) { return x.has_value(); }))
      throw EstimationError("every restart starved a regime (" + failures[0] +
                            "); try fewer regimes");
    throw EstimationError("no restart converged within " + std::to_string(spec.max_iter) +
                          " iterations for " + std::to_string(S) + " regime(s)");
  }

  auto& r = *results[*best];
  MSFit fit;
  fit.params = r.params;
  fit.filtered = r.estep.filtered;
  fit.smoothed = r.estep.smoothed;
  fit.loglik = r.estep.loglik;
  fit.converged = r.converged;
  fit.n_iter = r.n_iter;
  fit.restart_index = static_cast<int>(*best);
  fit.loglik_trace = r.trace;
  fit.restart_logliks = restart_ll;
  fit.switching = layout.mask;
  fit.column_names = d.column_names;
  fit.dates = d.dates;
  fit.kind = d.kind;
  fit.n_params = ms_parameter_count(static_cast<int>(S), static_cast<int>(layout.switching.size()),
                                    static_cast<int>(layout.pooled.size()), spec.switching_variance);
  fit.aic = 2.0 * fit.n_params - 2.0 * fit.loglik;
  fit.occupancy = fit.smoothed.colwise().sum().transpose();

  fit.regime_r2.resize(S);
  const Eigen::MatrixXd fitted = d.X * fit.params.coefficients.transpose();
  for (Eigen::Index s = 0; s < S; ++s) {
    const auto g = fit.smoothed.col(s);
    const double mass = g.sum();
    const double ybar = g.dot(d.y) / mass;
    const double ssr = g.dot((d.y - fitted.col(s)).array().square().matrix());
    const double sst = g.dot((d.y.array() - ybar).square().matrix());
    fit.regime_r2(s) = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 0.0;
  }
  fit.se = observed_information_se(fit.params, d, fit.switching, spec.switching_variance);
  return order_regimes(fit);
}

namespace {

std::vector<double> ordering_key(const MSFit& fit) {
  const auto S = fit.n_regimes();
  std::vector<double> key(static_cast<std::size_t>(S));
  auto col = [&](std::string_view name) -> std::optional<Eigen::Index> {
    for (std::size_t i = 0; i < fit.column_names.size(); ++i)
      if (fit.column_names[i] == name) return static_cast<Eigen::Index>(i);
    return std::nullopt;
  };
  const auto sq = col("rm_sq");
  const auto down = col("down_rm_sq");
  const auto up = col("up_rm_sq");
  for (Eigen::Index s = 0; s < S; ++s) {
    if (sq) key[s] = fit.params.coefficients(s, *sq);
    else if (down && up) key[s] = fit.params.coefficients(s, *down) + fit.params.coefficients(s, *up);
    else key[s] = fit.params.sigmas(s);
  }
  return key;
}

}  // namespace

MSFit order_regimes(const MSFit& fit) {
  const auto S = fit.n_regimes();
  const auto key = ordering_key(fit);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(S));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](auto a, auto b) {
    if (key[a] != key[b]) return key[a] < key[b];
    return fit.params.sigmas(a) < fit.params.sigmas(b);
  });

  MSFit out = fit;
  auto permute_rows = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd r(m.rows(), m.cols());
    for (Eigen::Index a = 0; a < S; ++a) r.row(a) = m.row(perm[a]);
    return r;
  };
  auto permute_cols = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd r(m.rows(), m.cols());
    for (Eigen::Index a = 0; a < S; ++a) r.col(a) = m.col(perm[a]);
    return r;
  };
  auto permute_vec = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd r(v.size());
    for (Eigen::Index a = 0; a < S; ++a) r(a) = v(perm[a]);
    return r;
  };
  out.params.coefficients = permute_rows(fit.params.coefficients);
  out.params.sigmas = permute_vec(fit.params.sigmas);
  out.params.initial_probs = permute_vec(fit.params.initial_probs);
  for (Eigen::Index a = 0; a < S; ++a)
    for (Eigen::Index b = 0; b < S; ++b) out.params.transition(a, b) = fit.params.transition(perm[a], perm[b]);
  if (fit.se.rows() == S) out.se = permute_rows(fit.se);
  if (fit.filtered.cols() == S) out.filtered = permute_cols(fit.filtered);
  if (fit.smoothed.cols() == S) out.smoothed = permute_cols(fit.smoothed);
  if (fit.regime_r2.size() == S) out.regime_r2 = permute_vec(fit.regime_r2);
  if (fit.occupancy.size() == S) out.occupancy = permute_vec(fit.occupancy);
  return out;
}

RegimeSelection select_regime_count(const Design& d, const std::set<int>& candidates,
                                    const MSSpec& defaults) {
  if (candidates.empty()) throw InputError("no regime-count candidates given");
  RegimeSelection sel;
  std::optional<MSFit> best;
  for (int S : candidates) {
    if (S < 1) throw InputError("regime-count candidates must be >= 1");
    MSSpec spec = defaults;
    spec.n_regimes = S;
    AicRow row;
    row.n_regimes = S;
    try {
      MSFit fit = fit_ms(d, spec);
      row.aic = fit.aic;
      row.loglik = fit.loglik;
      row.n_params = fit.n_params;
      row.converged = fit.converged;
      if (!best || fit.aic < best->aic) best = std::move(fit);
    } catch (const std::exception& e) {
      row.error = e.what();
      sel.warnings.push_back("S=" + std::to_string(S) + " excluded: " + e.what());
    }
    sel.table.push_back(std::move(row));
  }
  if (!best) throw EstimationError("no candidate regime count could be estimated");
  sel.best = std::move(*best);
  return sel;
}

std::string_view to_string(HerdingLabel l) {
  switch (l) {
    case HerdingLabel::Herding: return "herding";
    case HerdingLabel::AdverseHerding: return "adverse_herding";
    case HerdingLabel::Neutral: break;
  }
  return "neutral";
}

HerdingLabel classify_coefficient(double coef, double t_stat, double alpha) {
  if (std::isnan(t_stat) || two_sided_p(t_stat) >= alpha) return HerdingLabel::Neutral;
  if (coef < 0.0) return HerdingLabel::Herding;
  if (coef > 0.0) return HerdingLabel::AdverseHerding;
  return HerdingLabel::Neutral;
}

std::vector<RegimeVerdict> classify_regimes(const MSFit& fit, double alpha) {
  std::vector<std::pair<std::string, std::string>> targets;
  auto has = [&](const std::string& n) {
    return std::find(fit.column_names.begin(), fit.column_names.end(), n) != fit.column_names.end();
  };
  if (has("rm_sq")) targets.emplace_back("all", "rm_sq");
  if (has("down_rm_sq")) targets.emplace_back("down", "down_rm_sq");
  if (has("up_rm_sq")) targets.emplace_back("up", "up_rm_sq");

  const Eigen::MatrixXd t = fit.t_stats();
  std::vector<RegimeVerdict> out;
  for (Eigen::Index s = 0; s < fit.n_regimes(); ++s) {
    for (const auto& [state, name] : targets) {
      const auto j = static_cast<Eigen::Index>(
          std::find(fit.column_names.begin(), fit.column_names.end(), name) - fit.column_names.begin());
      RegimeVerdict v;
      v.regime = static_cast<int>(s) + 1;
      v.market_state = state;
      v.column = name;
      v.gamma_sq = fit.params.coefficients(s, j);
      v.t_stat = t(s, j);
      v.alpha = alpha;
      v.label = classify_coefficient(v.gamma_sq, v.t_stat, alpha);
      out.push_back(std::move(v));
    }
  }
  return out;
}

namespace {

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

nlohmann::json to_json(const RegimeVerdict& v) {
  return {{"regime", v.regime},       {"market_state", v.market_state},
          {"column", v.column},       {"gamma_sq", number(v.gamma_sq)},
          {"t", number(v.t_stat)},    {"label", std::string(to_string(v.label))},
          {"alpha", v.alpha}};
}

nlohmann::json to_json(const AicRow& row) {
  return {{"n_regimes", row.n_regimes},
          {"aic", row.aic ? number(*row.aic) : nlohmann::json()},
          {"loglik", row.loglik ? number(*row.loglik) : nlohmann::json()},
          {"n_params", row.n_params},
          {"converged", row.converged},
          {"error", row.error.empty() ? nlohmann::json() : nlohmann::json(row.error)}};
}

nlohmann::json ms_report_json(const MSFit& fit, const std::vector<RegimeVerdict>& verdicts,
                              const FitContext& ctx) {
  const auto S = fit.n_regimes();
  const Eigen::MatrixXd t = fit.t_stats();
  auto regimes = nlohmann::json::array();
  for (Eigen::Index s = 0; s < S; ++s) {
    auto coef = nlohmann::json::array(), se = nlohmann::json::array(), ts = nlohmann::json::array(),
         stars = nlohmann::json::array();
    for (Eigen::Index j = 0; j < fit.params.coefficients.cols(); ++j) {
      coef.push_back(number(fit.params.coefficients(s, j)));
      se.push_back(number(fit.se(s, j)));
      ts.push_back(number(t(s, j)));
      stars.push_back(significance_stars(t(s, j)));
    }
    auto v = nlohmann::json::array();
    for (const auto& rv : verdicts)
      if (rv.regime == s + 1) v.push_back(to_json(rv));
    const double stay = fit.params.transition(s, s);
    regimes.push_back({{"regime", s + 1},
                       {"coef", coef},
                       {"se", se},
                       {"t", ts},
                       {"stars", stars},
                       {"sigma", number(fit.params.sigmas(s))},
                       {"r2", number(fit.regime_r2.size() ? fit.regime_r2(s) : NAN)},
                       {"occupancy", number(fit.occupancy.size() ? fit.occupancy(s) : NAN)},
                       {"expected_duration", stay < 1.0 ? number(1.0 / (1.0 - stay)) : nlohmann::json()},
                       {"verdict", v}});
  }
  auto P = nlohmann::json::array();
  for (Eigen::Index i = 0; i < S; ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < S; ++j) row.push_back(fit.params.transition(i, j));
    P.push_back(row);
  }
  auto sw = nlohmann::json::array();
  for (bool b : fit.switching) sw.push_back(b);
  auto restarts = nlohmann::json::array();
  for (double v : fit.restart_logliks) restarts.push_back(number(v));
  return {{"model", ctx.model},
          {"columns", fit.column_names},
          {"switching", sw},
          {"n_regimes", S},
          {"regimes", regimes},
          {"transition", P},
          {"initial_probs", std::vector<double>(fit.params.initial_probs.data(),
                                                fit.params.initial_probs.data() + S)},
          {"loglik", number(fit.loglik)},
          {"aic", number(fit.aic)},
          {"n_params", fit.n_params},
          {"nobs", fit.smoothed.rows()},
          {"lag_count", ctx.lag_count},
          {"aggregator", ctx.aggregator},
          {"se_method", fit.se_method},
          {"convergence",
           {{"converged", fit.converged},
            {"iterations", fit.n_iter},
            {"restart", fit.restart_index},
            {"restart_logliks", restarts}}}};
}

void write_smoothed_csv(std::ostream& out, const MSFit& fit) {
  out << "date";
  for (Eigen::Index s = 0; s < fit.n_regimes(); ++s) out << ",regime_" << s + 1;
  out << '\n';
  for (Eigen::Index t = 0; t < fit.smoothed.rows(); ++t) {
    out << (static_cast<std::size_t>(t) < fit.dates.size() ? fit.dates[t].iso() : std::to_string(t));
    for (Eigen::Index s = 0; s < fit.n_regimes(); ++s) out << ',' << csv::format_double(fit.smoothed(t, s));
    out << '\n';
  }
}

}  // namespace herding

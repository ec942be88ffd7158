// Point estimators of the correlation lengths: maximum likelihood on the
// integrated likelihood (trend and variance already marginalized out) and a
// posterior-mode variant whose objective adds the sum of the log conditional
// prior densities.  That sum is a surrogate: the joint reference posterior is
// defined through its conditionals, not through a closed-form joint density.
// It reduces to the exact posterior mode when r = 1.
//
// Both optimizers run a multi-start Nelder-Mead simplex in log theta.  The
// integrated likelihood is often flat and can be multimodal, so restarts come
// from a Latin hypercube over the (log) search box.  Iterates outside the box
// evaluate to -inf, which the simplex treats as a wall; a best point that
// lands on the box edge is flagged as not converged.
#pragma once

#include <krigor/linear_model.hpp>
#include <krigor/reference_prior.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

namespace krigor {

struct OptimOptions {
  int restarts = 10;
  std::uint64_t seed = 0;
  double theta_lo = 1e-3;  // search box, same for every coordinate
  double theta_hi = 1e3;
  int max_iters = 400;     // simplex iterations per restart
  double f_tol = 1e-9;     // value spread at which a restart stops
  Parametrization param = Parametrization::Theta;

  void validate() const {
    if (restarts < 1) throw std::invalid_argument("OptimOptions: restarts < 1");
    if (!(theta_lo > 0.0) || !(theta_hi > theta_lo))
      throw std::invalid_argument("OptimOptions: bad search box");
    if (max_iters < 1) throw std::invalid_argument("OptimOptions: max_iters < 1");
  }
};

struct RestartTrace {
  Vector init;       // log-parametrization start point
  Vector best;       // log-parametrization end point
  double init_value = -std::numeric_limits<double>::infinity();
  double best_value = -std::numeric_limits<double>::infinity();
  int iters = 0;
  bool converged = false;
};

struct OptimResult {
  LengthVector theta;   // always reported as correlation lengths
  double value = -std::numeric_limits<double>::infinity();
  int n_restarts = 0;
  bool converged = false;
  std::vector<RestartTrace> trace;
};

// Log objective over the optimization variable x (= log theta or log mu).
using LogObjective = std::function<double(const Vector&)>;

// Log conditional prior density at coordinate i; injectable so the
// posterior-mode objective can be tested against a constant stub.
using LogConditionalPrior =
    std::function<double(int, const Model&, const CorrelationState&)>;

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Latin hypercube over [lo, hi]^r in the log variable: one stratum per
// restart and coordinate, independently permuted, jittered within strata.
inline std::vector<Vector> latin_hypercube(int count, int r, double lo,
                                           double hi, Rng& rng) {
  std::vector<std::vector<int>> perm(r, std::vector<int>(count));
  for (int j = 0; j < r; ++j) {
    std::iota(perm[j].begin(), perm[j].end(), 0);
    for (int k = count - 1; k > 0; --k)
      std::swap(perm[j][k],
                perm[j][static_cast<int>(rng.uniform_int(k + 1))]);
  }
  std::vector<Vector> out(count, Vector(r));
  const double pad = 0.02 * (hi - lo);  // keep inits interior
  for (int k = 0; k < count; ++k)
    for (int j = 0; j < r; ++j) {
      const double u = (perm[j][k] + rng.uniform01()) / count;
      out[k][j] = lo + pad + u * (hi - lo - 2.0 * pad);
    }
  return out;
}

// Nelder-Mead ascent (maximization) with standard coefficients.
inline RestartTrace nelder_mead(const LogObjective& f, const Vector& x0,
                                int max_iters, double f_tol) {
  const int r = static_cast<int>(x0.size());
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

  std::vector<Vector> pts(r + 1, x0);
  std::vector<double> val(r + 1);
  for (int j = 0; j < r; ++j) pts[j + 1][j] += 0.25;
  for (int k = 0; k <= r; ++k) val[k] = f(pts[k]);

  RestartTrace tr;
  tr.init = x0;
  tr.init_value = val[0];

  std::vector<int> ord(r + 1);
  int it = 0;
  for (; it < max_iters; ++it) {
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(),
              [&](int a, int b) { return val[a] > val[b]; });
    const int best = ord[0], worst = ord[r], second_worst = ord[r - 1];
    if (std::isfinite(val[best]) && std::isfinite(val[worst]) &&
        val[best] - val[worst] < f_tol) {
      tr.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(r);
    for (int k = 0; k <= r; ++k)
      if (k != worst) centroid += pts[k];
    centroid /= r;

    const Vector xr = centroid + alpha * (centroid - pts[worst]);
    const double fr = f(xr);
    if (fr > val[ord[0]]) {
      const Vector xe = centroid + gamma * (centroid - pts[worst]);
      const double fe = f(xe);
      if (fe > fr) {
        pts[worst] = xe;
        val[worst] = fe;
      } else {
        pts[worst] = xr;
        val[worst] = fr;
      }
      continue;
    }
    if (fr > val[second_worst]) {
      pts[worst] = xr;
      val[worst] = fr;
      continue;
    }
    const Vector xc = centroid + rho * (pts[worst] - centroid);
    const double fc = f(xc);
    if (fc > val[worst]) {
      pts[worst] = xc;
      val[worst] = fc;
      continue;
    }
    for (int k = 0; k <= r; ++k) {
      if (k == best) continue;
      pts[k] = pts[best] + sigma * (pts[k] - pts[best]);
      val[k] = f(pts[k]);
    }
  }
  tr.iters = it;
  const auto mx = std::max_element(val.begin(), val.end());
  tr.best = pts[static_cast<size_t>(mx - val.begin())];
  tr.best_value = *mx;
  return tr;
}

inline OptimResult multistart(const LogObjective& f, int r,
                              const OptimOptions& opts) {
  opts.validate();
  const double lo = std::log(opts.theta_lo), hi = std::log(opts.theta_hi);
  Rng rng(opts.seed);
  const std::vector<Vector> inits =
      latin_hypercube(opts.restarts, r, lo, hi, rng);

  std::vector<RestartTrace> traces;
  traces.reserve(opts.restarts);
  int best = -1;
  for (int k = 0; k < opts.restarts; ++k) {
    RestartTrace tr = nelder_mead(f, inits[k], opts.max_iters, opts.f_tol);
    if (best < 0 || tr.best_value > traces[best].best_value)
      best = static_cast<int>(traces.size());
    traces.push_back(std::move(tr));
  }
  if (!std::isfinite(traces[best].best_value))
    throw std::runtime_error(
        "estimation: no restart produced a finite objective");

  const RestartTrace& top = traces[best];
  const double edge_tol = 1e-3;
  bool interior = true;
  for (int j = 0; j < r; ++j)
    interior = interior && top.best[j] > lo + edge_tol &&
               top.best[j] < hi - edge_tol;

  Vector theta = top.best.array().exp();
  if (opts.param == Parametrization::Mu)
    theta = theta.cwiseInverse();  // optimized over log mu
  return OptimResult{LengthVector(theta), top.best_value, opts.restarts,
                     top.converged && interior, std::move(traces)};
}

// Wraps a theta-space log objective as a function of the optimization
// variable, with -inf outside the box.
inline LogObjective boxed(std::function<double(const LengthVector&)> inner,
                          int r, const OptimOptions& opts) {
  const double lo = std::log(opts.theta_lo), hi = std::log(opts.theta_hi);
  const bool mu = opts.param == Parametrization::Mu;
  return [inner = std::move(inner), r, lo, hi, mu](const Vector& x) {
    for (int j = 0; j < r; ++j)
      if (!(x[j] >= lo && x[j] <= hi)) return kNegInf;
    Vector theta = x.array().exp();
    if (mu) theta = theta.cwiseInverse();
    try {
      return inner(LengthVector(theta));
    } catch (const FactorizationError&) {
      return kNegInf;
    }
  };
}

}  // namespace detail

// Integrated log likelihood as a function of theta alone.
inline double mle_objective(const Vector& y, const Model& model,
                            const LengthVector& theta) {
  return integrated_log_likelihood(y, model, CorrelationState(model, theta));
}

inline OptimResult mle(const Vector& y, const Model& model,
                       const OptimOptions& opts = {}) {
  reject_if_in_trend_span(y, model);
  auto inner = [&y, &model](const LengthVector& theta) {
    return mle_objective(y, model, theta);
  };
  return detail::multistart(detail::boxed(inner, model.r(), opts), model.r(),
                            opts);
}

// Posterior-mode objective: integrated log likelihood plus the sum of log
// conditional prior densities, each conditional evaluated at the full point.
inline double map_objective(const Vector& y, const Model& model,
                            const LengthVector& theta,
                            const LogConditionalPrior& log_prior) {
  StateOptions so;
  so.deriv_mode = DerivMode::All;
  const CorrelationState state(model, theta, so);
  double obj = integrated_log_likelihood(y, model, state);
  for (int i = 0; i < model.r(); ++i) obj += log_prior(i, model, state);
  return obj;
}

inline LogConditionalPrior reference_log_prior(
    Parametrization param = Parametrization::Theta) {
  return [param](int i, const Model& model, const CorrelationState& state) {
    const double v = conditional_prior_from_state(i, model, state, param).value;
    return v > 0.0 ? std::log(v) : detail::kNegInf;
  };
}

inline OptimResult map_estimate(const Vector& y, const Model& model,
                                const OptimOptions& opts,
                                const LogConditionalPrior& log_prior) {
  reject_if_in_trend_span(y, model);
  auto inner = [&y, &model, &log_prior](const LengthVector& theta) {
    return map_objective(y, model, theta, log_prior);
  };
  return detail::multistart(detail::boxed(inner, model.r(), opts), model.r(),
                            opts);
}

inline OptimResult map_estimate(const Vector& y, const Model& model,
                                const OptimOptions& opts = {}) {
  return map_estimate(y, model, opts, reference_log_prior(opts.param));
}

}  // namespace krigor

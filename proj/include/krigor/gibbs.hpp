// Random-scan Gibbs sampler for the posterior on correlation lengths.
//
// The target is pi(theta | y) known up to normalization through its
// one-dimensional conditionals  pi_i(theta_i | y, theta_{-i}) proportional
// to L1(y | theta) * f_i(theta_i | theta_{-i}).  One Markov step picks a
// coordinate uniformly at random and replaces theta_i by an exact draw from
// the tabulated conditional (inverse CDF on an adaptive log-spaced grid), so
// the implemented kernel is the mixture (1/r) sum_i of coordinate updates:
// no Metropolis correction is involved.
//
// Tabulation: the conditional log-density is probed on a coarse log grid,
// the range is extended outward until both boundary values sit 27.6 nats
// (mass ratio ~1e-12) below the maximum, then the final grid_size nodes are
// laid log-spaced across the live window and integrated by trapezoid in
// linear theta.  A tail that refuses to decay after bounded extensions
// raises ExistenceViolationError: it is numerical evidence against posterior
// integrability.
//
// Each conditional evaluation computes L1 and f_i from scratch at a fresh
// Sigma(theta).  The evaluator below keeps all factorization workspace
// preallocated and works in the unprojected n-space using
//   |W^T Sigma W| = |Sigma| |H^T Sigma^{-1} H| / |det(P^T H)|^2,
//   q = y^T Sigma^{-1} y - (H^T Sigma^{-1} y)^T (H^T Sigma^{-1} H)^{-1} (..),
// which follows from the orthonormal-split block determinant; when the
// Cholesky of Sigma fails near perfect correlation it falls back to the
// W-projected route, which stays definite longer in the trend direction.
#pragma once

#include <krigor/linear_model.hpp>
#include <krigor/reference_prior.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

namespace krigor {

struct ChainConfig {
  long n_iter = 6000;   // sweeps; each sweep is r coordinate updates
  long burn_in = 1000;  // sweeps discarded
  long thin = 1;        // keep every thin-th post-burn-in sweep
  std::uint64_t seed = 0;
  std::optional<Vector> init;  // default: coordinatewise design range / 2
  int grid_size = 512;
  std::optional<std::pair<double, double>> truncation;  // explicit window
  // Adaptive-truncation tuning.
  double initial_lo = 0.02;
  double initial_hi = 50.0;
  double nat_window = 27.6;  // log-density drop treated as zero mass (~1e-12)
  int max_extension_factor = 16;  // probe budget, in units of grid_size

  void validate(int r) const {
    if (n_iter <= 0 || thin <= 0 || burn_in < 0 || burn_in >= n_iter)
      throw std::invalid_argument("ChainConfig: need 0 <= burn_in < n_iter, thin >= 1");
    if (grid_size < 16)
      throw std::invalid_argument("ChainConfig: grid_size too small");
    if (truncation && !(truncation->first > 0.0 &&
                        truncation->first < truncation->second))
      throw std::invalid_argument("ChainConfig: bad truncation window");
    if (init && (init->size() != r || !(init->array() > 0.0).all()))
      throw std::invalid_argument("ChainConfig: bad init");
    if (!(initial_lo > 0.0 && initial_lo < initial_hi))
      throw std::invalid_argument("ChainConfig: bad initial range");
  }
};

struct EvalResult {
  double log_post = -std::numeric_limits<double>::infinity();
  double log_l1 = -std::numeric_limits<double>::infinity();
  double prior = 0.0;
};

// Fused evaluator of (log L1, f_i) as a function of theta_i with theta_{-i}
// frozen.  Not thread-safe; one per chain.
class ConditionalEvaluator {
 public:
  ConditionalEvaluator(const Model& model, Vector y)
      : model_(&model),
        y_(std::move(y)),
        kern_(model.kernel().nu),
        pairs_(model.design()) {
    if (y_.size() != model.n())
      throw std::invalid_argument("ConditionalEvaluator: y size mismatch");
    const int n = model.n();
    const int p = model.p();
    np_ = n - p;
    log_const_ = -model.mm().log_abs_det_PtH + std::lgamma(0.5 * np_) -
                 0.5 * np_ * std::log(M_PI);
    log_det_HtH_ = 2.0 * model.mm().log_abs_det_PtH;
    zw_ = model.mm().W.transpose() * y_;
    sig_.resize(n, n);
    dmat_.resize(n, n);
    e_.resize(n, n);
    work_.resize(n, n);
    cent_.resize(n, n);
    hhat_.resize(n, p);
    un_.resize(n, p);
    yhat_.resize(n);
    const Eigen::Index npair = pairs_.d2.rows();
    u_.resize(npair);
    kv_.resize(npair);
    dkv_.resize(npair);
    base_.resize(npair);
    coli_.resize(npair);
  }

  const Model& model() const { return *model_; }
  const Vector& y() const { return y_; }
  long evals() const { return evals_; }
  long dead_evals() const { return dead_; }
  long fallback_evals() const { return fallbacks_; }

  // Freeze theta_{-i}; subsequent evaluate(s) vary coordinate i only.
  void set_coordinate(int i, const Vector& theta) {
    const int r = model_->r();
    if (i < 0 || i >= r)
      throw std::invalid_argument("set_coordinate: bad index");
    coord_ = i;
    if (model_->kernel().family == KernelSpec::Family::AnisotropicGeometric) {
      base_.setZero();
      for (int j = 0; j < r; ++j)
        if (j != i) base_ += pairs_.d2.col(j) / (theta[j] * theta[j]);
      coli_ = pairs_.d2.col(i);
    } else {
      base_.setOnes();
      for (int j = 0; j < r; ++j)
        if (j != i) base_ *= kern_.eval_array(pairs_.absd.col(j) / theta[j]);
      coli_ = pairs_.absd.col(i);
    }
  }

  EvalResult evaluate(double s) {
    if (coord_ < 0) throw std::logic_error("evaluate: set_coordinate first");
    if (!(s > 0.0)) throw std::invalid_argument("evaluate: theta_i <= 0");
    ++evals_;
    if (model_->kernel().family == KernelSpec::Family::AnisotropicGeometric) {
      u_ = (base_ + coli_ / (s * s)).sqrt();
      kv_ = kern_.eval_array(u_);
      // dSigma/dtheta_i = K'(u) * (-d_i^2 / (theta_i^3 u)).
      dkv_ = kern_.deriv_array(u_) * (-coli_ / (s * s * s * u_.max(1e-300)));
    } else {
      u_ = coli_ / s;
      kv_ = base_ * kern_.eval_array(u_);
      dkv_ = base_ * kern_.deriv_array(u_) * (-coli_ / (s * s));
    }
    scatter(kv_, 1.0, sig_);
    llt_.compute(sig_);
    if (llt_.info() != Eigen::Success) return fallback(s);
    {
      // The determinant identity cancels catastrophically once Sigma is
      // ill-conditioned; the projected route stays accurate there.
      const auto dvec = llt_.matrixLLT().diagonal();
      const double dratio = dvec.maxCoeff() / dvec.minCoeff();
      if (!(dratio < 1e5)) return fallback(s);
    }

    const auto L = llt_.matrixL();
    const double log_det_sig =
        2.0 * llt_.matrixLLT().diagonal().array().log().sum();
    yhat_ = y_;
    L.solveInPlace(yhat_);
    double q = yhat_.squaredNorm();
    double log_det_G = 0.0;
    const int p = model_->p();
    if (p > 0) {
      hhat_ = model_->H();
      L.solveInPlace(hhat_);
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic> G =
          hhat_.transpose() * hhat_;
      Eigen::LLT<Matrix> gllt(G);
      if (gllt.info() != Eigen::Success) return fallback(s);
      log_det_G = 2.0 * gllt.matrixLLT().diagonal().array().log().sum();
      const Vector ghat = hhat_.transpose() * yhat_;
      q -= ghat.dot(gllt.solve(ghat));
      // Orthonormalize hhat (modified Gram-Schmidt; p is small).
      un_ = hhat_;
      for (int c = 0; c < p; ++c) {
        for (int c2 = 0; c2 < c; ++c2)
          un_.col(c) -= un_.col(c2).dot(un_.col(c)) * un_.col(c2);
        const double nrm = un_.col(c).norm();
        if (!(nrm > 0.0)) return fallback(s);
        un_.col(c) /= nrm;
      }
    }
    if (!(q > 1e-300)) return fallback(s);  // cancellation; recompute projected
    const double log_det_wtsw = log_det_sig + log_det_G - log_det_HtH_;

    EvalResult out;
    out.log_l1 = log_const_ - 0.5 * log_det_wtsw - 0.5 * np_ * std::log(q);

    // Prior: E = C^{-1} D C^{-T}, F = Pi E Pi with Pi = I - U U^T, then
    // f = || F - (Tr F / (n-p)) Pi ||_F.
    scatter(dkv_, 0.0, dmat_);
    e_ = dmat_;
    L.solveInPlace(e_);
    work_ = e_.transpose();
    L.solveInPlace(work_);  // work_ = E, symmetric
    cent_ = work_;
    if (p > 0) {
      const Matrix V = un_.transpose() * work_;  // p x n
      cent_.noalias() -= un_ * V;
      cent_.noalias() -= V.transpose() * un_.transpose();
      const Matrix S = V * un_;  // p x p
      cent_.noalias() += un_ * S * un_.transpose();
    }
    const double t1 = cent_.trace();
    const double lam = t1 / np_;
    cent_.diagonal().array() -= lam;
    if (p > 0) cent_.noalias() += lam * (un_ * un_.transpose());
    out.prior = cent_.norm();
    out.log_post =
        out.prior > 0.0 ? out.log_l1 + std::log(out.prior)
                        : -std::numeric_limits<double>::infinity();
    return out;
  }

 private:
  void scatter(const Eigen::ArrayXd& v, double diagval, Matrix& S) const {
    const Eigen::Index n = pairs_.n;
    Eigen::Index k = 0;
    for (Eigen::Index a = 0; a < n; ++a) {
      S(a, a) = diagval;
      for (Eigen::Index b = a + 1; b < n; ++b, ++k) {
        S(a, b) = v[k];
        S(b, a) = v[k];
      }
    }
  }

  EvalResult dead() {
    ++dead_;
    return {};
  }

  // W-projected route: survives the near-perfect-correlation corner where
  // Sigma itself is numerically singular but W^T Sigma W is not.
  EvalResult fallback(double /*s*/) {
    ++fallbacks_;
    const ModelMatrices& mm = model_->mm();
    const int p = model_->p();
    const Matrix A = (p == 0)
                         ? sig_
                         : Matrix(mm.W.transpose() * sig_ * mm.W);
    Eigen::LLT<Matrix> allt(A);
    if (allt.info() != Eigen::Success) return dead();
    const auto L = allt.matrixL();
    const double log_det_wtsw =
        2.0 * allt.matrixLLT().diagonal().array().log().sum();
    const Vector alpha = allt.solve(zw_);
    const double q = zw_.dot(alpha);
    if (!(q > 1e-300)) return dead();
    EvalResult out;
    out.log_l1 = log_const_ - 0.5 * log_det_wtsw - 0.5 * np_ * std::log(q);
    scatter(dkv_, 0.0, dmat_);
    const Matrix Dw =
        (p == 0) ? dmat_ : Matrix(mm.W.transpose() * dmat_ * mm.W);
    Matrix B = L.solve(Dw);
    B = L.solve(B.transpose()).eval();
    const double lam = B.trace() / np_;
    B.diagonal().array() -= lam;
    out.prior = B.norm();
    out.log_post =
        out.prior > 0.0 ? out.log_l1 + std::log(out.prior)
                        : -std::numeric_limits<double>::infinity();
    return out;
  }

  const Model* model_;
  Vector y_;
  Kernel1D kern_;
  PairTable pairs_;
  int np_ = 0;
  double log_const_ = 0.0;
  double log_det_HtH_ = 0.0;
  Vector zw_;
  int coord_ = -1;
  long evals_ = 0;
  long dead_ = 0;
  long fallbacks_ = 0;
  Eigen::ArrayXd base_, coli_, u_, kv_, dkv_;
  Matrix sig_, dmat_, e_, work_, cent_;
  Matrix hhat_, un_;
  Vector yhat_;
  Eigen::LLT<Matrix> llt_;
};

// Tabulated conditional over one coordinate: log-spaced nodes, trapezoid CDF
// in linear theta, normalized to 1 at the last node.
struct ConditionalGrid {
  Vector nodes;        // ascending theta values
  Vector log_density;  // unnormalized log pi_i at the nodes
  Vector density;      // exp(log_density - log_max)
  Vector cdf;          // cdf[0] = 0, cdf[last] = 1
  double log_max = -std::numeric_limits<double>::infinity();

  double sample(Rng& rng) const {
    const double u = rng.uniform01_open();
    return quantile(u);
  }

  // Inverse CDF of the continuous piecewise-linear density.
  double quantile(double u) const {
    if (!(u >= 0.0 && u <= 1.0))
      throw std::invalid_argument("ConditionalGrid::quantile: u in [0,1]");
    const Eigen::Index m = nodes.size();
    if (u >= cdf[m - 1]) return nodes[m - 1];
    // first k with cdf[k+1] > u
    Eigen::Index lo = 0, hi = m - 1;
    while (hi - lo > 1) {
      const Eigen::Index mid = (lo + hi) / 2;
      (cdf[mid] > u ? hi : lo) = mid;
    }
    const double w = u - cdf[lo];
    const double dt = nodes[lo + 1] - nodes[lo];
    const double a = density[lo] * dt;
    const double b = 0.5 * (density[lo + 1] - density[lo]) * dt;
    double t;
    if (std::fabs(b) < 1e-14 * std::max(a, 1e-300)) {
      t = (a > 0.0) ? w / a : 0.0;
    } else {
      t = (-a + std::sqrt(std::max(a * a + 4.0 * b * w, 0.0))) / (2.0 * b);
    }
    t = std::clamp(t, 0.0, 1.0);
    return nodes[lo] + t * dt;
  }

  double mean() const {
    double num = 0.0, den = 0.0;
    for (Eigen::Index k = 0; k + 1 < nodes.size(); ++k) {
      const double dt = nodes[k + 1] - nodes[k];
      num += 0.5 * dt *
             (density[k] * nodes[k] + density[k + 1] * nodes[k + 1]);
      den += 0.5 * dt * (density[k] + density[k + 1]);
    }
    return num / den;
  }
};

namespace detail {

// Probe + extend + tabulate.  Deterministic.
inline ConditionalGrid tabulate_conditional(ConditionalEvaluator& ev, int i,
                                            const Vector& theta,
                                            const ChainConfig& cfg) {
  ev.set_coordinate(i, theta);
  ConditionalGrid g;

  double wlo, whi;
  if (cfg.truncation) {
    wlo = cfg.truncation->first;
    whi = cfg.truncation->second;
  } else {
    // Fixed probe resolution: the truncation window must not depend on
    // grid_size, or refining the grid would also move the window.
    const int probe_n = 64;
    const long budget =
        static_cast<long>(cfg.max_extension_factor) * cfg.grid_size;
    double llo = std::log(cfg.initial_lo);
    const double dlog =
        (std::log(cfg.initial_hi) - llo) / (probe_n - 1);
    std::vector<double> lv(probe_n);
    long used = 0;
    for (int k = 0; k < probe_n; ++k) {
      lv[k] = ev.evaluate(std::exp(llo + k * dlog)).log_post;
      ++used;
    }
    auto lmax = [&] { return *std::max_element(lv.begin(), lv.end()); };
    double cut = lmax() - cfg.nat_window;
    // Extend right, then left, re-checking the cut as the max can move.
    // A node whose density is not representable in double precision
    // evaluates to -inf and therefore stops the extension; the mass beyond
    // such a node is below the window cut in any posterior this sampler can
    // explore, so the truncation it induces is negligible.
    while (lv.back() > cut) {
      if (used >= budget)
        throw ExistenceViolationError(
            "conditional posterior tail is not vanishing within the probe "
            "budget; posterior may not be integrable");
      lv.push_back(
          ev.evaluate(std::exp(llo + lv.size() * dlog)).log_post);
      ++used;
      cut = lmax() - cfg.nat_window;
    }
    while (lv.front() > cut) {
      if (used >= budget)
        throw ExistenceViolationError(
            "conditional posterior head is not vanishing within the probe "
            "budget; posterior may not be integrable");
      llo -= dlog;
      lv.insert(lv.begin(), ev.evaluate(std::exp(llo)).log_post);
      ++used;
      cut = lmax() - cfg.nat_window;
    }
    if (!std::isfinite(lmax()))
      throw FactorizationError(
          "conditional posterior density vanished numerically everywhere");
    // Live window with one dead node of margin on each side.
    size_t first = 0, last = lv.size() - 1;
    while (first < lv.size() && lv[first] <= cut) ++first;
    while (last > 0 && lv[last] <= cut) --last;
    first = (first > 0) ? first - 1 : 0;
    last = std::min(last + 1, lv.size() - 1);
    wlo = std::exp(llo + first * dlog);
    whi = std::exp(llo + last * dlog);
  }

  const int m = cfg.grid_size;
  g.nodes.resize(m);
  g.log_density.resize(m);
  const double a = std::log(wlo), b = std::log(whi);
  for (int k = 0; k < m; ++k) {
    g.nodes[k] = std::exp(a + (b - a) * k / (m - 1));
    g.log_density[k] = ev.evaluate(g.nodes[k]).log_post;
    g.log_max = std::max(g.log_max, g.log_density[k]);
  }
  if (!std::isfinite(g.log_max))
    throw FactorizationError(
        "conditional posterior density vanished numerically everywhere");
  g.density = (g.log_density.array() - g.log_max).exp();
  g.cdf.resize(m);
  g.cdf[0] = 0.0;
  for (int k = 1; k < m; ++k)
    g.cdf[k] = g.cdf[k - 1] + 0.5 * (g.density[k - 1] + g.density[k]) *
                                  (g.nodes[k] - g.nodes[k - 1]);
  const double total = g.cdf[m - 1];
  if (!(total > 0.0))
    throw FactorizationError("conditional posterior has zero mass on grid");
  g.cdf /= total;
  g.cdf[m - 1] = 1.0;  // exact by construction
  return g;
}

}  // namespace detail

// Public tabulation of one conditional posterior.
inline ConditionalGrid conditional_posterior_grid(int i, const Vector& theta,
                                                  const Vector& y,
                                                  const Model& model,
                                                  const ChainConfig& cfg) {
  cfg.validate(model.r());
  if (i < 0 || i >= model.r())
    throw std::invalid_argument("conditional_posterior_grid: bad index");
  ConditionalEvaluator ev(model, y);
  return detail::tabulate_conditional(ev, i, theta, cfg);
}

// One application of the random-scan kernel: draw a coordinate uniformly,
// redraw it from its conditional, leave the rest untouched.
inline Vector gibbs_step(const Vector& theta, const Vector& y,
                         const Model& model, const ChainConfig& cfg,
                         Rng& rng) {
  cfg.validate(model.r());
  if (!(theta.array() > 0.0).all())
    throw std::invalid_argument("gibbs_step: theta must be positive");
  ConditionalEvaluator ev(model, y);
  const int i = static_cast<int>(rng.uniform_int(model.r()));
  ConditionalGrid g = detail::tabulate_conditional(ev, i, theta, cfg);
  Vector out = theta;
  out[i] = g.sample(rng);
  return out;
}

// Effective sample size via the initial positive sequence of summed
// autocorrelation pairs.
inline double effective_sample_size(const Vector& x) {
  const Eigen::Index n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = x.mean();
  const Vector c = x.array() - mean;
  const double c0 = c.squaredNorm() / n;
  if (!(c0 > 0.0)) return static_cast<double>(n);
  auto gamma = [&](Eigen::Index k) {
    return c.head(n - k).dot(c.tail(n - k)) / n;
  };
  double tau = 1.0;
  for (Eigen::Index k = 1; k + 1 < n; k += 2) {
    const double pair = (gamma(k) + gamma(k + 1)) / c0;
    if (pair < 0.0) break;
    tau += 2.0 * pair;
  }
  return std::clamp(static_cast<double>(n) / tau, 1.0,
                    static_cast<double>(n));
}

// Split-chain convergence statistic (two halves of one chain).
inline double split_rhat(const Vector& x) {
  const Eigen::Index n2 = x.size() / 2;
  if (n2 < 2) return 1.0;
  const Vector a = x.head(n2), b = x.segment(n2, n2);
  const double ma = a.mean(), mb = b.mean();
  const double va = (a.array() - ma).square().sum() / (n2 - 1);
  const double vb = (b.array() - mb).square().sum() / (n2 - 1);
  const double w = 0.5 * (va + vb);
  if (!(w > 0.0)) return 1.0;
  const double mg = 0.5 * (ma + mb);
  const double bvar =
      n2 * ((ma - mg) * (ma - mg) + (mb - mg) * (mb - mg));  // ddof 1 over 2
  const double vhat = (n2 - 1.0) / n2 * w + bvar / n2;
  return std::sqrt(vhat / w);
}

struct ChainOutput {
  Matrix samples;  // one retained draw per row (theta_1 .. theta_r)
  Vector log_l1;   // integrated log-likelihood at each retained draw
  std::vector<long> update_counts;  // coordinate choices over the whole run
  Vector ess;
  Vector rhat;
  bool rhat_warning = false;
  long grid_evals = 0;
  long dead_evals = 0;
};

inline ChainOutput run_chain(const Vector& y, const Model& model,
                             const ChainConfig& cfg) {
  const int r = model.r();
  cfg.validate(r);
  reject_if_in_trend_span(y, model);

  Vector theta(r);
  if (cfg.init) {
    theta = *cfg.init;
  } else {
    for (int j = 0; j < r; ++j) {
      const auto col = model.design().points().col(j);
      const double range = col.maxCoeff() - col.minCoeff();
      theta[j] = (range > 0.0) ? 0.5 * range : 0.5;
    }
  }

  Rng rng(cfg.seed);
  ConditionalEvaluator ev(model, y);
  const long count = (cfg.n_iter - cfg.burn_in) / cfg.thin;
  ChainOutput out;
  out.samples.resize(count, r);
  out.log_l1.resize(count);
  out.update_counts.assign(r, 0);

  long kept = 0;
  for (long t = 1; t <= cfg.n_iter; ++t) {
    for (int s = 0; s < r; ++s) {
      const int i = static_cast<int>(rng.uniform_int(r));
      ConditionalGrid g = detail::tabulate_conditional(ev, i, theta, cfg);
      theta[i] = g.sample(rng);
      out.update_counts[i]++;
    }
    if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 &&
        kept < count) {
      ev.set_coordinate(0, theta);
      const EvalResult res = ev.evaluate(theta[0]);
      if (!std::isfinite(res.log_l1))
        throw std::runtime_error(
            "run_chain: non-finite log-likelihood at a retained sample");
      out.samples.row(kept) = theta.transpose();
      out.log_l1[kept] = res.log_l1;
      ++kept;
    }
  }

  out.ess.resize(r);
  out.rhat.resize(r);
  for (int j = 0; j < r; ++j) {
    out.ess[j] = effective_sample_size(out.samples.col(j));
    out.rhat[j] = split_rhat(out.samples.col(j));
    if (out.rhat[j] > 1.05) out.rhat_warning = true;
  }
  out.grid_evals = ev.evals();
  out.dead_evals = ev.dead_evals();
  return out;
}

}  // namespace krigor

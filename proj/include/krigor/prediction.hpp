// Predictive distributions at unobserved points, under three knowledge
// states, plus the posterior-mixture predictor.
//
// All (beta, sigma2, theta) known: the conditional Gaussian
//   y0 | beta, y ~ N(H00 b + Sig_{0,.} Sig^{-1} (y - H b),
//                    sigma2 (Sig00 - Sig_{0,.} Sig^{-1} Sig_{.,0})).
//
// beta unknown (flat prior), sigma2 known: still Gaussian.  With the
// orthonormal split [P W] and
//   H0. = H00 (P^T H)^{-1},          E0  = H0. P^T y,
//   T   = H0. P^T Sigma - Sig_{0,.}, G   = T W,
//   S00 = Sig00 + H0. P^T Sigma P H0.^T - H0. P^T Sig_{.,0}
//                                       - Sig_{0,.} P H0.^T,
// the mean is E0 - G (W^T Sigma W)^{-1} W^T y and the covariance is
// sigma2 (S00 - G (W^T Sigma W)^{-1} G^T).
//
// beta and sigma2 both unknown: multivariate Student with n - p degrees of
// freedom, the same location, and scale q/(n-p) (S00 - G A^{-1} G^T) where
// q = y^T W (W^T Sigma W)^{-1} W^T y.
//
// theta unknown: equal-weight mixture of the Student predictors across the
// retained Gibbs draws.  Intervals are equal-tailed; mixture quantiles come
// from bisecting the averaged CDF, so they are deterministic given a chain.
#pragma once

#include <krigor/gibbs.hpp>
#include <krigor/linear_model.hpp>
#include <krigor/stats.hpp>

#include <cmath>
#include <utility>
#include <variant>
#include <vector>

namespace krigor {

struct GaussianPredictive {
  Vector mean;
  Matrix cov;
};

struct StudentPredictive {
  Vector location;
  Matrix scale;
  double dof = 0.0;
};

struct MixturePredictive {
  std::vector<StudentPredictive> components;  // equal weights
};

struct PredictiveDistribution {
  enum class Kind { KnownAll, BetaMarginalized, Student, Mixture };
  Kind kind = Kind::KnownAll;
  std::variant<GaussianPredictive, StudentPredictive, MixturePredictive> dist;

  const GaussianPredictive& gaussian() const {
    if (const auto* g = std::get_if<GaussianPredictive>(&dist)) return *g;
    throw std::logic_error("PredictiveDistribution: not a Gaussian variant");
  }
  const StudentPredictive& student() const {
    if (const auto* s = std::get_if<StudentPredictive>(&dist)) return *s;
    throw std::logic_error("PredictiveDistribution: not a Student variant");
  }
  const MixturePredictive& mixture() const {
    if (const auto* m = std::get_if<MixturePredictive>(&dist)) return *m;
    throw std::logic_error("PredictiveDistribution: not a mixture variant");
  }

  Eigen::Index n_targets() const {
    switch (kind) {
      case Kind::KnownAll:
      case Kind::BetaMarginalized:
        return gaussian().mean.size();
      case Kind::Student:
        return student().location.size();
      case Kind::Mixture:
        return mixture().components.front().location.size();
    }
    return 0;
  }
};

namespace detail {

inline void check_targets(const Matrix& targets, const Model& model) {
  if (targets.rows() < 1 || targets.cols() != model.r())
    throw std::invalid_argument(
        "prediction: targets must be n0 x r with n0 >= 1");
  if (!targets.allFinite())
    throw std::invalid_argument("prediction: non-finite target coordinates");
}

// Correlation matrix among the targets themselves (duplicates allowed, so
// this does not go through DesignSet).
inline Matrix target_corr(const Matrix& targets, const KernelSpec& spec,
                          const LengthVector& len) {
  const Eigen::Index n0 = targets.rows();
  const Kernel1D k1(spec.nu);
  Matrix out(n0, n0);
  for (Eigen::Index a = 0; a < n0; ++a) {
    out(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < n0; ++b) {
      double v;
      if (spec.family == KernelSpec::Family::AnisotropicGeometric) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < targets.cols(); ++j) {
          const double d = (targets(a, j) - targets(b, j)) / len[j];
          s += d * d;
        }
        v = k1.eval(std::sqrt(s));
      } else {
        v = 1.0;
        for (Eigen::Index j = 0; j < targets.cols(); ++j)
          v *= k1.eval(std::fabs(targets(a, j) - targets(b, j)) / len[j]);
      }
      out(a, b) = v;
      out(b, a) = v;
    }
  }
  return out;
}

// Targets that coincide with a design point (exact coordinate match) have a
// degenerate predictive: the mean is the observation and the variance is
// zero.  The general formulas recover this only up to a cancellation residual
// of order eps * cond(Sigma), whose square root is large enough to pollute
// interval widths, so the known limit is substituted exactly.
inline void snap_to_observations(const Matrix& targets, const Vector& y,
                                 const Model& model, Vector& mean,
                                 Matrix& cov) {
  const Matrix& pts = model.design().points();
  for (Eigen::Index t = 0; t < targets.rows(); ++t) {
    for (Eigen::Index j = 0; j < pts.rows(); ++j) {
      if ((targets.row(t).array() == pts.row(j).array()).all()) {
        mean[t] = y[j];
        cov.row(t).setZero();
        cov.col(t).setZero();
        break;
      }
    }
  }
}

// Shared geometry of the beta-marginalized predictors.
struct SplitParts {
  Vector mean;    // E0 - G A^{-1} z
  Matrix shape;   // S00 - G A^{-1} G^T, symmetrized
  double q = 0.0; // z^T A^{-1} z
};

inline SplitParts split_parts(const Matrix& targets, const Vector& y,
                              const Model& model,
                              const CorrelationState& state) {
  check_targets(targets, model);
  if (y.size() != model.n())
    throw std::invalid_argument("prediction: y size mismatch");
  const ModelMatrices& mm = model.mm();
  const int p = model.p();
  const Matrix sig0 = cross_corr_matrix(targets, model.design(),
                                        model.kernel(), state.theta());
  const Matrix sig00 =
      target_corr(targets, model.kernel(), state.theta());

  Vector e0 = Vector::Zero(targets.rows());
  Matrix t_mat = -sig0;  // T = H0. P^T Sigma - Sigma_{0,.}
  Matrix s00 = sig00;
  if (p > 0) {
    const Matrix h00 = eval_basis(targets, model.basis());
    const Matrix h0dot = h00 * mm.PtH_inv;              // n0 x p
    const Matrix pts = mm.P.transpose() * state.sigma();  // p x n
    e0 = h0dot * (mm.P.transpose() * y);
    t_mat += h0dot * pts;
    const Matrix cross = h0dot * (pts * mm.P) * h0dot.transpose();
    const Matrix mixed =
        h0dot * (mm.P.transpose() * sig0.transpose());  // n0 x n0
    s00 += cross - mixed - mixed.transpose();
  }
  const Matrix g = (p == 0) ? t_mat : Matrix(t_mat * mm.W);

  const LikelihoodTerms lt = likelihood_terms(y, model, state);
  SplitParts out;
  out.q = lt.q;
  out.mean = e0 - g * lt.alpha;
  const Matrix gai = state.wtsw_llt().solve(g.transpose());  // A^{-1} G^T
  out.shape = s00 - g * gai;
  out.shape = 0.5 * (out.shape + out.shape.transpose()).eval();
  snap_to_observations(targets, y, model, out.mean, out.shape);
  return out;
}

}  // namespace detail

// All of beta, sigma2, theta known: conditional Gaussian.  The state must
// carry the factorization of Sigma itself (StateOptions::sigma_factor).
inline PredictiveDistribution predict_known_all(const Matrix& targets,
                                                const Vector& y,
                                                const Vector& beta,
                                                double sigma2,
                                                const Model& model,
                                                const CorrelationState& state) {
  detail::check_targets(targets, model);
  if (!(sigma2 > 0.0))
    throw std::invalid_argument("predict_known_all: sigma2 <= 0");
  if (y.size() != model.n() || beta.size() != model.p())
    throw std::invalid_argument("predict_known_all: y or beta size mismatch");
  const Matrix sig0 = cross_corr_matrix(targets, model.design(),
                                        model.kernel(), state.theta());
  const Matrix sig00 =
      detail::target_corr(targets, model.kernel(), state.theta());

  Vector resid = y;
  Vector trend0 = Vector::Zero(targets.rows());
  if (model.p() > 0) {
    resid -= model.H() * beta;
    trend0 = eval_basis(targets, model.basis()) * beta;
  }
  const Vector alpha = state.sigma_llt().solve(resid);
  GaussianPredictive g;
  g.mean = trend0 + sig0 * alpha;
  const Matrix sia = state.sigma_llt().solve(sig0.transpose());
  g.cov = sigma2 * (sig00 - sig0 * sia);
  g.cov = 0.5 * (g.cov + g.cov.transpose()).eval();
  detail::snap_to_observations(targets, y, model, g.mean, g.cov);
  PredictiveDistribution out;
  out.kind = PredictiveDistribution::Kind::KnownAll;
  out.dist = std::move(g);
  return out;
}

inline PredictiveDistribution predict_known_all(const Matrix& targets,
                                                const Vector& y,
                                                const Vector& beta,
                                                double sigma2,
                                                const Model& model,
                                                const LengthVector& theta) {
  StateOptions opts;
  opts.sigma_factor = true;
  return predict_known_all(targets, y, beta, sigma2, model,
                           CorrelationState(model, theta, opts));
}

// beta marginalized under its flat prior, sigma2 known: Gaussian.
inline PredictiveDistribution predict_beta_marginal(
    const Matrix& targets, const Vector& y, double sigma2, const Model& model,
    const CorrelationState& state) {
  if (!(sigma2 > 0.0))
    throw std::invalid_argument("predict_beta_marginal: sigma2 <= 0");
  detail::SplitParts parts = detail::split_parts(targets, y, model, state);
  GaussianPredictive g;
  g.mean = std::move(parts.mean);
  g.cov = sigma2 * parts.shape;
  PredictiveDistribution out;
  out.kind = PredictiveDistribution::Kind::BetaMarginalized;
  out.dist = std::move(g);
  return out;
}

inline PredictiveDistribution predict_beta_marginal(const Matrix& targets,
                                                    const Vector& y,
                                                    double sigma2,
                                                    const Model& model,
                                                    const LengthVector& theta) {
  return predict_beta_marginal(targets, y, sigma2, model,
                               CorrelationState(model, theta));
}

// beta and sigma2 both marginalized: multivariate Student, dof n - p.
inline PredictiveDistribution predict_student(const Matrix& targets,
                                              const Vector& y,
                                              const Model& model,
                                              const CorrelationState& state) {
  detail::SplitParts parts = detail::split_parts(targets, y, model, state);
  const double np = model.n() - model.p();
  StudentPredictive s;
  s.location = std::move(parts.mean);
  s.scale = (parts.q / np) * parts.shape;
  s.dof = np;
  PredictiveDistribution out;
  out.kind = PredictiveDistribution::Kind::Student;
  out.dist = std::move(s);
  return out;
}

inline PredictiveDistribution predict_student(const Matrix& targets,
                                              const Vector& y,
                                              const Model& model,
                                              const LengthVector& theta) {
  return predict_student(targets, y, model, CorrelationState(model, theta));
}

// Equal-weight Student mixture over the retained posterior draws.
inline PredictiveDistribution predict_full_bayes(const Matrix& targets,
                                                 const Vector& y,
                                                 const Model& model,
                                                 const ChainOutput& chain) {
  if (chain.samples.rows() < 1)
    throw std::invalid_argument("predict_full_bayes: empty chain");
  MixturePredictive mix;
  mix.components.reserve(chain.samples.rows());
  for (Eigen::Index k = 0; k < chain.samples.rows(); ++k) {
    const LengthVector theta(chain.samples.row(k).transpose());
    const CorrelationState state(model, theta);
    PredictiveDistribution comp = predict_student(targets, y, model, state);
    mix.components.push_back(std::move(std::get<StudentPredictive>(comp.dist)));
  }
  PredictiveDistribution out;
  out.kind = PredictiveDistribution::Kind::Mixture;
  out.dist = std::move(mix);
  return out;
}

// Point prediction (mean / location / mixture average) per target.
inline Vector point_prediction(const PredictiveDistribution& d) {
  switch (d.kind) {
    case PredictiveDistribution::Kind::KnownAll:
    case PredictiveDistribution::Kind::BetaMarginalized:
      return d.gaussian().mean;
    case PredictiveDistribution::Kind::Student:
      return d.student().location;
    case PredictiveDistribution::Kind::Mixture: {
      const auto& comps = d.mixture().components;
      Vector m = Vector::Zero(comps.front().location.size());
      for (const auto& c : comps) m += c.location;
      return m / static_cast<double>(comps.size());
    }
  }
  throw std::logic_error("point_prediction: unknown kind");
}

namespace detail {

inline double checked_sd(double var, const char* what) {
  if (!std::isfinite(var))
    throw std::runtime_error(std::string(what) + ": non-finite scale");
  // Interpolation at a design point can leave the marginal variance a hair
  // below zero after cancellation.
  return std::sqrt(std::max(var, 0.0));
}

// Averaged CDF of the Student mixture at target index i.
inline double mixture_cdf(const MixturePredictive& mix, Eigen::Index i,
                          double x) {
  double acc = 0.0;
  for (const auto& c : mix.components) {
    const double sd = checked_sd(c.scale(i, i), "mixture_cdf");
    if (sd == 0.0)
      acc += (x < c.location[i]) ? 0.0 : (x > c.location[i] ? 1.0 : 0.5);
    else
      acc += student_cdf((x - c.location[i]) / sd, c.dof);
  }
  return acc / static_cast<double>(mix.components.size());
}

inline double mixture_quantile(const MixturePredictive& mix, Eigen::Index i,
                               double prob) {
  // Bracket from component envelopes, then expand defensively.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double smax = 0.0;
  for (const auto& c : mix.components) {
    const double sd = checked_sd(c.scale(i, i), "mixture_quantile");
    lo = std::min(lo, c.location[i]);
    hi = std::max(hi, c.location[i]);
    smax = std::max(smax, sd);
  }
  const double pad = (smax > 0.0) ? smax : std::max(1.0, std::fabs(hi - lo));
  double step = 50.0 * pad;
  lo -= step;
  hi += step;
  while (mixture_cdf(mix, i, lo) > prob) lo -= (step *= 2.0);
  while (mixture_cdf(mix, i, hi) < prob) hi += (step *= 2.0);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = mixture_cdf(mix, i, mid);
    if (std::fabs(f - prob) < 1e-10) return mid;
    (f < prob ? lo : hi) = mid;
    if (hi - lo < 1e-14 * (std::fabs(lo) + std::fabs(hi) + 1e-300)) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Equal-tailed marginal interval at one target.
inline std::pair<double, double> prediction_interval(
    const PredictiveDistribution& d, Eigen::Index target, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("prediction_interval: level in (0,1)");
  if (target < 0 || target >= d.n_targets())
    throw std::invalid_argument("prediction_interval: bad target index");
  const double pl = 0.5 * (1.0 - level);
  const double ph = 0.5 * (1.0 + level);
  switch (d.kind) {
    case PredictiveDistribution::Kind::KnownAll:
    case PredictiveDistribution::Kind::BetaMarginalized: {
      const auto& g = d.gaussian();
      const double sd =
          detail::checked_sd(g.cov(target, target), "prediction_interval");
      if (sd == 0.0) return {g.mean[target], g.mean[target]};
      const double zq = normal_quantile(ph);
      return {g.mean[target] - zq * sd, g.mean[target] + zq * sd};
    }
    case PredictiveDistribution::Kind::Student: {
      const auto& s = d.student();
      const double sd =
          detail::checked_sd(s.scale(target, target), "prediction_interval");
      if (sd == 0.0) return {s.location[target], s.location[target]};
      const double tq = student_quantile(ph, s.dof);
      return {s.location[target] - tq * sd, s.location[target] + tq * sd};
    }
    case PredictiveDistribution::Kind::Mixture: {
      const auto& mix = d.mixture();
      return {detail::mixture_quantile(mix, target, pl),
              detail::mixture_quantile(mix, target, ph)};
    }
  }
  throw std::logic_error("prediction_interval: unknown kind");
}

}  // namespace krigor

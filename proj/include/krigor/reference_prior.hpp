// Objective (reference) prior densities on correlation lengths.
//
// For a single coordinate i, with A = W^T Sigma W, D_i = W^T (dSigma/dtheta_i) W
// and B_i = L^{-1} D_i L^{-T} (A = L L^T), the unnormalized conditional prior is
//
//   f_i = sqrt( Tr[B_i^2] - Tr[B_i]^2 / (n - p) ).
//
// The radicand is (n-p) times the variance of B_i's eigenvalues, hence
// nonnegative analytically; tiny negative values from rounding are clamped.
// An equivalent form replaces the W-projection by the oblique projector
// Q = I - H (H^T Sigma^{-1} H)^{-1} H^T Sigma^{-1}:
//
//   f_i = sqrt( Tr[M^2] - Tr[M]^2 / (n - p) ),  M = (dSigma/dtheta_i) Sigma^{-1} Q.
//
// Both are exposed; the W-form is the workhorse (one Cholesky of A, two
// triangular solves, no explicit inverses).
//
// Parametrizations: densities transform with the Jacobian of mu = 1/theta:
// f^mu(mu_i) = theta_i^2 f^theta(theta_i) coordinate-wise.  In the inverse
// parametrization the density obeys the universal bound
//
//   f^mu_i(mu_i | mu_{-i}) <= (n - p)(2 nu + r) / mu_i,
//
// which makes 1/mu (equivalently 1/theta at the other end) an integrable
// envelope for tail truncation.  The bound is monitored at runtime via a
// diagnostic counter.  Values are unnormalized: only ratios within one
// coordinate are meaningful.
#pragma once

#include <krigor/linear_model.hpp>

#include <cmath>

namespace krigor {

enum class Parametrization { Theta, Mu };

struct ConditionalPriorEval {
  int i = 0;
  double value = 0.0;          // unnormalized density
  double trace_term = 0.0;     // Tr[B] (resp. Tr[M])
  double trace_sq_term = 0.0;  // Tr[B^2] (resp. Tr[M^2])
};

namespace detail {

// sqrt(t2 - t1^2/m) with the rounding clamp: small negative radicands
// (within 1e-14 * t2) are a conditioning event and give 0; anything more
// negative indicates a real error.
inline double prior_radicand_sqrt(double t1, double t2, int m) {
  double radicand = t2 - t1 * t1 / m;
  if (radicand < 0.0) {
    if (radicand >= -1e-14 * std::max(t2, 0.0)) {
      diag::radicand_clamps()++;
      return 0.0;
    }
    throw std::runtime_error(
        "reference prior: radicand negative beyond rounding tolerance");
  }
  return std::sqrt(radicand);
}

// Centered form of the same radicand: ||B - (Tr B / m) I||_F^2 restricted to
// the m-dimensional space B acts on.  Identical analytically, but the
// subtraction happens entry-wise on the diagonal instead of between two
// large accumulated traces, which matters when the eigenvalue spread is far
// smaller than the eigenvalue mean.
inline double prior_value_centered(const Matrix& B, double t1, double t2,
                                   int m, const Matrix* subspace = nullptr) {
  Matrix centered = B;
  if (subspace == nullptr)
    centered.diagonal().array() -= t1 / m;
  else
    centered -= (t1 / m) * (*subspace);
  const double radicand = centered.squaredNorm();
  // Preserve the clamp/error semantics of the trace form.
  (void)prior_radicand_sqrt(t1, t2, m);
  return std::sqrt(radicand);
}

inline void check_mu_bound(const Model& model, double theta_i,
                           double value_mu) {
  // f^mu <= (n-p)(2 nu + r)/mu_i, i.e. f^mu * mu_i <= (n-p)(2 nu + r).
  const double cap = (model.n() - model.p()) *
                     (2.0 * model.kernel().nu + model.r());
  const double mu_i = 1.0 / theta_i;
  if (value_mu * mu_i > cap * (1.0 + 1e-9))
    diag::prior_bound_violations()++;
}

}  // namespace detail

// Conditional prior at coordinate i given the others, from a state holding
// dSigma/dtheta_i.  The computation lives in the W-projected space.
inline ConditionalPriorEval conditional_prior_from_state(
    int i, const Model& model, const CorrelationState& state,
    Parametrization param = Parametrization::Theta) {
  const ModelMatrices& mm = model.mm();
  const int m = model.n() - model.p();
  const Matrix& D = state.dsigma(i);
  Matrix Dw = (model.p() == 0) ? D : Matrix(mm.W.transpose() * D * mm.W);
  // B = L^{-1} Dw L^{-T}, symmetric.
  const auto& L = state.wtsw_llt().matrixL();
  Matrix B = L.solve(Dw);
  B = L.solve(B.transpose()).eval();
  double t1 = B.trace();
  double t2 = B.squaredNorm();
  ConditionalPriorEval out;
  out.i = i;
  const double theta_i = state.theta().theta()[i];
  const double value_theta = detail::prior_value_centered(B, t1, t2, m);
  detail::check_mu_bound(model, theta_i, theta_i * theta_i * value_theta);
  if (param == Parametrization::Theta) {
    out.trace_term = t1;
    out.trace_sq_term = t2;
    out.value = value_theta;
  } else {
    // dSigma/dmu_i = -theta_i^2 dSigma/dtheta_i.
    out.trace_term = -theta_i * theta_i * t1;
    out.trace_sq_term = theta_i * theta_i * theta_i * theta_i * t2;
    out.value = theta_i * theta_i * value_theta;
  }
  return out;
}

inline ConditionalPriorEval conditional_prior(
    int i, const LengthVector& theta, const Model& model,
    Parametrization param = Parametrization::Theta) {
  if (i < 0 || i >= model.r())
    throw std::invalid_argument("conditional_prior: bad coordinate index");
  StateOptions opts;
  opts.deriv_mode = DerivMode::Single;
  opts.deriv_index = i;
  CorrelationState state(model, theta, opts);
  return conditional_prior_from_state(i, model, state, param);
}

// One-dimensional reference prior (r = 1), W-projected form.
inline double prior_1d(double theta, const Model& model,
                       Parametrization param = Parametrization::Theta) {
  if (model.r() != 1)
    throw std::invalid_argument("prior_1d: model must have r = 1");
  return conditional_prior(0, LengthVector(Vector::Constant(1, theta)), model,
                           param)
      .value;
}

// Same prior through the oblique projector Q instead of W.  Slower (works
// with n x n matrices and Sigma^{-1}); kept as an independent cross-check.
inline double prior_1d_berger(double theta, const Model& model,
                              Parametrization param = Parametrization::Theta) {
  if (model.r() != 1)
    throw std::invalid_argument("prior_1d_berger: model must have r = 1");
  StateOptions opts;
  opts.deriv_mode = DerivMode::Single;
  opts.deriv_index = 0;
  opts.sigma_factor = true;
  CorrelationState state(model, LengthVector(Vector::Constant(1, theta)),
                         opts);
  const int n = model.n();
  const int m = n - model.p();
  // With Sigma = C C^T, Sigma^{-1} Q = C^{-T} Pi C^{-1} where Pi is the
  // orthogonal projector onto the complement of span(C^{-1} H).  Then
  // Tr[(D Sigma^{-1} Q)^k] = Tr[(Pi E Pi)^k] for E = C^{-1} D C^{-T}; the
  // projector sandwich avoids the cancellation of differencing two large
  // inverses near perfect correlation.
  const auto& C = state.sigma_llt().matrixL();
  Matrix E = C.solve(state.dsigma(0));
  E = C.solve(E.transpose()).eval();
  Matrix Pi = Matrix::Identity(n, n);
  if (model.p() > 0) {
    const Matrix Hw = C.solve(model.H());
    Eigen::ColPivHouseholderQR<Matrix> qr(Hw);
    if (qr.rank() < model.p())
      throw FactorizationError("prior_1d_berger: whitened H rank-deficient");
    const Matrix U = (qr.householderQ() * Matrix::Identity(n, model.p()));
    Pi -= U * U.transpose();
  }
  const Matrix F = Pi * E * Pi;
  const double t1 = F.trace();
  const double t2 = F.squaredNorm();
  double value = detail::prior_value_centered(F, t1, t2, m, &Pi);
  if (param == Parametrization::Mu) value *= theta * theta;
  return value;
}

// Tr[M^2] - Tr[M]^2/n for symmetric M: the matrix-dependent factor of the
// variance of U^T M U over U uniform on the unit sphere; the full variance
// is 2/(n(n+2)) times this value.
inline double sphere_quadratic_variance(const Matrix& M) {
  if (M.rows() != M.cols())
    throw std::invalid_argument("sphere_quadratic_variance: M must be square");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("sphere_quadratic_variance: M must be symmetric");
  const double t = M.trace();
  return M.squaredNorm() - t * t / M.rows();
}

}  // namespace krigor

// Gaussian process regression with an unknown linear trend:
//
//     y | beta, sigma2, theta  ~  N(H beta, sigma2 Sigma_theta),
//
// beta in R^p unknown, sigma2 > 0 unknown, Sigma_theta the kernel correlation
// matrix.  Everything downstream works through the orthonormal split
// [P W] of R^n with span(P) = span(H), W^T H = 0: the data factor through
// P^T y (trend-bearing) and W^T y (trend-free), and the flat-prior
// marginalizations over beta and sigma2 have closed forms.
//
// With z = W^T y, A = W^T Sigma W, q = z^T A^{-1} z, d = |det(P^T H)|:
//
//   L0(y | sigma2, theta) = d^{-1} (2 pi sigma2)^{-(n-p)/2} |A|^{-1/2}
//                           exp(-q / (2 sigma2))
//   L1(y | theta)         = d^{-1} pi^{-(n-p)/2} Gamma((n-p)/2) |A|^{-1/2}
//                           q^{-(n-p)/2}
//
// L0 integrates the full likelihood over beta (flat), L1 additionally over
// sigma2 with d sigma2 / sigma2.  The constants are the exact values of
// those integrals (validated against direct quadrature in the tests); only
// the theta-dependence matters for posterior computations.
//
//   beta | sigma2, theta, y ~ N(m, sigma2 V),
//     m = (P^T H)^{-1} [P^T y - P^T Sigma W A^{-1} z]
//     V = (P^T H)^{-1} [P^T Sigma P - P^T Sigma W A^{-1} W^T Sigma P]
//         (P^T H)^{-T}
//   sigma2 | theta, y ~ InvGamma(shape (n-p)/2, rate q/2).
#pragma once

#include <krigor/common.hpp>
#include <krigor/kernels.hpp>

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace krigor {

class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrendBasis {
  enum class Kind { None, Constant, Affine, Custom };
  using Fn = std::function<double(const Eigen::RowVectorXd&)>;

  Kind kind = Kind::Constant;
  std::vector<Fn> custom;

  static TrendBasis none() { return {Kind::None, {}}; }
  static TrendBasis constant() { return {Kind::Constant, {}}; }
  static TrendBasis affine() { return {Kind::Affine, {}}; }
  static TrendBasis custom_basis(std::vector<Fn> fns) {
    if (fns.empty())
      throw std::invalid_argument("TrendBasis: empty custom basis");
    return {Kind::Custom, std::move(fns)};
  }

  int p(int r) const {
    switch (kind) {
      case Kind::None:
        return 0;
      case Kind::Constant:
        return 1;
      case Kind::Affine:
        return r + 1;
      case Kind::Custom:
        return static_cast<int>(custom.size());
    }
    return 0;
  }
};

// n x p matrix of basis functions evaluated at arbitrary points (rows).
inline Matrix eval_basis(const Matrix& points, const TrendBasis& basis) {
  const Eigen::Index n = points.rows();
  const int r = static_cast<int>(points.cols());
  const int p = basis.p(r);
  Matrix H(n, p);
  switch (basis.kind) {
    case TrendBasis::Kind::None:
      break;
    case TrendBasis::Kind::Constant:
      H.col(0).setOnes();
      break;
    case TrendBasis::Kind::Affine:
      H.col(0).setOnes();
      H.rightCols(r) = points;
      break;
    case TrendBasis::Kind::Custom:
      for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) H(i, j) = basis.custom[j](points.row(i));
      break;
  }
  if (p > 0 && !H.allFinite())
    throw std::invalid_argument("eval_basis: non-finite basis value");
  return H;
}

// Basis matrix at the design; full column rank is enforced.
inline Matrix build_basis_matrix(const DesignSet& design,
                                 const TrendBasis& basis) {
  Matrix H = eval_basis(design.points(), basis);
  if (H.cols() == 0) return H;
  Eigen::JacobiSVD<Matrix> svd(H);
  const double tol = svd.singularValues()[0] *
                     std::max(H.rows(), H.cols()) *
                     std::numeric_limits<double>::epsilon();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > tol) ++rank;
  if (rank < H.cols())
    throw std::invalid_argument(
        "build_basis_matrix: basis matrix is rank-deficient at the design");
  return H;
}

// Orthonormal split of R^n adapted to H: P (n x p) orthonormal with
// span(P) = span(H), W (n x (n-p)) orthonormal with W^T H = 0, and
// P P^T + W W^T = I.
struct ModelMatrices {
  Matrix H;  // n x p
  Matrix P;  // n x p
  Matrix W;  // n x (n-p)
  Matrix PtH;           // p x p, invertible
  Matrix PtH_inv;       // p x p
  double log_abs_det_PtH = 0.0;
};

inline ModelMatrices orthonormal_split(const Matrix& H) {
  const Eigen::Index n = H.rows();
  const Eigen::Index p = H.cols();
  if (n <= p)
    throw std::invalid_argument("orthonormal_split: requires n > p");
  ModelMatrices mm;
  mm.H = H;
  if (p == 0) {
    mm.P = Matrix::Zero(n, 0);
    mm.W = Matrix::Identity(n, n);
    mm.PtH = Matrix::Zero(0, 0);
    mm.PtH_inv = Matrix::Zero(0, 0);
    mm.log_abs_det_PtH = 0.0;
    return mm;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(H);
  if (qr.rank() < p)
    throw std::invalid_argument("orthonormal_split: H is rank-deficient");
  const Matrix Q = qr.householderQ() * Matrix::Identity(n, n);
  mm.P = Q.leftCols(p);
  mm.W = Q.rightCols(n - p);
  mm.PtH = mm.P.transpose() * H;
  Eigen::PartialPivLU<Matrix> lu(mm.PtH);
  mm.PtH_inv = lu.inverse();
  mm.log_abs_det_PtH = 0.0;
  for (Eigen::Index i = 0; i < p; ++i)
    mm.log_abs_det_PtH += std::log(std::fabs(lu.matrixLU()(i, i)));
  return mm;
}

// Immutable problem description: design, kernel, trend.  States derived from
// it per theta carry the factorizations.
class Model {
 public:
  Model(DesignSet design, KernelSpec kernel, TrendBasis basis,
        double jitter = 0.0)
      : design_(std::move(design)),
        kernel_(kernel),
        basis_(std::move(basis)),
        jitter_(jitter) {
    kernel_.validate();
    if (design_.dim() != kernel_.dim)
      throw std::invalid_argument("Model: design/kernel dimension mismatch");
    H_ = build_basis_matrix(design_, basis_);
    if (design_.n() <= H_.cols())
      throw std::invalid_argument("Model: requires n > p");
    mm_ = orthonormal_split(H_);
  }

  const DesignSet& design() const { return design_; }
  const KernelSpec& kernel() const { return kernel_; }
  const TrendBasis& basis() const { return basis_; }
  const Matrix& H() const { return H_; }
  const ModelMatrices& mm() const { return mm_; }
  double jitter() const { return jitter_; }
  int n() const { return static_cast<int>(design_.n()); }
  int p() const { return static_cast<int>(H_.cols()); }
  int r() const { return kernel_.dim; }

 private:
  DesignSet design_;
  KernelSpec kernel_;
  TrendBasis basis_;
  double jitter_;
  Matrix H_;
  ModelMatrices mm_;
};

enum class DerivMode { None, Single, All };

struct StateOptions {
  DerivMode deriv_mode = DerivMode::None;
  int deriv_index = -1;
  bool sigma_factor = false;
};

// Per-theta cache: Sigma, W^T Sigma W with its Cholesky factor, optional
// Cholesky of Sigma itself, optional derivative matrices.  Immutable after
// construction; safe to share across threads.  No jitter is applied unless
// the model explicitly opts in.
class CorrelationState {
 public:
  CorrelationState(const Model& model, LengthVector theta,
                   StateOptions opts = {})
      : theta_(std::move(theta)) {
    const ModelMatrices& mm = model.mm();
    sigma_ = corr_matrix(model.design(), model.kernel(), theta_);
    if (model.jitter() > 0.0)
      sigma_.diagonal().array() += model.jitter();
    const Eigen::Index p = mm.P.cols();
    wtsw_ = (p == 0) ? sigma_
                     : Matrix(mm.W.transpose() * sigma_ * mm.W);
    wtsw_llt_.compute(wtsw_);
    if (wtsw_llt_.info() != Eigen::Success)
      throw FactorizationError(
          "CorrelationState: W^T Sigma W is not positive definite");
    const auto d = wtsw_llt_.matrixLLT().diagonal();
    log_det_wtsw_ = 2.0 * d.array().log().sum();
    const double ratio = d.maxCoeff() / d.minCoeff();
    if (ratio * ratio > 1e12) {
      ill_conditioned_ = true;
      diag::conditioning_warnings()++;
    }
    if (opts.sigma_factor) {
      sigma_llt_.emplace();
      sigma_llt_->compute(sigma_);
      if (sigma_llt_->info() != Eigen::Success)
        throw FactorizationError(
            "CorrelationState: Sigma is not positive definite");
    }
    const int r = model.r();
    dsigma_.resize(r);
    have_dsigma_.assign(r, false);
    if (opts.deriv_mode == DerivMode::All) {
      for (int i = 0; i < r; ++i) {
        dsigma_[i] = corr_matrix_deriv(model.design(), model.kernel(),
                                       theta_, i);
        have_dsigma_[i] = true;
      }
    } else if (opts.deriv_mode == DerivMode::Single) {
      if (opts.deriv_index < 0 || opts.deriv_index >= r)
        throw std::invalid_argument("StateOptions: bad deriv_index");
      dsigma_[opts.deriv_index] = corr_matrix_deriv(
          model.design(), model.kernel(), theta_, opts.deriv_index);
      have_dsigma_[opts.deriv_index] = true;
    }
  }

  const LengthVector& theta() const { return theta_; }
  const Matrix& sigma() const { return sigma_; }
  const Matrix& wtsw() const { return wtsw_; }
  const Eigen::LLT<Matrix>& wtsw_llt() const { return wtsw_llt_; }
  double log_det_wtsw() const { return log_det_wtsw_; }
  bool ill_conditioned() const { return ill_conditioned_; }

  const Eigen::LLT<Matrix>& sigma_llt() const {
    if (!sigma_llt_)
      throw std::logic_error(
          "CorrelationState: constructed without sigma_factor");
    return *sigma_llt_;
  }

  const Matrix& dsigma(int i) const {
    if (i < 0 || i >= static_cast<int>(dsigma_.size()) || !have_dsigma_[i])
      throw std::logic_error(
          "CorrelationState: derivative matrix not computed");
    return dsigma_[i];
  }

 private:
  LengthVector theta_;
  Matrix sigma_;
  Matrix wtsw_;
  Eigen::LLT<Matrix> wtsw_llt_;
  double log_det_wtsw_ = 0.0;
  bool ill_conditioned_ = false;
  std::optional<Eigen::LLT<Matrix>> sigma_llt_;
  std::vector<Matrix> dsigma_;
  std::vector<bool> have_dsigma_;
};

// Reusable pieces of the integrated likelihoods for one (y, theta).
struct LikelihoodTerms {
  Vector z;      // W^T y
  Vector alpha;  // (W^T Sigma W)^{-1} z
  double q;      // z^T alpha
};

inline LikelihoodTerms likelihood_terms(const Vector& y, const Model& model,
                                        const CorrelationState& state) {
  if (y.size() != model.n())
    throw std::invalid_argument("likelihood_terms: y size mismatch");
  LikelihoodTerms t;
  t.z = model.mm().W.transpose() * y;
  t.alpha = state.wtsw_llt().solve(t.z);
  t.q = t.z.dot(t.alpha);
  if (!(t.q >= 1e-300))
    throw DegenerateObservationError(
        "observation vector lies in the trend space: the integrated "
        "likelihood is degenerate");
  return t;
}

// Upstream guard for entry points (samplers, existence probes): rejects y
// that lies in span(H) up to machine rounding.  The likelihood itself only
// rejects once the quadratic form underflows (q < 1e-300), which rounding
// noise in W^T y does not reach; callers that iterate on such a y would
// otherwise chase pure noise.
inline void reject_if_in_trend_span(const Vector& y, const Model& model,
                                    double rel_tol = 1e-12) {
  if (y.size() != model.n())
    throw std::invalid_argument("reject_if_in_trend_span: y size mismatch");
  const double ny = y.norm();
  if (ny == 0.0 && model.p() > 0)
    throw DegenerateObservationError("observation vector is zero");
  const double nz = (model.mm().W.transpose() * y).norm();
  if (model.p() > 0 && nz <= rel_tol * ny)
    throw DegenerateObservationError(
        "observation vector lies in the trend space");
}

// log L1(y | theta): likelihood integrated over (beta, sigma2) with the
// flat x 1/sigma2 prior.  Exact normalization included.
inline double integrated_log_likelihood(const Vector& y, const Model& model,
                                        const CorrelationState& state) {
  const LikelihoodTerms t = likelihood_terms(y, model, state);
  const double np = model.n() - model.p();
  return -model.mm().log_abs_det_PtH + std::lgamma(0.5 * np) -
         0.5 * np * std::log(M_PI) - 0.5 * state.log_det_wtsw() -
         0.5 * np * std::log(t.q);
}

// log L0(y | sigma2, theta): likelihood integrated over beta only.
inline double integrated_log_likelihood_sigma2(const Vector& y, double sigma2,
                                               const Model& model,
                                               const CorrelationState& state) {
  if (!(sigma2 > 0.0))
    throw std::invalid_argument("integrated_log_likelihood_sigma2: sigma2");
  const LikelihoodTerms t = likelihood_terms(y, model, state);
  const double np = model.n() - model.p();
  return -model.mm().log_abs_det_PtH -
         0.5 * np * std::log(2.0 * M_PI * sigma2) -
         0.5 * state.log_det_wtsw() - 0.5 * t.q / sigma2;
}

// sigma2 | theta, y ~ InvGamma(shape, rate), density proportional to
// x^{-shape-1} exp(-rate/x).
struct SigmaPosterior {
  double shape;
  double rate;

  double mean() const {
    if (shape <= 1.0)
      throw std::domain_error("SigmaPosterior: mean undefined for shape <= 1");
    return rate / (shape - 1.0);
  }
};

inline SigmaPosterior sigma2_posterior(const Vector& y, const Model& model,
                                       const CorrelationState& state) {
  const LikelihoodTerms t = likelihood_terms(y, model, state);
  return {0.5 * (model.n() - model.p()), 0.5 * t.q};
}

struct BetaPosterior {
  Vector mean;
  Matrix cov;  // already scaled by sigma2
};

inline BetaPosterior beta_posterior(const Vector& y, double sigma2,
                                    const Model& model,
                                    const CorrelationState& state) {
  if (model.p() == 0)
    throw std::logic_error("beta_posterior: model has no trend basis");
  const ModelMatrices& mm = model.mm();
  const LikelihoodTerms t = likelihood_terms(y, model, state);
  const Matrix SP = state.sigma() * mm.P;           // n x p
  const Matrix B = SP.transpose() * mm.W;           // p x (n-p), = P^T Sigma W
  BetaPosterior out;
  out.mean = mm.PtH_inv * (mm.P.transpose() * y - B * t.alpha);
  const Matrix inner =
      mm.P.transpose() * SP - B * state.wtsw_llt().solve(B.transpose());
  Matrix cov = sigma2 * mm.PtH_inv * inner * mm.PtH_inv.transpose();
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

// Oblique projector Q = I - H (H^T Sigma^{-1} H)^{-1} H^T Sigma^{-1}
// (identity when p = 0); satisfies W (W^T Sigma W)^{-1} W^T =
// Sigma^{-1} Q = Q^T Sigma^{-1} Q.
inline Matrix projector_Q(const Model& model, const CorrelationState& state) {
  const Eigen::Index n = model.n();
  if (model.p() == 0) return Matrix::Identity(n, n);
  const Matrix& H = model.H();
  const Matrix SiH = state.sigma_llt().solve(H);      // Sigma^{-1} H
  const Matrix G = H.transpose() * SiH;               // p x p
  Eigen::LLT<Matrix> gllt(G);
  if (gllt.info() != Eigen::Success)
    throw FactorizationError("projector_Q: H^T Sigma^{-1} H not PD");
  return Matrix::Identity(n, n) - H * gllt.solve(SiH.transpose());
}

}  // namespace krigor

// Brute-force oracles used by the tests: direct quadrature of the defining
// integrals that the closed-form marginal likelihoods are supposed to equal.
// Deliberately simple and slow; only run on tiny models.
#pragma once

#include <krigor/linear_model.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace krigor::oracle {

// Composite Simpson weights on m (odd) equispaced nodes, step h.
inline std::vector<double> simpson_weights(int m, double h) {
  if (m < 3 || m % 2 == 0)
    throw std::invalid_argument("simpson_weights: m must be odd and >= 3");
  std::vector<double> w(m, 0.0);
  for (int i = 0; i + 2 < m; i += 2) {
    w[i] += h / 3.0;
    w[i + 1] += 4.0 * h / 3.0;
    w[i + 2] += h / 3.0;
  }
  return w;
}

// Full Gaussian log-likelihood log N(y; H beta, sigma2 * Sigma).
inline double dense_log_likelihood(const Vector& y, const Matrix& H,
                                   const Vector& beta, double sigma2,
                                   const Eigen::LLT<Matrix>& sig_llt,
                                   double log_det_sigma) {
  const Eigen::Index n = y.size();
  Vector resid = y;
  if (H.cols() > 0) resid -= H * beta;
  const double quad = resid.dot(sig_llt.solve(resid));
  return -0.5 * n * std::log(2.0 * M_PI * sigma2) - 0.5 * log_det_sigma -
         0.5 * quad / sigma2;
}

// log of  I = \int\int L(y | beta, sigma2) (1/sigma2) dbeta dsigma2
// by tensor Simpson quadrature.  Restricted to p <= 1.  The integral is
// computed in the variables (btil, v) with sigma2 = e^v and
// beta = bhat + e^{v/2} btil, a smooth change of variables that keeps the
// integrand's beta-width independent of v (Jacobian e^{v} * e^{v/2 * p}
// divided by sigma2 = e^{v/2 * p}).
inline double quadrature_log_L1(const Vector& y, const Model& model,
                                const CorrelationState& state,
                                int m_beta = 1201, int m_v = 3201) {
  const int p = model.p();
  const int n = model.n();
  if (p > 1)
    throw std::invalid_argument("quadrature_log_L1: only p <= 1 supported");
  Eigen::LLT<Matrix> sig_llt(state.sigma());
  if (sig_llt.info() != Eigen::Success)
    throw FactorizationError("quadrature_log_L1: Sigma not PD");
  const double log_det_sigma =
      2.0 * sig_llt.matrixLLT().diagonal().array().log().sum();
  const Matrix& H = model.H();

  // Center and scale from the generalized least squares fit.
  double bhat = 0.0, s_btil = 1.0;
  Vector rhat = y;
  if (p == 1) {
    const Vector sih = sig_llt.solve(H.col(0));
    const double G = H.col(0).dot(sih);
    bhat = y.dot(sih) / G;
    s_btil = 1.0 / std::sqrt(G);
    rhat -= H.col(0) * bhat;
  }
  const double rss = rhat.dot(sig_llt.solve(rhat));
  const double v_hat = std::log(rss / std::max(1, n - p));

  const double v_lo = v_hat - 40.0, v_hi = v_hat + 55.0;
  const std::vector<double> wv = simpson_weights(m_v, (v_hi - v_lo) / (m_v - 1));
  std::vector<double> wb;
  double b_lo = 0.0, hb = 0.0;
  if (p == 1) {
    b_lo = -15.0 * s_btil;
    hb = 2.0 * 15.0 * s_btil / (m_beta - 1);
    wb = simpson_weights(m_beta, hb);
  }

  // First pass for the max of the log-integrand, second for the sum.
  Vector beta(p);
  double log_max = -std::numeric_limits<double>::infinity();
  std::vector<double> logvals;
  logvals.reserve(static_cast<size_t>(m_v) * (p == 1 ? m_beta : 1));
  for (int iv = 0; iv < m_v; ++iv) {
    const double v = v_lo + iv * (v_hi - v_lo) / (m_v - 1);
    const double s2 = std::exp(v);
    if (p == 0) {
      const double lg =
          dense_log_likelihood(y, H, beta, s2, sig_llt, log_det_sigma);
      logvals.push_back(lg);
      log_max = std::max(log_max, lg);
    } else {
      const double half_v = std::exp(0.5 * v);
      for (int ib = 0; ib < m_beta; ++ib) {
        const double btil = b_lo + ib * hb;
        beta(0) = bhat + half_v * btil;
        // Jacobian of (beta, sigma2) -> (btil, v) against 1/sigma2: e^{v/2}.
        const double lg =
            dense_log_likelihood(y, H, beta, s2, sig_llt, log_det_sigma) +
            0.5 * v;
        logvals.push_back(lg);
        log_max = std::max(log_max, lg);
      }
    }
  }
  double sum = 0.0;
  size_t k = 0;
  for (int iv = 0; iv < m_v; ++iv) {
    if (p == 0) {
      sum += wv[iv] * std::exp(logvals[k++] - log_max);
    } else {
      for (int ib = 0; ib < m_beta; ++ib)
        sum += wv[iv] * wb[ib] * std::exp(logvals[k++] - log_max);
    }
  }
  return log_max + std::log(sum);
}

// log of  \int L0(y | sigma2) (1/sigma2) dsigma2  via 1-D Simpson in
// v = log sigma2; valid for any p.  Must reproduce log L1.
inline double quadrature_log_L1_from_L0(const Vector& y, const Model& model,
                                        const CorrelationState& state,
                                        int m_v = 4801) {
  const LikelihoodTerms t = likelihood_terms(y, model, state);
  const double v_hat = std::log(t.q / std::max(1, model.n() - model.p()));
  const double v_lo = v_hat - 40.0, v_hi = v_hat + 55.0;
  const std::vector<double> wv = simpson_weights(m_v, (v_hi - v_lo) / (m_v - 1));
  std::vector<double> logvals(m_v);
  double log_max = -std::numeric_limits<double>::infinity();
  for (int iv = 0; iv < m_v; ++iv) {
    const double v = v_lo + iv * (v_hi - v_lo) / (m_v - 1);
    logvals[iv] =
        integrated_log_likelihood_sigma2(y, std::exp(v), model, state);
    log_max = std::max(log_max, logvals[iv]);
  }
  double sum = 0.0;
  for (int iv = 0; iv < m_v; ++iv)
    sum += wv[iv] * std::exp(logvals[iv] - log_max);
  return log_max + std::log(sum);
}

}  // namespace krigor::oracle

// Distribution helpers used by intervals and diagnostics: Normal and
// Student CDF/quantile (thin wrappers over Boost.Math) and a two-sample
// Kolmogorov-Smirnov test with the asymptotic p-value.
#pragma once

#include <krigor/common.hpp>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace krigor {

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
  if (!(sd > 0.0)) throw std::invalid_argument("normal_cdf: sd <= 0");
  return boost::math::cdf(boost::math::normal_distribution<>(mean, sd), x);
}

inline double normal_quantile(double p, double mean = 0.0, double sd = 1.0) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile: p in (0,1)");
  if (!(sd > 0.0)) throw std::invalid_argument("normal_quantile: sd <= 0");
  return boost::math::quantile(boost::math::normal_distribution<>(mean, sd),
                               p);
}

// CDF/quantile of the standardized Student t with dof degrees of freedom.
inline double student_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("student_cdf: dof <= 0");
  return boost::math::cdf(boost::math::students_t_distribution<>(dof), t);
}

inline double student_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("student_quantile: p in (0,1)");
  if (!(dof > 0.0)) throw std::invalid_argument("student_quantile: dof <= 0");
  return boost::math::quantile(boost::math::students_t_distribution<>(dof),
                               p);
}

struct KsResult {
  double statistic = 0.0;  // sup |F1 - F2|
  double p_value = 1.0;    // asymptotic, with small-sample continuity tweak
};

// Kolmogorov tail Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_tail(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16 * std::max(sum, 1e-300)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("ks_two_sample: need at least 2 points each");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double d = 0.0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(i / na - j / nb));
  }
  KsResult out;
  out.statistic = d;
  const double ne = na * nb / (na + nb);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  out.p_value = kolmogorov_tail(lambda);
  return out;
}

inline KsResult ks_two_sample(const Vector& a, const Vector& b) {
  return ks_two_sample(
      std::vector<double>(a.data(), a.data() + a.size()),
      std::vector<double>(b.data(), b.data() + b.size()));
}

}  // namespace krigor

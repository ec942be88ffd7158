// Coverage benchmark harness: simulate responses on random designs, fit each
// requested method, and measure average coverage and average mean length of
// equal-tailed prediction intervals at fresh test points.
//
// Responses come either from a Gaussian process drawn jointly at design and
// test points (so coverage is judged against the same realization) or from a
// deterministic test function.  Methods:
//   true   conditional Gaussian with the generating trend, variance and
//          lengths plugged in (only meaningful for a well-specified GP);
//   mle    Student predictive at the integrated-likelihood maximizer;
//   map    Student predictive at the posterior-mode estimate;
//   fpd    equal-weight Student mixture over retained posterior draws.
//
// Every replicate derives its own seed from (master seed, replicate index)
// by a counter-based split, so replicates reproduce bit-for-bit regardless
// of execution order and of which methods run alongside.
#pragma once

#include <krigor/estimation.hpp>
#include <krigor/existence.hpp>
#include <krigor/gibbs.hpp>
#include <krigor/prediction.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace krigor {

// Raised instead of running when the pre-flight existence check fails and
// force is not set; carries the report so callers can print it.
class ExistenceGateError : public std::runtime_error {
 public:
  explicit ExistenceGateError(ExistenceReport rep)
      : std::runtime_error(
            "existence gate reports not-guaranteed; set the force flag to run "
            "anyway"),
        report(std::move(rep)) {}
  ExistenceReport report;
};

enum class Method { True, Mle, Map, Fpd };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::True:
      return "true";
    case Method::Mle:
      return "mle";
    case Method::Map:
      return "map";
    case Method::Fpd:
      return "fpd";
  }
  return "?";
}

struct GpGenerator {
  // Trend: coefficients on the model's own basis (well-specified), or an
  // arbitrary mean function for misspecification studies.
  Vector beta;
  std::function<double(const Eigen::RowVectorXd&)> mean_fn;
  double sigma2 = 1.0;
  Vector theta_star;
  KernelSpec kernel;                 // generation kernel
  bool squared_exponential = false;  // use the nu -> inf limit instead
};

struct DeterministicGenerator {
  enum class Fn { Ackley, Rastrigin };
  Fn fn = Fn::Ackley;
  double slope = 0.0;  // linear add-on, Rastrigin variants only
};

struct ExperimentConfig {
  int r = 3;
  int n = 30;
  int n_designs = 50;  // full-scale studies use 500
  int n_tests = 200;   // full-scale studies use 1000
  double level = 0.95;
  std::variant<GpGenerator, DeterministicGenerator> generator;
  TrendBasis basis = TrendBasis::constant();
  KernelSpec model_kernel;
  std::vector<Method> methods{Method::True, Method::Mle, Method::Map,
                              Method::Fpd};
  std::uint64_t seed = 0;
  bool force = false;      // run even if the existence gate fails
  int target_block = 32;   // targets per prediction batch; marginals are
                           // unaffected, this only caps matrix sizes
  ChainConfig chain;       // fpd settings
  OptimOptions optim;      // mle/map settings

  void validate() const {
    if (n_designs < 1 || n_tests < 1)
      throw std::invalid_argument("ExperimentConfig: need >= 1 design and test");
    if (!(level > 0.0 && level < 1.0))
      throw std::invalid_argument("ExperimentConfig: level outside (0,1)");
    if (model_kernel.dim != r)
      throw std::invalid_argument("ExperimentConfig: model kernel dim != r");
    if (target_block < 1)
      throw std::invalid_argument("ExperimentConfig: target_block < 1");
    const bool has_true =
        std::find(methods.begin(), methods.end(), Method::True) != methods.end();
    if (methods.empty())
      throw std::invalid_argument("ExperimentConfig: no methods");
    if (const auto* g = std::get_if<GpGenerator>(&generator)) {
      if (g->kernel.dim != r)
        throw std::invalid_argument(
            "ExperimentConfig: generation kernel dim != r");
      if (g->theta_star.size() != r)
        throw std::invalid_argument("ExperimentConfig: theta_star size != r");
      if ((g->theta_star.array() <= 0.0).any())
        throw std::invalid_argument("ExperimentConfig: theta_star <= 0");
      if (g->sigma2 < 0.0)
        throw std::invalid_argument("ExperimentConfig: sigma2 < 0");
      if (!g->mean_fn && g->beta.size() != basis.p(r))
        throw std::invalid_argument(
            "ExperimentConfig: beta size does not match the trend basis");
      if (has_true) {
        const bool well_specified =
            !g->mean_fn && !g->squared_exponential &&
            g->kernel.nu == model_kernel.nu &&
            g->kernel.family == model_kernel.family &&
            g->kernel.dim == model_kernel.dim;
        if (!well_specified)
          throw std::invalid_argument(
              "ExperimentConfig: the 'true' method needs a well-specified GP");
      }
    } else {
      const auto& det = std::get<DeterministicGenerator>(generator);
      if (r != 7)
        throw std::invalid_argument(
            "ExperimentConfig: deterministic test functions are 7-dimensional");
      if (det.slope < 0.0)
        throw std::invalid_argument("ExperimentConfig: negative slope");
      if (det.fn == DeterministicGenerator::Fn::Ackley && det.slope != 0.0)
        throw std::invalid_argument(
            "ExperimentConfig: linear add-on is a Rastrigin variant");
      if (has_true)
        throw std::invalid_argument(
            "ExperimentConfig: no 'true' method for deterministic targets");
    }
  }
};

struct MethodSummary {
  Method method = Method::True;
  double coverage = 0.0;
  double coverage_se = 0.0;  // sqrt(c(1-c)/effective designs)
  double mean_length = 0.0;
  double length_se = 0.0;
  std::vector<double> per_design_coverage;
  std::vector<double> per_design_length;
};

struct BenchResult {
  int designs_attempted = 0;
  int designs_effective = 0;
  int failures = 0;
  std::vector<std::string> failure_notes;
  ExistenceReport existence;
  std::vector<MethodSummary> methods;
};

// 7-dimensional test functions, as conventionally shifted so the Ackley
// minimum at the origin is exactly zero.
inline double ackley(const Eigen::RowVectorXd& x) {
  if (x.size() != 7)
    throw std::invalid_argument("ackley: expects a 7-dimensional point");
  const double ms = x.squaredNorm() / 7.0;
  double mc = 0.0;
  for (int i = 0; i < 7; ++i) mc += std::cos(2.0 * M_PI * x[i]);
  mc /= 7.0;
  return 20.0 + std::exp(1.0) - 20.0 * std::exp(-0.2 * std::sqrt(ms)) -
         std::exp(mc);
}

inline double rastrigin(const Eigen::RowVectorXd& x, double slope = 0.0) {
  if (x.size() != 7)
    throw std::invalid_argument("rastrigin: expects a 7-dimensional point");
  if (slope < 0.0) throw std::invalid_argument("rastrigin: negative slope");
  double s = 70.0;
  for (int i = 0; i < 7; ++i)
    s += x[i] * x[i] - 10.0 * std::cos(2.0 * M_PI * x[i]) + slope * x[i];
  return s;
}

// Correlation matrix used for generation only.  The squared-exponential
// variant is the smoothness limit of the library's kernel convention: that
// convention scales the argument by 2 sqrt(nu), and the classical limit of a
// Matern kernel with inner scaling sqrt(2 nu) d / rho is exp(-d^2/(2 rho^2)).
// Matching 2 sqrt(nu) t = sqrt(2 nu) (sqrt(2) t) gives d / rho = sqrt(2) t,
// so the limit is exp(-t^2) with t^2 = sum_j (delta_j / theta_j)^2.  For this
// form the geometric and tensorized anisotropies coincide, since the
// exponential factorizes over coordinates.
inline Matrix generation_corr(const Matrix& pts, const KernelSpec& spec,
                              bool squared_exponential,
                              const LengthVector& theta) {
  if (!squared_exponential) return corr_matrix(DesignSet(pts), spec, theta);
  const Eigen::Index m = pts.rows();
  Matrix out(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    out(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < m; ++b) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < pts.cols(); ++j) {
        const double d = (pts(a, j) - pts(b, j)) / theta[j];
        s += d * d;
      }
      out(a, b) = std::exp(-s);
      out(b, a) = out(a, b);
    }
  }
  return out;
}

// One joint draw of the generating process at the given points.  A diagonal
// jitter of 1e-10 is permitted here (generation only, never inference).
inline Vector sample_gp(const Matrix& pts,
                        const std::function<double(const Eigen::RowVectorXd&)>& mean,
                        double sigma2, const LengthVector& theta,
                        const KernelSpec& spec, bool squared_exponential,
                        Rng& rng) {
  const Eigen::Index m = pts.rows();
  Vector out(m);
  for (Eigen::Index i = 0; i < m; ++i)
    out[i] = mean ? mean(pts.row(i)) : 0.0;
  if (sigma2 == 0.0) return out;
  if (sigma2 < 0.0) throw std::invalid_argument("sample_gp: sigma2 < 0");

  Matrix sig = generation_corr(pts, spec, squared_exponential, theta);
  sig.diagonal().array() += 1e-10;
  Eigen::LLT<Matrix> llt(sig);
  if (llt.info() != Eigen::Success)
    throw FactorizationError("sample_gp: generation covariance not PD");
  Vector z(m);
  for (Eigen::Index i = 0; i < m; ++i) z[i] = rng.normal();
  const Vector lz = llt.matrixL() * z;
  out += std::sqrt(sigma2) * lz;
  return out;
}

namespace detail {

// Interval sweep for one method on one design; returns (coverage, length).
template <typename MakeDist>
std::pair<double, double> interval_sweep(const Matrix& tests, const Vector& y0,
                                         double level, int block,
                                         MakeDist&& make_dist) {
  const Eigen::Index m = tests.rows();
  double hits = 0.0, total_len = 0.0;
  for (Eigen::Index start = 0; start < m; start += block) {
    const Eigen::Index count = std::min<Eigen::Index>(block, m - start);
    const Matrix chunk = tests.middleRows(start, count);
    const PredictiveDistribution dist = make_dist(chunk);
    for (Eigen::Index i = 0; i < count; ++i) {
      const auto [lo, hi] = prediction_interval(dist, i, level);
      if (y0[start + i] >= lo && y0[start + i] <= hi) hits += 1.0;
      total_len += hi - lo;
    }
  }
  return {hits / double(m), total_len / double(m)};
}

}  // namespace detail

inline BenchResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto* gp = std::get_if<GpGenerator>(&cfg.generator);

  const auto make_mean = [&]() -> std::function<double(const Eigen::RowVectorXd&)> {
    if (!gp) return nullptr;
    if (gp->mean_fn) return gp->mean_fn;
    if (gp->beta.size() == 0) return nullptr;
    const Vector beta = gp->beta;
    const TrendBasis basis = cfg.basis;
    return [beta, basis](const Eigen::RowVectorXd& x) {
      Matrix row(1, x.size());
      row.row(0) = x;
      return double(eval_basis(row, basis).row(0) * beta);
    };
  };
  const std::function<double(const Eigen::RowVectorXd&)> mean = make_mean();

  const auto generate = [&](const Matrix& pts, Rng& rng) -> Vector {
    if (gp)
      return sample_gp(pts, mean, gp->sigma2, LengthVector(gp->theta_star),
                       gp->kernel, gp->squared_exponential, rng);
    const auto& det = std::get<DeterministicGenerator>(cfg.generator);
    Vector out(pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      out[i] = det.fn == DeterministicGenerator::Fn::Ackley
                   ? ackley(pts.row(i))
                   : rastrigin(pts.row(i), det.slope);
    return out;
  };

  const auto replicate_data = [&](int d, Matrix& design, Matrix& tests,
                                  Vector& y, Vector& y0) {
    Rng rng(substream_seed(cfg.seed, d));
    Matrix joint(cfg.n + cfg.n_tests, cfg.r);
    for (Eigen::Index i = 0; i < joint.rows(); ++i)
      for (int j = 0; j < cfg.r; ++j) joint(i, j) = rng.uniform01();
    const Vector y_joint = generate(joint, rng);
    design = joint.topRows(cfg.n);
    tests = joint.bottomRows(cfg.n_tests);
    y = y_joint.head(cfg.n);
    y0 = y_joint.tail(cfg.n_tests);
  };

  BenchResult res;
  res.designs_attempted = cfg.n_designs;
  res.methods.reserve(cfg.methods.size());
  for (Method m : cfg.methods) {
    MethodSummary s;
    s.method = m;
    res.methods.push_back(std::move(s));
  }

  // Existence gate on the first replicate's data.
  {
    Matrix design, tests;
    Vector y, y0;
    replicate_data(0, design, tests, y, y0);
    const Model model(DesignSet(design), cfg.model_kernel, cfg.basis);
    res.existence = check_existence(y, model, cfg.seed);
    if (res.existence.verdict == ExistenceVerdict::NotGuaranteed) {
      if (!cfg.force) throw ExistenceGateError(res.existence);
      res.failure_notes.push_back(
          "existence gate not-guaranteed, forced to run; the conditional "
          "tabulation monitors tail integrability at runtime");
    }
  }

  for (int d = 0; d < cfg.n_designs; ++d) {
    try {
      const std::uint64_t sub = substream_seed(cfg.seed, d);
      Matrix design, tests;
      Vector y, y0;
      replicate_data(d, design, tests, y, y0);
      const Model model(DesignSet(design), cfg.model_kernel, cfg.basis);

      std::vector<std::pair<double, double>> rows;
      rows.reserve(cfg.methods.size());
      for (Method m : cfg.methods) {
        switch (m) {
          case Method::True: {
            rows.push_back(detail::interval_sweep(
                tests, y0, cfg.level, cfg.target_block,
                [&](const Matrix& chunk) {
                  return predict_known_all(chunk, y, gp->beta, gp->sigma2,
                                           model, LengthVector(gp->theta_star));
                }));
            break;
          }
          case Method::Mle:
          case Method::Map: {
            OptimOptions opt = cfg.optim;
            opt.seed = substream_seed(sub, m == Method::Mle ? 101 : 102);
            const OptimResult fit = m == Method::Mle
                                        ? mle(y, model, opt)
                                        : map_estimate(y, model, opt);
            rows.push_back(detail::interval_sweep(
                tests, y0, cfg.level, cfg.target_block,
                [&](const Matrix& chunk) {
                  return predict_student(chunk, y, model, fit.theta);
                }));
            break;
          }
          case Method::Fpd: {
            ChainConfig cc = cfg.chain;
            cc.seed = substream_seed(sub, 103);
            const ChainOutput chain = run_chain(y, model, cc);
            rows.push_back(detail::interval_sweep(
                tests, y0, cfg.level, cfg.target_block,
                [&](const Matrix& chunk) {
                  return predict_full_bayes(chunk, y, model, chain);
                }));
            break;
          }
        }
      }
      for (size_t k = 0; k < rows.size(); ++k) {
        res.methods[k].per_design_coverage.push_back(rows[k].first);
        res.methods[k].per_design_length.push_back(rows[k].second);
      }
    } catch (const std::exception& e) {
      ++res.failures;
      res.failure_notes.push_back("replicate " + std::to_string(d) + ": " +
                                  e.what());
    }
  }

  res.designs_effective = cfg.n_designs - res.failures;
  if (res.designs_effective == 0)
    throw std::runtime_error("run_experiment: every replicate failed");

  for (MethodSummary& s : res.methods) {
    const auto& cov = s.per_design_coverage;
    const auto& len = s.per_design_length;
    const double ne = double(cov.size());
    s.coverage = std::accumulate(cov.begin(), cov.end(), 0.0) / ne;
    s.coverage_se = std::sqrt(s.coverage * (1.0 - s.coverage) / ne);
    s.mean_length = std::accumulate(len.begin(), len.end(), 0.0) / ne;
    double ss = 0.0;
    for (double v : len) ss += (v - s.mean_length) * (v - s.mean_length);
    s.length_se = ne > 1 ? std::sqrt(ss / (ne - 1.0) / ne) : 0.0;
  }
  return res;
}

// Plain-text table: one row per method.
inline std::string format_table(const BenchResult& res) {
  char buf[128];
  std::string out =
      "method   coverage (se)      mean length (se)\n";
  for (const MethodSummary& s : res.methods) {
    std::snprintf(buf, sizeof(buf), "%-8s %.3f (%.3f)      %.3f (%.3f)\n",
                  to_string(s.method), s.coverage, s.coverage_se,
                  s.mean_length, s.length_se);
    out += buf;
  }
  if (res.failures > 0)
    out += "excluded replicates: " + std::to_string(res.failures) + " of " +
           std::to_string(res.designs_attempted) + "\n";
  return out;
}

}  // namespace krigor

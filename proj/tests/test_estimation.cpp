// Estimator checks: simulation-based consistency, ascent bookkeeping,
// parametrization invariance of the likelihood argmax, and a dense-grid
// oracle for the posterior mode in one dimension.
#include <catch2/catch_amalgamated.hpp>

#include <krigor/estimation.hpp>

#include <cmath>

#include "test_support.hpp"

using namespace krigor;

namespace {

Model make_model(Rng& rng, int n, int r, double nu, TrendBasis basis) {
  KernelSpec spec;
  spec.nu = nu;
  spec.dim = r;
  return Model(DesignSet(test_support::random_design(rng, n, r)), spec,
               std::move(basis));
}

Vector gp_draw(Rng& rng, const Model& model, const LengthVector& theta,
               double trend, double sigma2) {
  const Matrix sig = corr_matrix(model.design(), model.kernel(), theta);
  Vector z(model.n());
  for (int i = 0; i < model.n(); ++i) z[i] = rng.normal();
  Vector y = std::sqrt(sigma2) *
             (Eigen::LLT<Matrix>(sig).matrixL() * z).eval();
  return y.array() + trend;
}

}  // namespace

TEST_CASE("mle recovers the generating length scale most of the time") {
  Rng rng(600);
  const double theta_star = 0.5;
  int within = 0;
  OptimOptions opts;
  opts.restarts = 4;
  opts.max_iters = 200;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 20;
    Matrix pts(n, 1);
    for (int i = 0; i < n; ++i) pts(i, 0) = (i + rng.uniform01()) / n;
    KernelSpec spec;
    spec.nu = 2.5;
    spec.dim = 1;
    Model model(DesignSet(pts), spec, TrendBasis::constant());
    const Vector y =
        gp_draw(rng, model, LengthVector(Vector::Constant(1, theta_star)),
                1.0, 1.0);
    opts.seed = 7000 + rep;
    const OptimResult res = mle(y, model, opts);
    if (res.theta[0] > theta_star / 2 && res.theta[0] < theta_star * 2)
      ++within;
  }
  CHECK(within >= 80);
}

TEST_CASE("optimum dominates every restart's starting value") {
  Rng rng(601);
  Model model = make_model(rng, 12, 2, 2.5, TrendBasis::constant());
  const Vector y = gp_draw(
      rng, model, LengthVector(Vector::Constant(2, 0.5)), 0.3, 1.0);
  const OptimResult res = mle(y, model, OptimOptions{});
  REQUIRE(res.trace.size() == 10);
  for (const RestartTrace& tr : res.trace) {
    CHECK(res.value >= tr.init_value - 1e-12);
    CHECK(res.value >= tr.best_value - 1e-12);
    CHECK(tr.best_value >= tr.init_value - 1e-12);
  }
  CHECK(std::isfinite(res.value));
  CHECK(res.converged);
  for (int j = 0; j < 2; ++j) {
    CHECK(res.theta[j] > 1e-3);
    CHECK(res.theta[j] < 1e3);
  }
}

TEST_CASE("likelihood argmax is invariant under the reciprocal map") {
  Rng rng(602);
  const int n = 20;
  Matrix pts(n, 1);
  for (int i = 0; i < n; ++i) pts(i, 0) = (i + rng.uniform01()) / n;
  KernelSpec spec;
  spec.nu = 2.5;
  spec.dim = 1;
  Model model(DesignSet(pts), spec, TrendBasis::constant());
  const Vector y =
      gp_draw(rng, model, LengthVector(Vector::Constant(1, 0.4)), 0.0, 1.0);

  OptimOptions t_opts;
  t_opts.seed = 11;
  OptimOptions m_opts;
  m_opts.seed = 12;
  m_opts.param = Parametrization::Mu;
  const OptimResult rt = mle(y, model, t_opts);
  const OptimResult rm = mle(y, model, m_opts);
  CHECK(rm.theta[0] == Catch::Approx(rt.theta[0]).epsilon(1e-4));
  CHECK(rm.value == Catch::Approx(rt.value).margin(1e-7));
}

TEST_CASE("posterior mode with a constant prior stub is the mle") {
  Rng rng(603);
  Model model = make_model(rng, 10, 2, 1.5, TrendBasis::constant());
  const Vector y = gp_draw(
      rng, model, LengthVector(Vector::Constant(2, 0.6)), 0.0, 1.0);
  OptimOptions opts;
  opts.seed = 21;
  const LogConditionalPrior flat = [](int, const Model&,
                                      const CorrelationState&) {
    return 0.0;
  };
  const OptimResult a = mle(y, model, opts);
  const OptimResult b = map_estimate(y, model, opts, flat);
  // Identical objective and identical restart schedule: same trajectory.
  CHECK(a.theta[0] == b.theta[0]);
  CHECK(a.theta[1] == b.theta[1]);
  CHECK(a.value == b.value);
}

TEST_CASE("posterior-mode objective decomposes exactly") {
  Rng rng(604);
  Model model = make_model(rng, 11, 2, 2.5, TrendBasis::affine());
  const Vector y = gp_draw(
      rng, model, LengthVector(Vector::Constant(2, 0.5)), 0.2, 1.0);
  OptimOptions opts;
  opts.seed = 31;
  opts.restarts = 6;
  const OptimResult res = map_estimate(y, model, opts);

  StateOptions so;
  so.deriv_mode = DerivMode::All;
  const CorrelationState state(model, res.theta, so);
  double expect = integrated_log_likelihood(y, model, state);
  for (int i = 0; i < model.r(); ++i)
    expect += std::log(conditional_prior_from_state(i, model, state).value);
  CHECK(res.value == Catch::Approx(expect).margin(1e-12));

  // And the two estimators disagree here: the prior is not flat.
  const OptimResult ml = mle(y, model, opts);
  CHECK((res.theta.theta() - ml.theta.theta()).norm() > 1e-6);
}

TEST_CASE("one-dimensional posterior mode against a dense-grid oracle") {
  Rng rng(605);
  const int n = 12;
  Matrix pts(n, 1);
  for (int i = 0; i < n; ++i) pts(i, 0) = (i + rng.uniform01()) / n;
  KernelSpec spec;
  spec.nu = 2.5;
  spec.dim = 1;
  Model model(DesignSet(pts), spec, TrendBasis::constant());
  const Vector y =
      gp_draw(rng, model, LengthVector(Vector::Constant(1, 0.5)), 1.0, 1.0);

  const auto objective = [&](double th) {
    try {
      return map_objective(y, model, LengthVector(Vector::Constant(1, th)),
                           reference_log_prior());
    } catch (const FactorizationError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  // Coarse log grid, then ternary refinement around the best node.
  const int m = 800;
  const double llo = std::log(5e-3), lhi = std::log(2e2);
  int kbest = 0;
  double vbest = -std::numeric_limits<double>::infinity();
  std::vector<double> nodes(m);
  for (int k = 0; k < m; ++k) {
    nodes[k] = std::exp(llo + (lhi - llo) * k / (m - 1));
    const double v = objective(nodes[k]);
    if (v > vbest) {
      vbest = v;
      kbest = k;
    }
  }
  REQUIRE(kbest > 0);
  REQUIRE(kbest < m - 1);
  double a = nodes[kbest - 1], b = nodes[kbest + 1];
  while ((b - a) / b > 1e-8) {
    const double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
    if (objective(m1) < objective(m2))
      a = m1;
    else
      b = m2;
  }
  const double oracle = 0.5 * (a + b);

  OptimOptions opts;
  opts.seed = 41;
  const OptimResult res = map_estimate(y, model, opts);
  CHECK(res.theta[0] == Catch::Approx(oracle).epsilon(1e-3));
}

TEST_CASE("same seed, same estimate") {
  Rng rng(606);
  Model model = make_model(rng, 10, 2, 2.5, TrendBasis::constant());
  const Vector y = gp_draw(
      rng, model, LengthVector(Vector::Constant(2, 0.4)), 0.0, 1.0);
  OptimOptions opts;
  opts.seed = 55;
  opts.restarts = 5;
  const OptimResult a = mle(y, model, opts);
  const OptimResult b = mle(y, model, opts);
  CHECK(a.theta[0] == b.theta[0]);
  CHECK(a.theta[1] == b.theta[1]);
  CHECK(a.value == b.value);
}

TEST_CASE("estimates pinned to the box edge are flagged") {
  Rng rng(607);
  const int n = 15;
  Matrix pts(n, 1);
  for (int i = 0; i < n; ++i) pts(i, 0) = (i + rng.uniform01()) / n;
  KernelSpec spec;
  spec.nu = 2.5;
  spec.dim = 1;
  Model model(DesignSet(pts), spec, TrendBasis::constant());
  const Vector y =
      gp_draw(rng, model, LengthVector(Vector::Constant(1, 0.5)), 0.0, 1.0);

  // Box that excludes the peak: the ascent parks on the upper edge.
  OptimOptions opts;
  opts.seed = 61;
  opts.theta_lo = 1e-3;
  opts.theta_hi = 0.02;
  const OptimResult res = mle(y, model, opts);
  CHECK_FALSE(res.converged);
  CHECK(res.theta[0] <= 0.02 * (1.0 + 1e-12));
}

TEST_CASE("estimation argument errors") {
  Rng rng(608);
  Model model = make_model(rng, 8, 1, 2.5, TrendBasis::constant());
  const Vector y = gp_draw(
      rng, model, LengthVector(Vector::Constant(1, 0.5)), 0.0, 1.0);

  OptimOptions bad;
  bad.restarts = 0;
  CHECK_THROWS_AS(mle(y, model, bad), std::invalid_argument);
  bad = OptimOptions{};
  bad.theta_hi = bad.theta_lo;
  CHECK_THROWS_AS(mle(y, model, bad), std::invalid_argument);

  CHECK_THROWS_AS(mle(Vector::Constant(8, 3.0), model, OptimOptions{}),
                  DegenerateObservationError);

  // A prior that always rejects starves every restart.
  OptimOptions tiny;
  tiny.restarts = 2;
  tiny.max_iters = 4;
  const LogConditionalPrior never = [](int, const Model&,
                                       const CorrelationState&) {
    return -std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(map_estimate(y, model, tiny, never), std::runtime_error);
}

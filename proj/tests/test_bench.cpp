// Harness checks: test-function arithmetic, generator moments, calibration
// of the known-everything method, seed-per-replicate invariance, and the
// existence gate wiring.
#include <catch2/catch_amalgamated.hpp>

#include <krigor/bench.hpp>

#include <cmath>

#include "test_support.hpp"

using namespace krigor;

namespace {

ExperimentConfig gp_config(int r, int n, double theta, double beta) {
  ExperimentConfig cfg;
  cfg.r = r;
  cfg.n = n;
  cfg.model_kernel.nu = 2.5;
  cfg.model_kernel.dim = r;
  cfg.basis = TrendBasis::constant();
  GpGenerator gen;
  gen.beta = Vector::Constant(1, beta);
  gen.sigma2 = 1.0;
  gen.theta_star = Vector::Constant(r, theta);
  gen.kernel = cfg.model_kernel;
  cfg.generator = gen;
  return cfg;
}

}  // namespace

TEST_CASE("test function values") {
  Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(7);
  Eigen::RowVectorXd half = Eigen::RowVectorXd::Constant(7, 0.5);
  Eigen::RowVectorXd ones = Eigen::RowVectorXd::Constant(7, 1.0);

  CHECK(ackley(zero) == Catch::Approx(0.0).margin(1e-13));
  const double expect_half =
      20.0 + std::exp(1.0) - 20.0 * std::exp(-0.1) - std::exp(-1.0);
  CHECK(ackley(half) == Catch::Approx(expect_half).epsilon(1e-14));

  // Permutation symmetry is exact: the sums do not depend on order.
  Eigen::RowVectorXd x(7), xp(7);
  x << 0.1, 0.9, 0.3, 0.7, 0.2, 0.8, 0.5;
  xp << 0.5, 0.8, 0.2, 0.7, 0.3, 0.9, 0.1;
  CHECK(ackley(x) == Catch::Approx(ackley(xp)).margin(1e-13));

  CHECK(rastrigin(zero) == Catch::Approx(0.0).margin(1e-12));
  CHECK(rastrigin(ones) == Catch::Approx(7.0).margin(1e-12));
  CHECK(rastrigin(ones, 120.0) ==
        Catch::Approx(7.0 + 840.0).margin(1e-12));

  Eigen::RowVectorXd bad(3);
  bad << 0.1, 0.2, 0.3;
  CHECK_THROWS_AS(ackley(bad), std::invalid_argument);
  CHECK_THROWS_AS(rastrigin(bad), std::invalid_argument);
  CHECK_THROWS_AS(rastrigin(ones, -1.0), std::invalid_argument);
}

TEST_CASE("generator: zero variance returns the mean exactly") {
  Rng rng(800);
  Matrix pts = test_support::random_design(rng, 6, 2);
  KernelSpec spec;
  spec.nu = 2.5;
  spec.dim = 2;
  const auto mean = [](const Eigen::RowVectorXd& x) {
    return 3.0 + x[0] - 2.0 * x[1];
  };
  Rng gen_rng(801);
  const Vector y = sample_gp(pts, mean, 0.0,
                             LengthVector(Vector::Constant(2, 0.5)), spec,
                             false, gen_rng);
  for (int i = 0; i < 6; ++i)
    CHECK(y[i] == Catch::Approx(mean(pts.row(i))).margin(1e-15));
}

TEST_CASE("generator: fixed seed reproduces the draw") {
  Rng rng(802);
  Matrix pts = test_support::random_design(rng, 5, 1);
  KernelSpec spec;
  spec.nu = 1.5;
  spec.dim = 1;
  Rng a(77), b(77);
  const LengthVector theta(Vector::Constant(1, 0.4));
  const Vector y1 = sample_gp(pts, nullptr, 1.0, theta, spec, false, a);
  const Vector y2 = sample_gp(pts, nullptr, 1.0, theta, spec, false, b);
  CHECK((y1 - y2).norm() == 0.0);
}

TEST_CASE("generator: empirical covariance matches sigma2 Sigma") {
  Rng rng(803);
  Matrix pts(3, 1);
  pts << 0.1, 0.4, 0.9;
  KernelSpec spec;
  spec.nu = 2.5;
  spec.dim = 1;
  const LengthVector theta(Vector::Constant(1, 0.5));
  const double sigma2 = 2.0;

  const Matrix sig = generation_corr(pts, spec, false, theta);
  const long draws = 10000;
  Matrix acc = Matrix::Zero(3, 3);
  Rng gen_rng(804);
  for (long k = 0; k < draws; ++k) {
    const Vector y =
        sample_gp(pts, nullptr, sigma2, theta, spec, false, gen_rng);
    acc += y * y.transpose();
  }
  acc /= double(draws);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double truth = sigma2 * sig(i, j);
      const double se = sigma2 *
                        std::sqrt((sig(i, i) * sig(j, j) +
                                   sig(i, j) * sig(i, j)) /
                                  double(draws));
      CHECK(std::fabs(acc(i, j) - truth) < 3.0 * se);
    }
}

TEST_CASE("squared-exponential generation matches the smoothness limit form") {
  Rng rng(805);
  Matrix pts = test_support::random_design(rng, 5, 2);
  KernelSpec spec;
  spec.nu = 2.5;
  spec.dim = 2;
  const LengthVector theta(Vector::Constant(2, 0.7));
  const Matrix se_geo = generation_corr(pts, spec, true, theta);
  KernelSpec tens = spec;
  tens.family = KernelSpec::Family::Tensorized;
  const Matrix se_tens = generation_corr(pts, tens, true, theta);
  // The exponential factorizes, so both anisotropy families coincide.
  CHECK((se_geo - se_tens).norm() < 1e-15);
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      double s = 0.0;
      for (int j = 0; j < 2; ++j) {
        const double d = (pts(a, j) - pts(b, j)) / 0.7;
        s += d * d;
      }
      CHECK(se_geo(a, b) == Catch::Approx(std::exp(-s)).epsilon(1e-14));
    }
}

TEST_CASE("known-everything method is calibrated") {
  ExperimentConfig cfg = gp_config(1, 10, 0.5, 1.0);
  cfg.n_designs = 40;
  cfg.n_tests = 50;
  cfg.methods = {Method::True};
  cfg.seed = 901;

  for (double level : {0.8, 0.999}) {
    cfg.level = level;
    const BenchResult res = run_experiment(cfg);
    REQUIRE(res.designs_effective == 40);
    const MethodSummary& s = res.methods[0];
    const double se = std::sqrt(level * (1.0 - level) / 40.0);
    CHECK(std::fabs(s.coverage - level) < 2.0 * std::max(se, 0.01));
    CHECK(s.mean_length > 0.0);
    CHECK(s.coverage_se ==
          Catch::Approx(std::sqrt(s.coverage * (1.0 - s.coverage) / 40.0)));
  }
}

TEST_CASE("coverage and length are nondecreasing in the level") {
  ExperimentConfig cfg = gp_config(1, 12, 0.4, 0.0);
  cfg.n_designs = 6;
  cfg.n_tests = 40;
  cfg.methods = {Method::True, Method::Mle};
  cfg.optim.restarts = 3;
  cfg.seed = 902;

  cfg.level = 0.8;
  const BenchResult lo = run_experiment(cfg);
  cfg.level = 0.95;
  const BenchResult hi = run_experiment(cfg);
  for (size_t m = 0; m < 2; ++m) {
    for (int d = 0; d < 6; ++d) {
      CHECK(hi.methods[m].per_design_length[d] >=
            lo.methods[m].per_design_length[d]);
      CHECK(hi.methods[m].per_design_coverage[d] >=
            lo.methods[m].per_design_coverage[d]);
    }
  }
}

TEST_CASE("per-replicate records do not depend on the method roster") {
  ExperimentConfig cfg = gp_config(1, 10, 0.5, 0.5);
  cfg.n_designs = 3;
  cfg.n_tests = 20;
  cfg.seed = 903;
  cfg.optim.restarts = 3;

  cfg.methods = {Method::True};
  const BenchResult solo = run_experiment(cfg);
  cfg.methods = {Method::Mle, Method::True};
  const BenchResult both = run_experiment(cfg);

  for (int d = 0; d < 3; ++d) {
    CHECK(solo.methods[0].per_design_coverage[d] ==
          both.methods[1].per_design_coverage[d]);
    CHECK(solo.methods[0].per_design_length[d] ==
          both.methods[1].per_design_length[d]);
  }
}

TEST_CASE("full posterior method runs end to end") {
  ExperimentConfig cfg = gp_config(1, 10, 0.5, 1.0);
  cfg.n_designs = 2;
  cfg.n_tests = 15;
  cfg.methods = {Method::Fpd};
  cfg.seed = 904;
  cfg.chain.n_iter = 300;
  cfg.chain.burn_in = 100;
  cfg.chain.grid_size = 128;

  const BenchResult res = run_experiment(cfg);
  REQUIRE(res.designs_effective == 2);
  const MethodSummary& s = res.methods[0];
  for (double c : s.per_design_coverage) {
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
  for (double l : s.per_design_length) CHECK(l > 0.0);
  CHECK(format_table(res).find("fpd") != std::string::npos);
}

TEST_CASE("deterministic targets run without a true method") {
  ExperimentConfig cfg;
  cfg.r = 7;
  cfg.n = 40;
  cfg.n_designs = 1;
  cfg.n_tests = 10;
  cfg.model_kernel.nu = 2.5;
  cfg.model_kernel.dim = 7;
  cfg.basis = TrendBasis::constant();
  DeterministicGenerator det;
  det.fn = DeterministicGenerator::Fn::Rastrigin;
  det.slope = 0.0;
  cfg.generator = det;
  cfg.methods = {Method::Mle};
  cfg.optim.restarts = 2;
  cfg.optim.max_iters = 120;
  cfg.seed = 905;

  const BenchResult res = run_experiment(cfg);
  REQUIRE(res.designs_effective == 1);
  CHECK(res.methods[0].per_design_length[0] > 0.0);
}

TEST_CASE("existence gate blocks unless forced") {
  ExperimentConfig cfg = gp_config(3, 5, 0.5, 1.0);
  cfg.n_designs = 1;
  cfg.n_tests = 5;
  cfg.methods = {Method::Mle};
  cfg.optim.restarts = 2;
  cfg.seed = 906;

  try {
    run_experiment(cfg);
    FAIL("expected the gate to throw");
  } catch (const ExistenceGateError& e) {
    CHECK(e.report.verdict == ExistenceVerdict::NotGuaranteed);
  }
  cfg.force = true;
  const BenchResult res = run_experiment(cfg);
  CHECK(res.existence.verdict == ExistenceVerdict::NotGuaranteed);
  REQUIRE_FALSE(res.failure_notes.empty());
  CHECK(res.failure_notes[0].find("forced") != std::string::npos);
}

TEST_CASE("config validation") {
  ExperimentConfig cfg = gp_config(2, 12, 0.5, 1.0);

  ExperimentConfig bad = cfg;
  bad.level = 1.0;
  CHECK_THROWS_AS(run_experiment(bad), std::invalid_argument);

  bad = cfg;
  bad.model_kernel.dim = 3;
  CHECK_THROWS_AS(run_experiment(bad), std::invalid_argument);

  bad = cfg;
  std::get<GpGenerator>(bad.generator).beta = Vector::Constant(2, 1.0);
  CHECK_THROWS_AS(run_experiment(bad), std::invalid_argument);

  // 'true' demands a well-specified generator.
  bad = cfg;
  std::get<GpGenerator>(bad.generator).squared_exponential = true;
  bad.methods = {Method::True};
  CHECK_THROWS_AS(run_experiment(bad), std::invalid_argument);

  bad = cfg;
  std::get<GpGenerator>(bad.generator).kernel.nu = 1.5;
  bad.methods = {Method::True};
  CHECK_THROWS_AS(run_experiment(bad), std::invalid_argument);

  // Deterministic functions are 7-dimensional and have no 'true' method.
  bad = cfg;
  bad.generator = DeterministicGenerator{};
  CHECK_THROWS_AS(run_experiment(bad), std::invalid_argument);

  bad = cfg;
  bad.r = 7;
  bad.n = 20;
  bad.model_kernel.dim = 7;
  DeterministicGenerator det;
  det.fn = DeterministicGenerator::Fn::Ackley;
  det.slope = 5.0;
  bad.generator = det;
  bad.methods = {Method::Mle};
  CHECK_THROWS_AS(run_experiment(bad), std::invalid_argument);
}

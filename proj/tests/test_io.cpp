// Config parsing diagnostics plus CSV/JSON round trips.  Numeric round trips
// must be bit-exact (%.17g out, strtod back).
#include <catch2/catch_amalgamated.hpp>

#include <krigor/io.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_support.hpp"

using namespace krigor;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path((std::filesystem::temp_directory_path() / name).string()) {}
  ~TempFile() { std::remove(path.c_str()); }
  void write(const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
  }
};

}  // namespace

TEST_CASE("config: sections, comments, typed getters") {
  const std::string text =
      "# leading comment\n"
      "[model]\n"
      "trend = constant\n"
      "\n"
      "[kernel]\n"
      "nu = 2.5\n"
      "; alt comment style\n"
      "family = geometric\n"
      "[chain]\n"
      "iters = 6000\n"
      "adaptive = true\n"
      "theta_star = 0.4, 0.8, 0.2\n";
  const Config cfg = Config::parse_string(text, "test.ini");

  CHECK(cfg.get("model", "trend") == "constant");
  CHECK(cfg.get_double("kernel", "nu") == 2.5);
  CHECK(cfg.get_long("chain", "iters") == 6000);
  CHECK(cfg.get_bool_or("chain", "adaptive", false));
  CHECK(cfg.get_bool_or("chain", "absent", true));
  CHECK(cfg.get_or("model", "missing", "fallback") == "fallback");
  CHECK(cfg.get_double_or("kernel", "nugget", 0.25) == 0.25);
  const std::vector<double> lst = cfg.get_list("chain", "theta_star");
  REQUIRE(lst.size() == 3);
  CHECK(lst[1] == 0.8);
  CHECK(cfg.line_of("kernel", "family") == 8);
  CHECK(cfg.text() == text);
}

TEST_CASE("config: diagnostics carry line numbers") {
  try {
    Config::parse_string("[model]\ntrend constant\n", "bad.ini");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("bad.ini:2:") != std::string::npos);
  }

  CHECK_THROWS_AS(Config::parse_string("[model\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse_string("[a]\nk = 1\nk = 2\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse_string("[]\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse_string("[a]\n= 3\n"), ConfigError);

  const Config cfg = Config::parse_string("[a]\nx = 12f\nn = 3.5\n", "t.ini");
  try {
    cfg.get_double("a", "x");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("expected a number") != std::string::npos);
  }
  CHECK_THROWS_AS(cfg.get_long("a", "n"), ConfigError);
  CHECK_THROWS_AS(cfg.get("a", "nothere"), std::runtime_error);
}

TEST_CASE("data csv: write then read is bit-exact") {
  Rng rng(150);
  Matrix X = test_support::random_design(rng, 12, 3);
  X(0, 0) = 0.1 + 0.2;  // not representable exactly in decimal shorthand
  Vector y(12);
  for (int i = 0; i < 12; ++i) y[i] = rng.normal() * 1e-8;

  TempFile f("krigor_io_data.csv");
  write_data_csv(f.path, X, y, 42);
  const DataSet ds = read_data_csv(f.path);

  REQUIRE(ds.X.rows() == 12);
  REQUIRE(ds.X.cols() == 3);
  CHECK((ds.X - X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ds.y - y).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(ds.columns.size() == 4);
  CHECK(ds.columns[0] == "x_1");
  CHECK(ds.columns[3] == "y");

  std::ifstream in(f.path);
  std::string first;
  std::getline(in, first);
  CHECK(first.rfind("# krigor ", 0) == 0);
  std::getline(in, first);
  CHECK(first == "# master seed: 42");
}

TEST_CASE("data csv: malformed input diagnostics") {
  TempFile f("krigor_io_bad.csv");

  f.write("x_1,y\n0.5,1.0\n0.25\n");
  try {
    read_data_csv(f.path);
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    CHECK(std::string(e.what()).find("expected 2 fields") != std::string::npos);
  }

  f.write("x_1,y\n0.5,oops\n");
  try {
    read_data_csv(f.path);
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("column 2") != std::string::npos);
    CHECK(std::string(e.what()).find("'oops'") != std::string::npos);
  }

  f.write("y\n1.0\n");
  CHECK_THROWS_WITH(read_data_csv(f.path),
                    Catch::Matchers::ContainsSubstring("at least one"));

  f.write("x_1,y\n0.5,1.0\n# late comment\n");
  CHECK_THROWS_WITH(read_data_csv(f.path),
                    Catch::Matchers::ContainsSubstring("before the header"));

  f.write("");
  CHECK_THROWS_WITH(read_data_csv(f.path),
                    Catch::Matchers::ContainsSubstring("empty file"));
}

TEST_CASE("targets csv: dimension check") {
  TempFile f("krigor_io_targets.csv");
  f.write("# krigor test\nx_1,x_2\n0.1,0.9\n0.3,0.4\n");
  const Matrix t = read_targets_csv(f.path, 2);
  REQUIRE(t.rows() == 2);
  CHECK(t(1, 1) == 0.4);
  CHECK_THROWS_WITH(read_targets_csv(f.path, 3),
                    Catch::Matchers::ContainsSubstring("expected 3"));
}

TEST_CASE("chain csv round trip") {
  ChainOutput chain;
  Rng rng(151);
  chain.samples.resize(20, 2);
  chain.log_l1.resize(20);
  for (int i = 0; i < 20; ++i) {
    chain.samples(i, 0) = std::exp(rng.normal());
    chain.samples(i, 1) = std::exp(rng.normal());
    chain.log_l1[i] = -10.0 + rng.normal();
  }
  TempFile f("krigor_io_chain.csv");
  write_chain_csv(f.path, chain, 7);
  const ChainOutput back = read_chain_csv(f.path);
  CHECK((back.samples - chain.samples).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.log_l1 - chain.log_l1).cwiseAbs().maxCoeff() == 0.0);

  f.write("a,b\n1,2\n");
  CHECK_THROWS_WITH(read_chain_csv(f.path),
                    Catch::Matchers::ContainsSubstring("not a chain file"));
}

TEST_CASE("predictions csv layout") {
  Matrix targets(2, 2);
  targets << 0.1, 0.2, 0.3, 0.4;
  Vector point(2), lo(2), hi(2);
  point << 1.0, 2.0;
  lo << 0.5, 1.5;
  hi << 1.5, 2.5;
  TempFile f("krigor_io_pred.csv");
  write_predictions_csv(f.path, targets, point, lo, hi, "mle", 3);

  std::ifstream in(f.path);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line == "x_1,x_2,point,lo,hi,method");
  std::getline(in, line);
  CHECK(line.find(",mle") != std::string::npos);

  Vector shorty(1);
  shorty << 1.0;
  CHECK_THROWS_AS(
      write_predictions_csv(f.path, targets, shorty, lo, hi, "mle", 3),
      std::invalid_argument);
}

TEST_CASE("json: comment header then strict body") {
  nlohmann::json j = {{"alpha", 1.5}, {"list", {1, 2, 3}}, {"name", "run"}};
  TempFile f("krigor_io_manifest.json");
  write_json(f.path, j, 99);

  std::ifstream in(f.path);
  std::string first;
  std::getline(in, first);
  CHECK(first == "# krigor " KRIGOR_VERSION);

  const nlohmann::json back = read_json(f.path);
  CHECK(back == j);
}

TEST_CASE("report serialization keys") {
  Rng rng(152);
  Matrix pts = test_support::random_design(rng, 30, 3);
  KernelSpec spec;
  spec.nu = 2.5;
  spec.dim = 3;
  const Model model(DesignSet(pts), spec, TrendBasis::constant());
  Vector y(30);
  for (int i = 0; i < 30; ++i) y[i] = rng.normal();

  const ExistenceReport rep = check_existence(y, model, 1);
  const nlohmann::json je = to_json(rep);
  CHECK(je["verdict"] == "guaranteed-almost-surely");
  CHECK(je["matched_rule"].get<std::string>().size() > 0);

  OptimOptions opt;
  opt.restarts = 2;
  opt.max_iters = 60;
  const OptimResult fit = mle(y, model, opt);
  const nlohmann::json jf = to_json(fit);
  CHECK(jf["theta"].size() == 3);
  CHECK(jf["restarts"].size() == 2);
  CHECK(jf["value"].get<double>() == fit.value);

  ChainConfig cc;
  cc.n_iter = 60;
  cc.burn_in = 20;
  cc.grid_size = 64;
  const ChainOutput chain = run_chain(y, model, cc);
  const nlohmann::json jc = chain_diagnostics(chain, cc);
  CHECK(jc["retained"] == 40);
  CHECK(jc["ess"].size() == 3);
}

TEST_CASE("bench serialization") {
  ExperimentConfig cfg;
  cfg.r = 1;
  cfg.n = 10;
  cfg.n_designs = 2;
  cfg.n_tests = 10;
  cfg.model_kernel.nu = 2.5;
  cfg.model_kernel.dim = 1;
  GpGenerator gen;
  gen.beta = Vector::Constant(1, 1.0);
  gen.sigma2 = 1.0;
  gen.theta_star = Vector::Constant(1, 0.5);
  gen.kernel = cfg.model_kernel;
  cfg.generator = gen;
  cfg.methods = {Method::True};
  cfg.seed = 10;
  const BenchResult res = run_experiment(cfg);

  const nlohmann::json jb = to_json(res);
  CHECK(jb["methods"].size() == 1);
  CHECK(jb["methods"][0]["method"] == "true");
  CHECK(jb["designs_effective"] == 2);

  TempFile f("krigor_io_bench.csv");
  write_bench_csv(f.path, res, 0.95, 10);
  std::ifstream in(f.path);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line ==
        "method,level,coverage,coverage_se,mean_length,length_se,"
        "designs_effective");
  std::getline(in, line);
  CHECK(line.rfind("true,", 0) == 0);
}

// Command line front end.
//
//   krigor check   <config> [--data f]                 existence checklist
//   krigor sample  <config> [--data f] [-o chain.csv]  posterior length-scale
//                                                      draws
//   krigor predict <config> [--data f] [--targets f]   prediction intervals
//   krigor bench   <config> [-o prefix]                coverage benchmark
//
// Exit codes: 0 success, 1 usage/config/data error, 2 existence gate.
// Every run writes a JSON manifest (config echo, resolved seeds, timings)
// next to its primary output so the job can be reproduced bit-identically.
#include <CLI11.hpp>

#include <krigor/io.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace krigor;

// ---------------------------------------------------------------- plumbing

class StageTimer {
 public:
  StageTimer() : last_(std::chrono::steady_clock::now()), start_(last_) {}
  void mark(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    stages_[stage] = ms(last_, now);
    last_ = now;
  }
  nlohmann::json stages() const { return stages_; }
  double total_ms() const {
    return ms(start_, std::chrono::steady_clock::now());
  }

 private:
  static double ms(std::chrono::steady_clock::time_point a,
                   std::chrono::steady_clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  }
  std::chrono::steady_clock::time_point last_, start_;
  nlohmann::json stages_ = nlohmann::json::object();
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sibling_path(const std::string& primary, const char* suffix) {
  std::filesystem::path p(primary);
  p.replace_extension();
  return p.string() + suffix;
}

// Relative data paths are tried against the working directory first, then
// against the config file's directory, so bundled configs work from anywhere.
std::string resolve_path(const std::string& path, const Config& cfg) {
  namespace fs = std::filesystem;
  if (path.empty() || fs::path(path).is_absolute() || fs::exists(path))
    return path;
  const fs::path beside = fs::path(cfg.source()).parent_path() / path;
  if (fs::exists(beside)) return beside.string();
  return path;  // let the open fail with the name the user gave
}

// ------------------------------------------------------- config -> objects

TrendBasis trend_from(const Config& cfg) {
  const std::string name = cfg.get_or("model", "trend", "constant");
  if (name == "none") return TrendBasis::none();
  if (name == "constant") return TrendBasis::constant();
  if (name == "affine") return TrendBasis::affine();
  throw std::runtime_error(cfg.source() +
                           ": [model] trend: expected none|constant|affine, "
                           "got '" +
                           name + "'");
}

KernelSpec kernel_from(const Config& cfg, int r) {
  KernelSpec spec;
  spec.nu = cfg.get_double("kernel", "nu");
  spec.dim = r;
  const std::string fam = cfg.get_or("kernel", "family", "geometric");
  if (fam == "geometric")
    spec.family = KernelSpec::Family::AnisotropicGeometric;
  else if (fam == "tensorized")
    spec.family = KernelSpec::Family::Tensorized;
  else
    throw std::runtime_error(cfg.source() +
                             ": [kernel] family: expected "
                             "geometric|tensorized, got '" +
                             fam + "'");
  return spec;
}

ChainConfig chain_from(const Config& cfg, std::uint64_t seed) {
  ChainConfig cc;
  cc.n_iter = cfg.get_long_or("chain", "iters", cc.n_iter);
  cc.burn_in = cfg.get_long_or("chain", "burn_in", cc.burn_in);
  cc.thin = cfg.get_long_or("chain", "thin", cc.thin);
  cc.grid_size = int(cfg.get_long_or("chain", "grid_size", cc.grid_size));
  cc.seed = seed;
  return cc;
}

OptimOptions optim_from(const Config& cfg, std::uint64_t seed) {
  OptimOptions opt;
  opt.restarts = int(cfg.get_long_or("optim", "restarts", opt.restarts));
  opt.max_iters = int(cfg.get_long_or("optim", "max_iters", opt.max_iters));
  opt.theta_lo = cfg.get_double_or("optim", "lo", opt.theta_lo);
  opt.theta_hi = cfg.get_double_or("optim", "hi", opt.theta_hi);
  opt.seed = seed;
  return opt;
}

struct CommonArgs {
  std::string config_path;
  std::string data_path;  // --data overrides [data] file
  std::optional<std::uint64_t> seed;
  bool force = false;
};

struct LoadedJob {
  Config cfg;
  DataSet data;
  std::optional<Model> model;
  std::uint64_t seed = 0;
};

LoadedJob load_job(const CommonArgs& args, const char* seed_section) {
  LoadedJob job;
  job.cfg = Config::parse_file(args.config_path);
  std::string data = args.data_path;
  if (data.empty()) data = job.cfg.get_or("data", "file", "");
  if (data.empty())
    throw std::runtime_error(
        "no data file: pass --data or set [data] file in the config");
  job.data = read_data_csv(resolve_path(data, job.cfg));
  const int r = int(job.data.X.cols());
  job.model.emplace(DesignSet(job.data.X), kernel_from(job.cfg, r),
                    trend_from(job.cfg));
  job.seed = args.seed ? *args.seed
                       : std::uint64_t(
                             job.cfg.get_long_or(seed_section, "seed", 0));
  return job;
}

nlohmann::json manifest_base(const char* command, const Config& cfg,
                             std::uint64_t seed) {
  return {{"command", command},
          {"version", KRIGOR_VERSION},
          {"generated_at", utc_now()},
          {"master_seed", seed},
          {"config_source", cfg.source()},
          {"config", cfg.text()}};
}

// Gate shared by sample/predict: report on failure unless forced.
void apply_gate(const ExistenceReport& rep, bool force) {
  if (rep.verdict == ExistenceVerdict::NotGuaranteed && !force)
    throw ExistenceGateError(rep);
}

// ------------------------------------------------------------------ check

int cmd_check(const CommonArgs& args, const std::string& output) {
  StageTimer timer;
  const LoadedJob job = load_job(args, "chain");
  timer.mark("load");
  const ExistenceReport rep = check_existence(job.data.y, *job.model, job.seed);
  timer.mark("check");
  std::printf("%s", describe(rep).c_str());
  if (!output.empty()) {
    nlohmann::json m = manifest_base("check", job.cfg, job.seed);
    m["existence"] = to_json(rep);
    m["timings_ms"] = timer.stages();
    m["wall_ms"] = timer.total_ms();
    write_json(output, m, job.seed);
  }
  return rep.verdict == ExistenceVerdict::NotGuaranteed ? 2 : 0;
}

// ----------------------------------------------------------------- sample

struct SampleFlags {
  std::optional<long> iters, burn_in, thin;
};

int cmd_sample(const CommonArgs& args, const SampleFlags& flags,
               const std::string& output) {
  StageTimer timer;
  const LoadedJob job = load_job(args, "chain");
  timer.mark("load");

  const ExistenceReport rep = check_existence(job.data.y, *job.model, job.seed);
  apply_gate(rep, args.force);
  timer.mark("gate");

  ChainConfig cc = chain_from(job.cfg, job.seed);
  if (flags.iters) cc.n_iter = *flags.iters;
  if (flags.burn_in) cc.burn_in = *flags.burn_in;
  if (flags.thin) cc.thin = *flags.thin;
  const ChainOutput chain = run_chain(job.data.y, *job.model, cc);
  timer.mark("sample");

  write_chain_csv(output, chain, job.seed);
  const std::string diag_path = sibling_path(output, "_diagnostics.json");
  write_json(diag_path, chain_diagnostics(chain, cc), job.seed);

  nlohmann::json m = manifest_base("sample", job.cfg, job.seed);
  m["existence"] = to_json(rep);
  m["forced"] = args.force && rep.verdict == ExistenceVerdict::NotGuaranteed;
  m["resolved"] = {{"iters", cc.n_iter},
                   {"burn_in", cc.burn_in},
                   {"thin", cc.thin},
                   {"grid_size", cc.grid_size},
                   {"chain_seed", cc.seed}};
  m["outputs"] = {output, diag_path};
  m["timings_ms"] = timer.stages();
  m["wall_ms"] = timer.total_ms();
  write_json(sibling_path(output, "_manifest.json"), m, job.seed);
  std::printf("wrote %ld retained draws to %s\n", long(chain.samples.rows()),
              output.c_str());
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictFlags {
  std::string targets;  // overrides [predict] targets
  std::string method;   // overrides [predict] method
  std::optional<double> level;
};

struct PredictionRows {
  Vector point, lo, hi;
};

template <typename MakeDist>
PredictionRows predict_rows(const Matrix& targets, double level, int block,
                            MakeDist&& make_dist) {
  const Eigen::Index m = targets.rows();
  PredictionRows rows{Vector(m), Vector(m), Vector(m)};
  for (Eigen::Index start = 0; start < m; start += block) {
    const Eigen::Index count = std::min<Eigen::Index>(block, m - start);
    const PredictiveDistribution dist =
        make_dist(Matrix(targets.middleRows(start, count)));
    const Vector point = point_prediction(dist);
    for (Eigen::Index i = 0; i < count; ++i) {
      rows.point[start + i] = point[i];
      const auto [lo, hi] = prediction_interval(dist, i, level);
      rows.lo[start + i] = lo;
      rows.hi[start + i] = hi;
    }
  }
  return rows;
}

int cmd_predict(const CommonArgs& args, const PredictFlags& flags,
                const std::string& output) {
  StageTimer timer;
  const LoadedJob job = load_job(args, "predict");
  std::string targets_path = flags.targets.empty()
                                 ? job.cfg.get_or("predict", "targets", "")
                                 : flags.targets;
  if (targets_path.empty())
    throw std::runtime_error(
        "no targets file: pass --targets or set [predict] targets");
  const Matrix targets = read_targets_csv(resolve_path(targets_path, job.cfg),
                                          int(job.data.X.cols()));
  const double level =
      flags.level ? *flags.level
                  : job.cfg.get_double_or("predict", "level", 0.95);
  const std::string method = flags.method.empty()
                                 ? job.cfg.get_or("predict", "method", "mle")
                                 : flags.method;
  timer.mark("load");

  const ExistenceReport rep = check_existence(job.data.y, *job.model, job.seed);
  apply_gate(rep, args.force);
  timer.mark("gate");

  const Model& model = *job.model;
  const Vector& y = job.data.y;
  const int block = 32;
  PredictionRows rows;
  nlohmann::json fit_info = nlohmann::json::object();
  // The method column must stay comma-free, so fixed:... is tagged "fixed"
  // and the actual lengths go to the manifest.
  std::string tag = method;

  if (method == "mle" || method == "map") {
    const OptimOptions opt = optim_from(job.cfg, job.seed);
    const OptimResult fit =
        method == "mle" ? mle(y, model, opt) : map_estimate(y, model, opt);
    fit_info = to_json(fit);
    rows = predict_rows(targets, level, block, [&](const Matrix& chunk) {
      return predict_student(chunk, y, model, fit.theta);
    });
  } else if (method == "fpd") {
    const ChainConfig cc = chain_from(job.cfg, job.seed);
    const ChainOutput chain = run_chain(y, model, cc);
    fit_info = chain_diagnostics(chain, cc);
    rows = predict_rows(targets, level, block, [&](const Matrix& chunk) {
      return predict_full_bayes(chunk, y, model, chain);
    });
  } else if (method.rfind("fixed:", 0) == 0) {
    std::vector<double> th;
    std::string item;
    std::istringstream ss(method.substr(6));
    while (std::getline(ss, item, ','))
      th.push_back(std::strtod(item.c_str(), nullptr));
    if (int(th.size()) != model.r())
      throw std::runtime_error("fixed: expected " + std::to_string(model.r()) +
                               " comma-separated lengths");
    Vector tv(model.r());
    for (int j = 0; j < model.r(); ++j) {
      if (!(th[size_t(j)] > 0.0))
        throw std::runtime_error("fixed: lengths must be positive");
      tv[j] = th[size_t(j)];
    }
    const LengthVector theta(tv);
    fit_info = {{"theta", std::vector<double>(th.begin(), th.end())}};
    tag = "fixed";
    rows = predict_rows(targets, level, block, [&](const Matrix& chunk) {
      return predict_student(chunk, y, model, theta);
    });
  } else {
    throw std::runtime_error("unknown method '" + method +
                             "' (mle|map|fpd|fixed:t1,..,tr)");
  }
  timer.mark("predict");

  write_predictions_csv(output, targets, rows.point, rows.lo, rows.hi, tag,
                        job.seed);
  nlohmann::json m = manifest_base("predict", job.cfg, job.seed);
  m["existence"] = to_json(rep);
  m["forced"] = args.force && rep.verdict == ExistenceVerdict::NotGuaranteed;
  m["resolved"] = {{"method", method}, {"level", level}, {"seed", job.seed}};
  m["fit"] = fit_info;
  m["outputs"] = {output};
  m["timings_ms"] = timer.stages();
  m["wall_ms"] = timer.total_ms();
  write_json(sibling_path(output, "_manifest.json"), m, job.seed);
  std::printf("wrote %ld predictions to %s\n", long(targets.rows()),
              output.c_str());
  return 0;
}

// ------------------------------------------------------------------ bench

Method method_from_name(const std::string& name) {
  if (name == "true") return Method::True;
  if (name == "mle") return Method::Mle;
  if (name == "map") return Method::Map;
  if (name == "fpd") return Method::Fpd;
  throw std::runtime_error("unknown method '" + name +
                           "' (true|mle|map|fpd)");
}

ExperimentConfig bench_from(const Config& cfg, std::uint64_t seed,
                            bool force) {
  ExperimentConfig ec;
  ec.r = int(cfg.get_long("bench", "r"));
  ec.n = int(cfg.get_long("bench", "n"));
  ec.n_designs = int(cfg.get_long_or("bench", "designs", ec.n_designs));
  ec.n_tests = int(cfg.get_long_or("bench", "tests", ec.n_tests));
  ec.level = cfg.get_double_or("bench", "level", ec.level);
  ec.basis = trend_from(cfg);
  ec.model_kernel = kernel_from(cfg, ec.r);
  ec.seed = seed;
  ec.force = force;
  ec.target_block = int(cfg.get_long_or("bench", "block", ec.target_block));
  ec.chain = chain_from(cfg, 0);  // per-replicate seeds are derived inside
  ec.optim = optim_from(cfg, 0);

  if (cfg.has("bench", "methods")) {
    ec.methods.clear();
    for (const std::string& name : cfg.get_names("bench", "methods"))
      ec.methods.push_back(method_from_name(name));
  }

  const std::string gen = cfg.get_or("bench", "generator", "gp");
  if (gen == "gp") {
    GpGenerator g;
    g.sigma2 = cfg.get_double_or("bench", "sigma2", 1.0);
    const std::vector<double> ts = cfg.get_list("bench", "theta_star");
    g.theta_star.resize(Eigen::Index(ts.size()));
    for (size_t i = 0; i < ts.size(); ++i)
      g.theta_star[Eigen::Index(i)] = ts[i];
    g.kernel = ec.model_kernel;
    g.kernel.nu = cfg.get_double_or("bench", "gen_nu", ec.model_kernel.nu);
    g.squared_exponential =
        cfg.get_bool_or("bench", "squared_exponential", false);
    const int p = ec.basis.p(ec.r);
    if (p > 0) {
      const std::vector<double> bs = cfg.get_list("bench", "beta");
      g.beta.resize(Eigen::Index(bs.size()));
      for (size_t i = 0; i < bs.size(); ++i) g.beta[Eigen::Index(i)] = bs[i];
    } else {
      g.beta.resize(0);
    }
    ec.generator = g;
  } else if (gen == "ackley" || gen == "rastrigin") {
    DeterministicGenerator d;
    d.fn = gen == "ackley" ? DeterministicGenerator::Fn::Ackley
                           : DeterministicGenerator::Fn::Rastrigin;
    d.slope = cfg.get_double_or("bench", "slope", 0.0);
    ec.generator = d;
  } else {
    throw std::runtime_error("unknown generator '" + gen +
                             "' (gp|ackley|rastrigin)");
  }
  return ec;
}

int cmd_bench(const CommonArgs& args, bool desk_scale, bool paper_scale,
              const std::string& prefix) {
  StageTimer timer;
  const Config cfg = Config::parse_file(args.config_path);
  const std::uint64_t seed =
      args.seed ? *args.seed : std::uint64_t(cfg.get_long_or("bench", "seed", 0));
  ExperimentConfig ec = bench_from(cfg, seed, args.force);
  if (desk_scale) {
    ec.n_designs = 50;
    ec.n_tests = 200;
  } else if (paper_scale) {
    ec.n_designs = 500;
    ec.n_tests = 1000;
  }
  timer.mark("load");

  const BenchResult res = run_experiment(ec);
  timer.mark("run");

  const std::string csv_path = prefix + ".csv";
  write_bench_csv(csv_path, res, ec.level, seed);
  nlohmann::json m = manifest_base("bench", cfg, seed);
  m["resolved"] = {{"r", ec.r},
                   {"n", ec.n},
                   {"designs", ec.n_designs},
                   {"tests", ec.n_tests},
                   {"level", ec.level},
                   {"seed", seed},
                   {"force", ec.force}};
  m["result"] = to_json(res);
  m["outputs"] = {csv_path};
  if (const auto* g = std::get_if<GpGenerator>(&ec.generator))
    if (g->squared_exponential)
      m["notes"] = {
          "squared-exponential generation uses exp(-sum((d_j/theta_j)^2)), "
          "the smoothness limit of the model kernel's scaling convention; "
          "length values quoted under other conventions differ by a constant "
          "factor"};
  m["timings_ms"] = timer.stages();
  m["wall_ms"] = timer.total_ms();
  write_json(prefix + "_manifest.json", m, seed);

  std::printf("%s", format_table(res).c_str());
  std::printf("wrote %s\n", csv_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"krigor: objective-Bayes universal kriging"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (0 = all cores); never affects results");

  CommonArgs common;
  SampleFlags sample_flags;
  PredictFlags predict_flags;
  std::string output;
  bool desk_scale = false, paper_scale = false;

  auto add_common = [&](CLI::App* sub, bool with_data) {
    sub->add_option("config", common.config_path, "INI config file")
        ->required();
    if (with_data)
      sub->add_option("--data", common.data_path,
                      "data CSV (coordinates then response); overrides "
                      "[data] file");
    sub->add_option("--seed", common.seed, "master seed override");
  };

  CLI::App* check = app.add_subcommand("check", "run the existence checklist");
  add_common(check, true);
  check->add_option("--output,-o", output, "manifest JSON path (optional)");

  CLI::App* sample =
      app.add_subcommand("sample", "draw posterior length-scale samples");
  add_common(sample, true);
  sample->add_option("--iters", sample_flags.iters, "total sweeps");
  sample->add_option("--burn-in", sample_flags.burn_in, "discarded sweeps");
  sample->add_option("--thin", sample_flags.thin, "keep every k-th sweep");
  sample->add_flag("--force", common.force, "run despite the existence gate");
  sample->add_option("--output,-o", output, "chain CSV path")
      ->default_val("chain.csv");

  CLI::App* predict =
      app.add_subcommand("predict", "prediction intervals at target points");
  add_common(predict, true);
  predict->add_option("--targets", predict_flags.targets, "targets CSV");
  predict->add_option("--method", predict_flags.method,
                      "mle | map | fpd | fixed:t1,..,tr");
  predict->add_option("--level", predict_flags.level,
                      "interval probability in (0,1)");
  predict->add_flag("--force", common.force, "run despite the existence gate");
  predict->add_option("--output,-o", output, "predictions CSV path")
      ->default_val("predictions.csv");

  CLI::App* bench = app.add_subcommand("bench", "coverage benchmark");
  add_common(bench, false);
  bench->add_flag("--desk-scale", desk_scale, "50 designs x 200 tests");
  bench->add_flag("--paper-scale", paper_scale, "500 designs x 1000 tests");
  bench->add_flag("--force", common.force, "run despite the existence gate");
  bench->add_option("--output,-o", output, "output prefix")
      ->default_val("bench");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (threads > 0) Eigen::setNbThreads(threads);

  try {
    if (check->parsed()) return cmd_check(common, output);
    if (sample->parsed()) return cmd_sample(common, sample_flags, output);
    if (predict->parsed()) return cmd_predict(common, predict_flags, output);
    if (bench->parsed())
      return cmd_bench(common, desk_scale, paper_scale, output);
  } catch (const ExistenceGateError& e) {
    std::fprintf(stderr, "%s", describe(e.report).c_str());
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

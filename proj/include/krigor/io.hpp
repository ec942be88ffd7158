// File formats.
//
// CSV: headered, comma-separated, decimal point, LF line endings.  Data files
// carry the coordinates first and the response last.  Every file this module
// writes starts with '#' comment lines naming the library version and the
// master seed, and every reader skips leading '#' lines, so the tool's own
// outputs round-trip.  Doubles are written with %.17g so a re-read is
// bit-exact.
//
// JSON: manifests and diagnostics, same comment header convention (strip the
// leading '#' lines before handing the rest to a strict parser).
#pragma once

#include <krigor/bench.hpp>
#include <krigor/config.hpp>

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifndef KRIGOR_VERSION
#define KRIGOR_VERSION "0.1.0"
#endif

namespace krigor {

inline std::string comment_header(std::uint64_t seed) {
  return "# krigor " KRIGOR_VERSION "\n# master seed: " + std::to_string(seed) +
         "\n";
}

struct DataSet {
  Matrix X;  // n x r coordinates
  Vector y;  // response, last column of the file
  std::vector<std::string> columns;
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(line);
  while (std::getline(ss, item, ',')) {
    size_t a = 0, b = item.size();
    while (a < b && std::isspace(static_cast<unsigned char>(item[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(item[b - 1]))) --b;
    out.push_back(item.substr(a, b - a));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_cell(const std::string& cell, const std::string& path,
                         int line, size_t col) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::runtime_error(path + ":" + std::to_string(line) + ": column " +
                             std::to_string(col + 1) +
                             ": cannot parse '" + cell + "' as a number");
  return v;
}

// Reads a headered numeric table, skipping leading '#' comment lines.
inline void read_table(const std::string& path,
                       std::vector<std::string>& header,
                       std::vector<std::vector<double>>& rows) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open data file: " + path);
  std::string raw;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty()) continue;
    if (raw[0] == '#') {
      if (!have_header) continue;
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": comment lines are only allowed before the "
                               "header");
    }
    const std::vector<std::string> cells = split_csv_line(raw);
    if (!have_header) {
      header = cells;
      have_header = true;
      continue;
    }
    if (cells.size() != header.size())
      throw std::runtime_error(
          path + ":" + std::to_string(lineno) + ": expected " +
          std::to_string(header.size()) + " fields, got " +
          std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (size_t c = 0; c < cells.size(); ++c)
      row[c] = parse_cell(cells[c], path, lineno, c);
    rows.push_back(std::move(row));
  }
  if (!have_header)
    throw std::runtime_error(path + ": empty file, expected a CSV header");
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

}  // namespace detail

inline DataSet read_data_csv(const std::string& path) {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  detail::read_table(path, header, rows);
  if (header.size() < 2)
    throw std::runtime_error(path +
                             ": need at least one coordinate column and a "
                             "response column");
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");
  const int r = int(header.size()) - 1;
  DataSet ds;
  ds.columns = header;
  ds.X.resize(Eigen::Index(rows.size()), r);
  ds.y.resize(Eigen::Index(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < r; ++j) ds.X(Eigen::Index(i), j) = rows[i][size_t(j)];
    ds.y[Eigen::Index(i)] = rows[i].back();
  }
  return ds;
}

inline Matrix read_targets_csv(const std::string& path, int expected_r = -1) {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  detail::read_table(path, header, rows);
  if (rows.empty()) throw std::runtime_error(path + ": no target rows");
  if (expected_r >= 0 && int(header.size()) != expected_r)
    throw std::runtime_error(path + ": expected " +
                             std::to_string(expected_r) +
                             " coordinate columns, got " +
                             std::to_string(header.size()));
  Matrix out(Eigen::Index(rows.size()), Eigen::Index(header.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < header.size(); ++j)
      out(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  return out;
}

inline void write_data_csv(const std::string& path, const Matrix& X,
                           const Vector& y, std::uint64_t seed) {
  std::ofstream out = detail::open_out(path);
  out << comment_header(seed);
  for (Eigen::Index j = 0; j < X.cols(); ++j) out << "x_" << (j + 1) << ",";
  out << "y\n";
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      out << detail::fmt17(X(i, j)) << ",";
    out << detail::fmt17(y[i]) << "\n";
  }
}

inline void write_chain_csv(const std::string& path, const ChainOutput& chain,
                            std::uint64_t seed) {
  std::ofstream out = detail::open_out(path);
  out << comment_header(seed);
  for (Eigen::Index j = 0; j < chain.samples.cols(); ++j)
    out << "theta_" << (j + 1) << ",";
  out << "logL1\n";
  for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < chain.samples.cols(); ++j)
      out << detail::fmt17(chain.samples(i, j)) << ",";
    out << detail::fmt17(chain.log_l1[i]) << "\n";
  }
}

// One retained chain row per line; used to re-load a chain for prediction.
inline ChainOutput read_chain_csv(const std::string& path) {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  detail::read_table(path, header, rows);
  if (header.size() < 2 || header.back() != "logL1")
    throw std::runtime_error(path + ": not a chain file (want theta_1..theta_r,logL1)");
  if (rows.empty()) throw std::runtime_error(path + ": no retained samples");
  const int r = int(header.size()) - 1;
  ChainOutput chain;
  chain.samples.resize(Eigen::Index(rows.size()), r);
  chain.log_l1.resize(Eigen::Index(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < r; ++j)
      chain.samples(Eigen::Index(i), j) = rows[i][size_t(j)];
    chain.log_l1[Eigen::Index(i)] = rows[i].back();
  }
  return chain;
}

inline void write_predictions_csv(const std::string& path,
                                  const Matrix& targets, const Vector& point,
                                  const Vector& lo, const Vector& hi,
                                  const std::string& method,
                                  std::uint64_t seed) {
  if (point.size() != targets.rows() || lo.size() != targets.rows() ||
      hi.size() != targets.rows())
    throw std::invalid_argument("write_predictions_csv: size mismatch");
  std::ofstream out = detail::open_out(path);
  out << comment_header(seed);
  for (Eigen::Index j = 0; j < targets.cols(); ++j)
    out << "x_" << (j + 1) << ",";
  out << "point,lo,hi,method\n";
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    for (Eigen::Index j = 0; j < targets.cols(); ++j)
      out << detail::fmt17(targets(i, j)) << ",";
    out << detail::fmt17(point[i]) << "," << detail::fmt17(lo[i]) << ","
        << detail::fmt17(hi[i]) << "," << method << "\n";
  }
}

inline void write_bench_csv(const std::string& path, const BenchResult& res,
                            double level, std::uint64_t seed) {
  std::ofstream out = detail::open_out(path);
  out << comment_header(seed);
  out << "method,level,coverage,coverage_se,mean_length,length_se,"
         "designs_effective\n";
  for (const MethodSummary& s : res.methods) {
    out << to_string(s.method) << "," << detail::fmt17(level) << ","
        << detail::fmt17(s.coverage) << "," << detail::fmt17(s.coverage_se)
        << "," << detail::fmt17(s.mean_length) << ","
        << detail::fmt17(s.length_se) << "," << res.designs_effective << "\n";
  }
}

namespace detail {

inline nlohmann::json vec_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace detail

inline nlohmann::json to_json(const ExistenceReport& rep) {
  return {{"verdict", to_string(rep.verdict)},
          {"matched_rule", rep.matched_rule},
          {"assumption1", to_string(rep.assumption1)},
          {"assumption2", to_string(rep.assumption2)},
          {"notes", rep.notes}};
}

inline nlohmann::json to_json(const OptimResult& fit) {
  nlohmann::json restarts = nlohmann::json::array();
  for (const RestartTrace& t : fit.trace)
    restarts.push_back({{"init", detail::vec_json(t.init)},
                        {"best", detail::vec_json(t.best)},
                        {"init_value", t.init_value},
                        {"best_value", t.best_value},
                        {"iters", t.iters},
                        {"converged", t.converged}});
  return {{"theta", detail::vec_json(fit.theta.theta())},
          {"value", fit.value},
          {"n_restarts", fit.n_restarts},
          {"converged", fit.converged},
          {"restarts", restarts}};
}

inline nlohmann::json chain_diagnostics(const ChainOutput& chain,
                                        const ChainConfig& cfg) {
  return {{"retained", chain.samples.rows()},
          {"iters", cfg.n_iter},
          {"burn_in", cfg.burn_in},
          {"thin", cfg.thin},
          {"grid_size", cfg.grid_size},
          {"seed", cfg.seed},
          {"ess", detail::vec_json(chain.ess)},
          {"rhat", detail::vec_json(chain.rhat)},
          {"rhat_warning", chain.rhat_warning},
          {"update_counts", chain.update_counts},
          {"grid_evals", chain.grid_evals},
          {"dead_evals", chain.dead_evals}};
}

inline nlohmann::json to_json(const BenchResult& res) {
  nlohmann::json methods = nlohmann::json::array();
  for (const MethodSummary& s : res.methods)
    methods.push_back({{"method", to_string(s.method)},
                       {"coverage", s.coverage},
                       {"coverage_se", s.coverage_se},
                       {"mean_length", s.mean_length},
                       {"length_se", s.length_se},
                       {"per_design_coverage", s.per_design_coverage},
                       {"per_design_length", s.per_design_length}});
  return {{"designs_attempted", res.designs_attempted},
          {"designs_effective", res.designs_effective},
          {"failures", res.failures},
          {"failure_notes", res.failure_notes},
          {"existence", to_json(res.existence)},
          {"methods", methods}};
}

inline void write_json(const std::string& path, const nlohmann::json& j,
                       std::uint64_t seed) {
  std::ofstream out = detail::open_out(path);
  out << comment_header(seed);
  out << j.dump(2) << "\n";
}

// Strips the leading '#' comment lines, then parses strictly.
inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open json file: " + path);
  std::string raw, body;
  bool in_comments = true;
  while (std::getline(in, raw)) {
    if (in_comments && (raw.empty() || raw[0] == '#')) continue;
    in_comments = false;
    body += raw;
    body += '\n';
  }
  return nlohmann::json::parse(body);
}

}  // namespace krigor

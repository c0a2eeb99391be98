#pragma once

// Measurement driver behind the command line tool.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qtinv/cpl_model.hpp"
#include "qtinv/factorize.hpp"
#include "qtinv/genmat.hpp"

namespace qtinv {

enum class Algorithm { rinch, irsi, lif };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm a);

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::rinch;
  /// Used when matrix_path is empty; n below sets its order.
  GenSpec gen;
  std::string matrix_path;
  int n = 1024;
  double tau = 1e-5;
  int m = 4;
  int switch_dim = kDefaultSwitchDim;
  int leaf_dim = 128;
  int blocksize = 8;
  int workers = 1;
  int max_iters = 100;
  /// JSON-lines task trace of the factorization, if set.
  std::string trace_path;

  void validate() const;
};

/// One CSV row.
struct ExperimentRow {
  std::string algorithm;
  int n = 0;
  int workers = 0;
  double tau = 0.0;
  int m = 0;
  double wall_seconds = 0.0;
  double err_frobenius = 0.0;
  double nnz_per_row_z = 0.0;
  double nnz_per_row_s = 0.0;
  std::uint64_t cpl_tasks = 0;
  std::uint64_t tasks_executed = 0;
  std::uint64_t bytes_moved = 0;
  int iterations = 0;
};

/// Builds S (generation and truncation are not timed), factorizes it, and
/// fills a row. Algorithm errors propagate.
ExperimentRow run_factorize(const ExperimentConfig& config, FactorizationReport* report = nullptr);

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const ExperimentRow& row);

enum class SuiteKind { size_scaling, strong, weak, cpl_fit };

SuiteKind parse_suite_kind(const std::string& name);
std::string to_string(SuiteKind k);

struct SuiteConfig {
  SuiteKind kind = SuiteKind::size_scaling;
  ExperimentConfig base;
  std::vector<Algorithm> algorithms{Algorithm::rinch, Algorithm::irsi, Algorithm::lif};
  /// Matrix orders for size-scaling and cpl-fit.
  std::vector<int> sizes{512, 1024, 2048, 4096, 8192};
  /// Worker counts for strong and weak scaling; weak uses n = base.n * workers.
  std::vector<int> worker_counts{1, 2, 4, 8};
};

struct SuiteFailure {
  std::string algorithm;
  int n = 0;
  int workers = 0;
  std::string message;
};

struct SuiteResult {
  std::vector<ExperimentRow> rows;
  std::vector<SuiteFailure> failures;
  /// cpl-fit only: one fit of cpl_tasks against n per algorithm.
  std::vector<std::pair<std::string, LogFit>> fits;
};

/// Runs every point; a failing point is recorded and the sweep continues.
/// When out is given, rows are streamed as they finish and failures and fits
/// follow as '#' comment lines.
SuiteResult run_suite(const SuiteConfig& config, std::ostream* out = nullptr);

}  // namespace qtinv

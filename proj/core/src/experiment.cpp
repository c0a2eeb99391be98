#include "qtinv/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "qtinv/errors.hpp"
#include "qtinv/matrix_market.hpp"

namespace qtinv {

Algorithm parse_algorithm(const std::string& name) {
  if (name == "rinch") return Algorithm::rinch;
  if (name == "irsi") return Algorithm::irsi;
  if (name == "lif") return Algorithm::lif;
  throw InvalidInput("unknown algorithm '" + name + "' (expected rinch, irsi or lif)");
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::rinch: return "rinch";
    case Algorithm::irsi: return "irsi";
    case Algorithm::lif: return "lif";
  }
  return "?";
}

SuiteKind parse_suite_kind(const std::string& name) {
  if (name == "size-scaling") return SuiteKind::size_scaling;
  if (name == "strong") return SuiteKind::strong;
  if (name == "weak") return SuiteKind::weak;
  if (name == "cpl-fit") return SuiteKind::cpl_fit;
  throw InvalidInput("unknown suite '" + name + "' (expected size-scaling, strong, weak or cpl-fit)");
}

std::string to_string(SuiteKind k) {
  switch (k) {
    case SuiteKind::size_scaling: return "size-scaling";
    case SuiteKind::strong: return "strong";
    case SuiteKind::weak: return "weak";
    case SuiteKind::cpl_fit: return "cpl-fit";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidInput("invalid configuration: " + what); };
  if (matrix_path.empty() && n < 1) fail("n must be positive");
  if (!(tau >= 0.0)) fail("tau must be nonnegative");
  if (m < 1) fail("m must be positive");
  if (switch_dim < 1) fail("switch_dim must be positive");
  if (leaf_dim < 1) fail("leaf_dim must be positive");
  if (blocksize < 1 || leaf_dim % blocksize != 0) fail("blocksize must divide leaf_dim");
  if (workers < 1 || workers > rt::Runtime::kMaxWorkers) fail("workers out of range");
  if (max_iters < 0) fail("max_iters must be nonnegative");
}

ExperimentRow run_factorize(const ExperimentConfig& config, FactorizationReport* report) {
  config.validate();
  rt::Runtime runtime({.workers = config.workers});
  const TreeOptions tree{config.leaf_dim, config.blocksize};

  HMatrix s;
  if (config.matrix_path.empty()) {
    GenSpec spec = config.gen;
    spec.set_order(config.n);
    s = generate(runtime, spec, tree);
  } else {
    s = load_mm(runtime, config.matrix_path, tree);
  }
  s = truncate(runtime, s, config.tau);

  RefinementParams params;
  params.m = config.m;
  params.tau = config.tau;
  params.max_iters = config.max_iters;

  runtime.set_record_trace(!config.trace_path.empty());
  FactorizationReport rep;
  switch (config.algorithm) {
    case Algorithm::rinch: rep = rinch(runtime, s, params); break;
    case Algorithm::irsi: rep = irsi(runtime, s, params); break;
    case Algorithm::lif: rep = lif(runtime, s, params, config.switch_dim); break;
  }
  if (!config.trace_path.empty()) {
    std::ofstream trace(config.trace_path);
    if (!trace) throw InvalidInput("cannot open '" + config.trace_path + "' for writing");
    rt::write_trace_jsonl(rep.trace, trace);
  }

  ExperimentRow row;
  row.algorithm = to_string(config.algorithm);
  row.n = s.logical_dim;
  row.workers = config.workers;
  row.tau = config.tau;
  row.m = config.m;
  row.wall_seconds = rep.stats.wall_seconds;
  row.err_frobenius = rep.err_frobenius;
  row.nnz_per_row_z = rep.nnz_per_row;
  row.nnz_per_row_s = nnz_per_row(runtime, s);
  row.cpl_tasks = rep.stats.critical_path_len;
  row.tasks_executed = rep.stats.tasks_executed;
  row.bytes_moved = rep.stats.bytes_moved;
  row.iterations = rep.iterations;
  if (report != nullptr) *report = std::move(rep);
  return row;
}

void write_csv_header(std::ostream& out) {
  out << "algorithm,n,workers,tau,m,wall_seconds,err_frobenius,nnz_per_row_Z,nnz_per_row_S,"
         "cpl_tasks,tasks_executed,bytes_moved,iterations\n";
}

void write_csv_row(std::ostream& out, const ExperimentRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%d,%d,%.17g,%d,%.6f,%.17g,%.17g,%.17g,%llu,%llu,%llu,%d\n",
                r.algorithm.c_str(), r.n, r.workers, r.tau, r.m, r.wall_seconds, r.err_frobenius,
                r.nnz_per_row_z, r.nnz_per_row_s, static_cast<unsigned long long>(r.cpl_tasks),
                static_cast<unsigned long long>(r.tasks_executed),
                static_cast<unsigned long long>(r.bytes_moved), r.iterations);
  out << buf;
}

SuiteResult run_suite(const SuiteConfig& config, std::ostream* out) {
  struct Point {
    Algorithm algorithm;
    int n;
    int workers;
  };
  std::vector<Point> points;
  for (Algorithm a : config.algorithms) {
    switch (config.kind) {
      case SuiteKind::size_scaling:
      case SuiteKind::cpl_fit:
        for (int n : config.sizes) points.push_back({a, n, config.base.workers});
        break;
      case SuiteKind::strong:
        for (int w : config.worker_counts) points.push_back({a, config.base.n, w});
        break;
      case SuiteKind::weak:
        for (int w : config.worker_counts) points.push_back({a, config.base.n * w, w});
        break;
    }
  }

  SuiteResult result;
  if (out) write_csv_header(*out);
  for (const Point& p : points) {
    ExperimentConfig cfg = config.base;
    cfg.algorithm = p.algorithm;
    cfg.n = p.n;
    cfg.workers = p.workers;
    try {
      result.rows.push_back(run_factorize(cfg));
      if (out) {
        write_csv_row(*out, result.rows.back());
        out->flush();
      }
    } catch (const std::exception& e) {
      result.failures.push_back({to_string(p.algorithm), p.n, p.workers, e.what()});
    }
  }

  if (config.kind == SuiteKind::cpl_fit) {
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& r : result.rows) series[r.algorithm].emplace_back(r.n, static_cast<double>(r.cpl_tasks));
    for (Algorithm a : config.algorithms) {
      auto it = series.find(to_string(a));
      if (it == series.end()) continue;
      try {
        result.fits.emplace_back(it->first, fit_log_polynomial(it->second));
      } catch (const std::exception& e) {
        result.failures.push_back({it->first, 0, config.base.workers, std::string("fit: ") + e.what()});
      }
    }
  }

  if (out) {
    for (const auto& f : result.failures) {
      *out << "# error algorithm=" << f.algorithm << " n=" << f.n << " workers=" << f.workers << ": "
           << f.message << '\n';
    }
    for (const auto& [name, fit] : result.fits) {
      double mean = 0.0;
      int count = 0;
      for (const auto& r : result.rows) {
        if (r.algorithm == name) {
          mean += static_cast<double>(r.cpl_tasks);
          ++count;
        }
      }
      if (count > 0) mean /= count;
      char buf[320];
      std::snprintf(buf, sizeof buf,
                    "# fit algorithm=%s c0=%.9g c1=%.9g c2=%.9g c3=%.9g residual=%.9g mean_cpl=%.9g\n",
                    name.c_str(), fit.c0, fit.c1, fit.c2, fit.c3, fit.residual, mean);
      *out << buf;
    }
  }
  return result;
}

}  // namespace qtinv

// qtinv: inverse factorization experiments on synthetic or Matrix Market input.

#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qtinv/errors.hpp"
#include "qtinv/experiment.hpp"
#include "qtinv/matrix_market.hpp"

namespace {

struct GenOptions {
  std::string geometry = "chain";
  qtinv::GenSpec spec;
};

void add_gen_options(CLI::App& app, GenOptions& g) {
  app.add_option("--geometry", g.geometry, "chain or cluster3d")->capture_default_str();
  app.add_option("--spacing", g.spec.spacing, "chain spacing")->capture_default_str();
  app.add_option("--density", g.spec.density, "cluster centers per unit volume")->capture_default_str();
  app.add_option("--funcs-per-center", g.spec.funcs_per_center)->capture_default_str();
  app.add_option("--alpha", g.spec.alpha, "exponent of the most diffuse function")->capture_default_str();
  app.add_option("--exponent-ratio", g.spec.exponent_ratio)->capture_default_str();
  app.add_option("--cutoff", g.spec.cutoff, "drop overlaps below this")->capture_default_str();
  app.add_option("--shift", g.spec.shift, "added to the diagonal")->capture_default_str();
  app.add_option("--seed", g.spec.seed)->capture_default_str();
}

void add_run_options(CLI::App& app, qtinv::ExperimentConfig& c) {
  app.add_option("-n,--n", c.n, "matrix order of the generated input")->capture_default_str();
  app.add_option("--matrix", c.matrix_path, "Matrix Market input instead of a generated matrix");
  app.add_option("--tau", c.tau, "truncation threshold")->capture_default_str();
  app.add_option("-m,--m", c.m, "refinement polynomial order")->capture_default_str();
  app.add_option("--switch-dim", c.switch_dim, "lif hands blocks up to this order to rinch")
      ->capture_default_str();
  app.add_option("--leaf-dim", c.leaf_dim)->capture_default_str();
  app.add_option("--blocksize", c.blocksize)->capture_default_str();
  app.add_option("-w,--workers", c.workers)->capture_default_str();
  app.add_option("--max-iters", c.max_iters)->capture_default_str();
}

std::ostream* open_output(const std::string& path, std::unique_ptr<std::ofstream>& file) {
  if (path.empty() || path == "-") return &std::cout;
  file = std::make_unique<std::ofstream>(path);
  if (!*file) throw qtinv::InvalidInput("cannot open '" + path + "' for writing");
  return file.get();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse factorization of sparse SPD matrices on a task runtime"};
  app.require_subcommand(1);

  qtinv::ExperimentConfig fcfg;
  GenOptions fgen;
  std::string falg = "rinch";
  std::string fout;
  auto* fact = app.add_subcommand("factorize", "factorize one matrix and print a CSV row");
  fact->add_option("-a,--algorithm", falg, "rinch, irsi or lif")->capture_default_str();
  add_run_options(*fact, fcfg);
  add_gen_options(*fact, fgen);
  fact->add_option("-o,--output", fout, "CSV file (default: stdout)");
  fact->add_option("--trace", fcfg.trace_path, "write the task trace as JSON lines");

  qtinv::SuiteConfig scfg;
  GenOptions sgen;
  std::string skind = "size-scaling";
  std::vector<std::string> salgs{"rinch", "irsi", "lif"};
  std::string sout;
  auto* suite = app.add_subcommand("suite", "sweep sizes or worker counts");
  suite->add_option("-k,--kind", skind, "size-scaling, strong, weak or cpl-fit")->capture_default_str();
  suite->add_option("-a,--algorithms", salgs)->delimiter(',')->capture_default_str();
  suite->add_option("--sizes", scfg.sizes, "orders for size-scaling and cpl-fit")
      ->delimiter(',')
      ->capture_default_str();
  suite->add_option("--worker-counts", scfg.worker_counts, "worker counts for strong and weak")
      ->delimiter(',')
      ->capture_default_str();
  add_run_options(*suite, scfg.base);
  add_gen_options(*suite, sgen);
  suite->add_option("-o,--output", sout, "CSV file (default: stdout)");

  GenOptions ggen;
  int gn = 1024;
  std::string gout;
  auto* gen = app.add_subcommand("generate", "write a synthetic overlap matrix in Matrix Market format");
  gen->add_option("-n,--n", gn, "matrix order")->capture_default_str();
  add_gen_options(*gen, ggen);
  gen->add_option("-o,--output", gout, "output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fact) {
      fcfg.algorithm = qtinv::parse_algorithm(falg);
      fcfg.gen = fgen.spec;
      fcfg.gen.geometry = qtinv::parse_geometry(fgen.geometry);
      std::unique_ptr<std::ofstream> file;
      std::ostream& out = *open_output(fout, file);
      const qtinv::ExperimentRow row = qtinv::run_factorize(fcfg);
      qtinv::write_csv_header(out);
      qtinv::write_csv_row(out, row);
    } else if (*suite) {
      scfg.kind = qtinv::parse_suite_kind(skind);
      scfg.algorithms.clear();
      for (const auto& a : salgs) scfg.algorithms.push_back(qtinv::parse_algorithm(a));
      scfg.base.gen = sgen.spec;
      scfg.base.gen.geometry = qtinv::parse_geometry(sgen.geometry);
      scfg.base.validate();
      std::unique_ptr<std::ofstream> file;
      std::ostream& out = *open_output(sout, file);
      const qtinv::SuiteResult res = qtinv::run_suite(scfg, &out);
      if (!res.failures.empty()) {
        std::cerr << res.failures.size() << " suite point(s) failed\n";
        return 3;
      }
    } else if (*gen) {
      qtinv::GenSpec spec = ggen.spec;
      spec.geometry = qtinv::parse_geometry(ggen.geometry);
      spec.set_order(gn);
      const qtinv::CoordinateMatrix m = qtinv::generate_entries(spec);
      std::ofstream out(gout);
      if (!out) throw qtinv::InvalidInput("cannot open '" + gout + "' for writing");
      qtinv::write_matrix_market(out, m);
    }
  } catch (const qtinv::InvalidInput& e) {
    std::cerr << "qtinv: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "qtinv: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include "qtinv/factorize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "qtinv/errors.hpp"

namespace qtinv {

using rt::ChunkId;
using rt::TaskContext;
using rt::TaskResult;

std::vector<double> refinement_coefficients(int m) {
  if (m < 1) throw InvalidInput("polynomial order m must be at least 1, got " + std::to_string(m));
  std::vector<double> b(static_cast<std::size_t>(m) + 1);
  b[0] = 1.0;
  for (int k = 1; k <= m; ++k) {
    b[static_cast<std::size_t>(k)] =
        static_cast<double>(2 * k - 1) / static_cast<double>(2 * k) * b[static_cast<std::size_t>(k - 1)];
  }
  return b;
}

std::vector<double> RefinementParams::coefficients() const { return refinement_coefficients(m); }

ScalingEstimate scaling_guess(const rt::Runtime& runtime, const HMatrix& s) {
  const double beta = gershgorin_upper_bound(runtime, s);
  if (!(beta > 0.0)) {
    throw InvalidInput("Gershgorin bound " + std::to_string(beta) + " is not positive");
  }
  return {beta, std::sqrt(2.0 / beta)};
}

void RefinementLog::add(RefinementRecord rec) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(rec));
}

std::vector<RefinementRecord> RefinementLog::records() const {
  std::lock_guard lock(mu_);
  auto out = records_;
  std::sort(out.begin(), out.end(), [](const RefinementRecord& a, const RefinementRecord& b) {
    if (a.dim != b.dim) return a.dim > b.dim;
    return a.offset < b.offset;
  });
  return out;
}

void RefinementLog::clear() {
  std::lock_guard lock(mu_);
  records_.clear();
}

namespace {

HMatrix null_like(const HMatrix& h) { return h.with_root({}); }

ChunkId rinch_task(rt::Scope& scope, const HMatrix& s, double tau, int offset) {
  if (s.root.value() == 0) throw NotPositiveDefinite(static_cast<std::size_t>(offset), 0.0);
  return scope.register_task("rinch", {s.root}, [s, tau, offset](TaskContext& ctx) -> TaskResult {
    if (ctx.input_is_null(0)) throw NotPositiveDefinite(static_cast<std::size_t>(offset), 0.0);
    if (s.is_leaf_level()) {
      LeafMatrix z;
      try {
        z = leaf_inverse_cholesky(ctx.input<LeafChunk>(0).leaf);
      } catch (const NotPositiveDefinite& e) {
        throw NotPositiveDefinite(static_cast<std::size_t>(offset) + e.pivot(), e.value());
      }
      leaf_truncate_in_place(z, tau);
      return TaskResult::make<LeafChunk>(std::move(z));
    }
    const auto& node = ctx.input<NodeChunk>(0);
    const int half = s.dim / 2;
    const HMatrix s00 = s.child(0, 0, node.children[0]);
    const HMatrix s01 = s.child(0, 1, node.children[1]);
    const HMatrix s11 = s.child(1, 1, node.children[3]);

    const HMatrix z00 = s00.with_root(rinch_task(ctx, s00, tau, offset));
    const HMatrix r = register_multiply(ctx, z00, s01, true, false, tau);
    const HMatrix rtr = register_multiply(ctx, r, r, true, false, tau);
    const HMatrix q = register_add(ctx, s11, rtr, 1.0, -1.0);
    const HMatrix z11 = s11.with_root(rinch_task(ctx, q, tau, offset + half));
    // -Z00 R does not wait for Z11.
    const HMatrix w = register_multiply(ctx, z00, r, false, false, tau, -1.0);
    const HMatrix z01 = register_multiply(ctx, w, z11, false, false, tau);
    return TaskResult::forward(join_quadrants(ctx, s, {z00.root, z01.root, ChunkId{}, z11.root}).root);
  });
}

struct LoopState {
  int iter = 0;
  double e_prev = std::numeric_limits<double>::infinity();
  int growth = 0;
  std::vector<double> errors;
};

ChunkId refine_task(rt::Scope& scope, const HMatrix& s, const HMatrix& z, const HMatrix& delta,
                    ChunkId e, const RefinementParams& params, std::shared_ptr<RefinementLog> log,
                    int offset, LoopState state) {
  return scope.register_task(
      "refine", {z.root, delta.root, s.root, std::move(e)},
      [s, z, delta, params, log = std::move(log), offset,
       state = std::move(state)](TaskContext& ctx) mutable -> TaskResult {
        const double err = std::sqrt(scalar_value(ctx.input_data(3)));
        state.errors.push_back(err);

        if (state.iter > 0 && err > 1.0 && err > state.e_prev) {
          if (++state.growth >= 3) {
            throw Divergence("refinement diverges at order " + std::to_string(s.dim) + ": ||delta||_F = " +
                             std::to_string(err) + " after " + std::to_string(state.iter) + " steps");
          }
        } else {
          state.growth = 0;
        }

        const bool stagnated =
            state.iter > 0 && err > std::pow(state.e_prev, static_cast<double>(params.m + 1));
        if (stagnated && err > 1.0) {
          // Blew up faster than the growth counter can see.
          throw Divergence("refinement diverges at order " + std::to_string(s.dim) + ": ||delta||_F grew from " +
                           std::to_string(state.e_prev) + " to " + std::to_string(err));
        }
        if (stagnated || err == 0.0 || state.iter >= params.max_iters) {
          if (log) log->add({s.dim, offset, state.iter, std::move(state.errors)});
          return TaskResult::forward(ctx.input_id(0));
        }

        const HMatrix zi = z.with_root(ctx.input_id(0));
        const HMatrix di = delta.with_root(ctx.input_id(1));
        const HMatrix si = s.with_root(ctx.input_id(2));
        RefineOutput next = register_refine_step(ctx, zi, si, di, params);
        ChunkId e_next = register_sumsq(ctx, next.delta);
        state.e_prev = err;
        ++state.iter;
        return TaskResult::forward(
            refine_task(ctx, si, next.z, next.delta, std::move(e_next), params, log, offset, std::move(state)));
      });
}

ChunkId lif_task(rt::Scope& scope, const HMatrix& s, const RefinementParams& params, int switch_dim,
                 std::shared_ptr<RefinementLog> log, int offset) {
  if (s.dim <= switch_dim || s.is_leaf_level()) return rinch_task(scope, s, params.tau, offset);
  return scope.register_task("lif", {s.root},
                             [s, params, switch_dim, log = std::move(log), offset](TaskContext& ctx) -> TaskResult {
    if (ctx.input_is_null(0)) throw NotPositiveDefinite(static_cast<std::size_t>(offset), 0.0);
    const auto& node = ctx.input<NodeChunk>(0);
    const int half = s.dim / 2;
    const HMatrix a = s.child(0, 0, node.children[0]);
    const HMatrix b = s.child(0, 1, node.children[1]);
    const HMatrix c = s.child(1, 1, node.children[3]);

    const HMatrix za = a.with_root(lif_task(ctx, a, params, switch_dim, log, offset));
    const HMatrix zc = c.with_root(lif_task(ctx, c, params, switch_dim, log, offset + half));
    const HMatrix z0 = join_quadrants(ctx, s, {za.root, ChunkId{}, ChunkId{}, zc.root});
    const HMatrix delta0 = register_build_delta0(ctx, za, zc, b, params.tau);
    return TaskResult::forward(register_refinement(ctx, s, z0, delta0, params, log, offset).root);
  });
}

rt::RunStats run_graph(rt::Runtime& runtime, const ChunkId& root) {
  try {
    return runtime.execute(root).stats;
  } catch (const rt::TaskFailure& failure) {
    try {
      failure.rethrow_cause();
    } catch (const NotPositiveDefinite&) {
      throw;
    } catch (const Divergence&) {
      throw;
    } catch (...) {
      throw failure;
    }
  }
}

FactorizationReport finish_report(rt::Runtime& runtime, const HMatrix& s, const HMatrix& z,
                                  std::string algorithm, rt::RunStats stats) {
  FactorizationReport rep;
  rep.algorithm = std::move(algorithm);
  rep.z = z;
  rep.z.logical_dim = s.logical_dim;
  rep.stats = std::move(stats);
  const bool tracing = runtime.recording_trace();
  if (tracing) rep.trace = runtime.last_trace();
  runtime.set_record_trace(false);
  rep.err_frobenius = factorization_error(runtime, s, z);
  runtime.set_record_trace(tracing);
  rep.nnz_per_row = nnz_per_row(runtime, rep.z);
  return rep;
}

}  // namespace

HMatrix register_rinch(rt::Scope& scope, const HMatrix& s, double tau, int offset) {
  return s.with_root(rinch_task(scope, s, tau, offset));
}

RefineOutput register_refine_step(rt::Scope& scope, const HMatrix& z, const HMatrix& s,
                                  const HMatrix& delta, const RefinementParams& params) {
  const std::vector<double> b = params.coefficients();
  const double tau = params.tau;

  // X = sum_{k=1..m} b_k delta^k
  HMatrix power = delta;
  HMatrix x = register_add(scope, delta, null_like(delta), b[1], 1.0);
  for (int k = 2; k <= params.m; ++k) {
    power = register_multiply(scope, power, delta, false, false, tau);
    x = register_add(scope, x, power, 1.0, b[static_cast<std::size_t>(k)]);
  }

  RefineOutput out;
  if (params.mode == RefinementMode::localized) {
    const HMatrix m = register_multiply(scope, z, x, false, false, tau);
    out.z = register_add(scope, z, m, 1.0, 1.0);
    const HMatrix sm = register_multiply(scope, s, m, false, false, tau);
    const HMatrix t1 = register_multiply(scope, out.z, sm, true, false, tau);
    // S is symmetric, so M^T S Z = (S M)^T Z.
    const HMatrix t2 = register_multiply(scope, sm, z, true, false, tau);
    out.delta = register_add(scope, register_add(scope, delta, t1, 1.0, -1.0), t2, 1.0, -1.0);
  } else {
    const HMatrix eye = identity(scope, z.dim, z.leaf_dim, z.blocksize);
    out.z = register_multiply(scope, z, register_add(scope, eye, x, 1.0, 1.0), false, false, tau);
    const HMatrix sz = register_multiply(scope, s, out.z, false, false, tau);
    const HMatrix ztsz = register_multiply(scope, out.z, sz, true, false, tau);
    out.delta = register_add(scope, eye, ztsz, 1.0, -1.0);
  }
  if (params.symmetrize && tau > 0.0) {
    out.delta = register_add(scope, out.delta, out.delta, 0.5, 0.5, true);
  }
  return out;
}

HMatrix register_refinement(rt::Scope& scope, const HMatrix& s, const HMatrix& z0,
                            const HMatrix& delta0, const RefinementParams& params,
                            std::shared_ptr<RefinementLog> log, int offset) {
  ChunkId e0 = register_sumsq(scope, delta0);
  return z0.with_root(refine_task(scope, s, z0, delta0, std::move(e0), params, std::move(log), offset, {}));
}

HMatrix register_build_delta0(rt::Scope& scope, const HMatrix& zl, const HMatrix& zr,
                              const HMatrix& b, double tau) {
  const HMatrix bz = register_multiply(scope, b, zr, false, false, tau);
  const HMatrix x = register_multiply(scope, zl, bz, true, false, tau, -1.0);
  const HMatrix xt = register_transpose(scope, x);
  HMatrix parent = b;
  parent.dim = 2 * b.dim;
  parent.logical_dim = zl.logical_dim + zr.logical_dim;
  return join_quadrants(scope, parent, {ChunkId{}, x.root, xt.root, ChunkId{}});
}

HMatrix register_irsi(rt::Scope& scope, const HMatrix& s, double c, const RefinementParams& params,
                      std::shared_ptr<RefinementLog> log) {
  const HMatrix z0 = identity(scope, s.dim, s.leaf_dim, s.blocksize, c, s.logical_dim);
  const HMatrix eye = identity(scope, s.dim, s.leaf_dim, s.blocksize, 1.0, s.logical_dim);
  const HMatrix delta0 = register_add(scope, eye, s, 1.0, -c * c);
  return register_refinement(scope, s, z0, delta0, params, std::move(log), 0);
}

HMatrix register_lif(rt::Scope& scope, const HMatrix& s, const RefinementParams& params,
                     int switch_dim, std::shared_ptr<RefinementLog> log, int offset) {
  return s.with_root(lif_task(scope, s, params, switch_dim, std::move(log), offset));
}

FactorizationReport rinch(rt::Runtime& runtime, const HMatrix& s, const RefinementParams& params) {
  const HMatrix z = register_rinch(runtime, s, params.tau);
  rt::RunStats stats = run_graph(runtime, z.root);
  return finish_report(runtime, s, z, "rinch", std::move(stats));
}

FactorizationReport irsi(rt::Runtime& runtime, const HMatrix& s, const RefinementParams& params,
                         std::optional<double> c) {
  ScalingEstimate scaling;
  if (c) {
    if (!(*c > 0.0)) throw InvalidInput("scaling c must be positive");
    scaling = {2.0 / (*c * *c), *c};
  } else {
    scaling = scaling_guess(runtime, s);
  }
  auto log = std::make_shared<RefinementLog>();
  const HMatrix z = register_irsi(runtime, s, scaling.c, params, log);
  rt::RunStats stats = run_graph(runtime, z.root);
  FactorizationReport rep = finish_report(runtime, s, z, "irsi", std::move(stats));
  rep.refinements = log->records();
  rep.iterations = rep.refinements.empty() ? 0 : rep.refinements.front().iterations;
  rep.scaling = scaling;
  return rep;
}

FactorizationReport lif(rt::Runtime& runtime, const HMatrix& s, const RefinementParams& params,
                        int switch_dim) {
  if (switch_dim < 1) throw InvalidInput("switch dimension must be positive");
  auto log = std::make_shared<RefinementLog>();
  const HMatrix z = register_lif(runtime, s, params, switch_dim, log);
  rt::RunStats stats = run_graph(runtime, z.root);
  FactorizationReport rep = finish_report(runtime, s, z, "lif", std::move(stats));
  rep.refinements = log->records();
  for (const auto& r : rep.refinements) {
    if (r.dim == s.dim) rep.iterations = r.iterations;
  }
  return rep;
}

RefineOutput refine_step(rt::Runtime& runtime, const HMatrix& z, const HMatrix& s,
                         const HMatrix& delta, const RefinementParams& params) {
  RefineOutput out = register_refine_step(runtime, z, s, delta, params);
  if (out.z.root.value() != 0) run_graph(runtime, out.z.root);
  if (out.delta.root.value() != 0) run_graph(runtime, out.delta.root);
  return out;
}

HMatrix build_delta0(rt::Runtime& runtime, const HMatrix& zl, const HMatrix& zr, const HMatrix& b,
                     double tau) {
  HMatrix d = register_build_delta0(runtime, zl, zr, b, tau);
  if (d.root.value() != 0) run_graph(runtime, d.root);
  return d;
}

double factorization_error(rt::Runtime& runtime, const HMatrix& s, const HMatrix& z) {
  const HMatrix sz = register_multiply(runtime, s, z);
  const HMatrix ztsz = register_multiply(runtime, z, sz, true, false);
  const HMatrix eye = identity(runtime, s.dim, s.leaf_dim, s.blocksize);
  const HMatrix d = register_add(runtime, eye, ztsz, 1.0, -1.0);
  const ChunkId e = register_sumsq(runtime, d);
  if (e.value() == 0) return 0.0;
  run_graph(runtime, e);
  return std::sqrt(scalar_value(runtime.payload(e).get()));
}

int kmax_bound(double lambda_min, double lambda_max, double eps, int m) {
  if (!(lambda_min > 0.0) || !(lambda_min <= lambda_max)) {
    throw InvalidInput("kmax_bound needs 0 < lambda_min <= lambda_max");
  }
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidInput("kmax_bound needs 0 < eps < 1");
  if (m < 1) throw InvalidInput("kmax_bound needs m >= 1");
  const double ratio = lambda_min / lambda_max;
  if (ratio >= 1.0) return 0;
  const double inner = std::log(eps) / std::log1p(-ratio);
  if (inner <= 1.0) return 0;
  return static_cast<int>(std::ceil(std::log(inner) / std::log(static_cast<double>(m + 1))));
}

}  // namespace qtinv

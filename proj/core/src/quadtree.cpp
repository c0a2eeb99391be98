#include "qtinv/quadtree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "qtinv/errors.hpp"

namespace qtinv {

using rt::ChunkId;
using rt::TaskContext;
using rt::TaskResult;

namespace {

struct Level {
  int dim;
  int leaf_dim;
  int blocksize;

  bool leaf() const noexcept { return dim == leaf_dim; }
  Level half() const noexcept { return {dim / 2, leaf_dim, blocksize}; }
};

Level level_of(const HMatrix& h) { return {h.dim, h.leaf_dim, h.blocksize}; }

void require_same_shape(const HMatrix& a, const HMatrix& b) {
  if (a.dim != b.dim || a.leaf_dim != b.leaf_dim || a.blocksize != b.blocksize) {
    throw DimensionMismatch("quad-tree operands differ in shape (" + std::to_string(a.dim) + "/" +
                            std::to_string(a.leaf_dim) + " vs " + std::to_string(b.dim) + "/" +
                            std::to_string(b.leaf_dim) + ")");
  }
}

ChunkId join_node(rt::Scope& scope, int dim, std::array<ChunkId, 4> parts) {
  bool any = false;
  for (const auto& p : parts) any = any || p.value() != 0;
  if (!any) return {};
  return scope.join({parts.begin(), parts.end()}, [dim](std::span<const ChunkId> got) -> rt::ChunkPtr {
    std::array<ChunkId, 4> children;
    bool nonnull = false;
    for (std::size_t i = 0; i < 4; ++i) {
      children[i] = got[i];
      nonnull = nonnull || !got[i].is_null();
    }
    if (!nonnull) return nullptr;
    return std::make_shared<const NodeChunk>(dim, std::move(children));
  });
}

TaskResult leaf_result(LeafMatrix m) {
  if (m.empty()) return TaskResult::null();
  return TaskResult::make<LeafChunk>(std::move(m));
}

const NodeChunk& node_input(const TaskContext& ctx, std::size_t i) {
  return ctx.input<NodeChunk>(i);
}

const ChunkId& child_of(const NodeChunk& n, int i, int j, bool transposed) {
  return transposed ? n.children[static_cast<std::size_t>(2 * j + i)]
                    : n.children[static_cast<std::size_t>(2 * i + j)];
}

ChunkId add_task(rt::Scope& scope, ChunkId a, ChunkId b, Level lv, double alpha, double beta,
                 bool tb, double tau);

ChunkId multiply_task(rt::Scope& scope, ChunkId a, ChunkId b, Level lv, bool ta, bool tb,
                      double alpha, double tau) {
  if (a.value() == 0 || b.value() == 0) return {};
  return scope.register_task("multiply", {std::move(a), std::move(b)},
                             [=](TaskContext& ctx) -> TaskResult {
    if (ctx.input_is_null(0) || ctx.input_is_null(1)) return TaskResult::null();
    if (lv.leaf()) {
      LeafMatrix out = leaf_multiply(ctx.input<LeafChunk>(0).leaf, ctx.input<LeafChunk>(1).leaf,
                                     ta, tb, alpha);
      leaf_truncate_in_place(out, tau);
      return leaf_result(std::move(out));
    }
    const NodeChunk& na = node_input(ctx, 0);
    const NodeChunk& nb = node_input(ctx, 1);
    std::array<ChunkId, 4> out;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        std::array<std::pair<ChunkId, ChunkId>, 2> prods;
        int count = 0;
        for (int k = 0; k < 2; ++k) {
          const ChunkId& ca = child_of(na, i, k, ta);
          const ChunkId& cb = child_of(nb, k, j, tb);
          if (ca.is_null() || cb.is_null()) continue;
          prods[static_cast<std::size_t>(count++)] = {ca, cb};
        }
        ChunkId& slot = out[static_cast<std::size_t>(2 * i + j)];
        if (count == 1) {
          slot = multiply_task(ctx, prods[0].first, prods[0].second, lv.half(), ta, tb, alpha, tau);
        } else if (count == 2) {
          // Partial products stay untruncated; the sum is truncated once.
          ChunkId p0 = multiply_task(ctx, prods[0].first, prods[0].second, lv.half(), ta, tb, alpha, 0.0);
          ChunkId p1 = multiply_task(ctx, prods[1].first, prods[1].second, lv.half(), ta, tb, alpha, 0.0);
          slot = add_task(ctx, std::move(p0), std::move(p1), lv.half(), 1.0, 1.0, false, tau);
        }
      }
    }
    return TaskResult::forward(join_node(ctx, lv.dim, std::move(out)));
  });
}

ChunkId add_task(rt::Scope& scope, ChunkId a, ChunkId b, Level lv, double alpha, double beta,
                 bool tb, double tau) {
  const bool a_known_null = a.value() == 0;
  const bool b_known_null = b.value() == 0;
  if (a_known_null && b_known_null) return {};
  if (b_known_null && alpha == 1.0 && tau == 0.0) return a;
  if (a_known_null && beta == 1.0 && !tb && tau == 0.0) return b;
  return scope.register_task("add", {std::move(a), std::move(b)}, [=](TaskContext& ctx) -> TaskResult {
    const bool an = ctx.input_is_null(0);
    const bool bn = ctx.input_is_null(1);
    if (an && bn) return TaskResult::null();
    if (bn && alpha == 1.0 && tau == 0.0) return TaskResult::forward(ctx.input_id(0));
    if (an && beta == 1.0 && !tb && tau == 0.0) return TaskResult::forward(ctx.input_id(1));
    if (lv.leaf()) {
      const LeafMatrix empty(lv.dim, lv.blocksize);
      const LeafMatrix& la = an ? empty : ctx.input<LeafChunk>(0).leaf;
      const LeafMatrix& lb = bn ? empty : ctx.input<LeafChunk>(1).leaf;
      LeafMatrix out = leaf_add(la, lb, alpha, beta, tb);
      leaf_truncate_in_place(out, tau);
      return leaf_result(std::move(out));
    }
    const NodeChunk* na = an ? nullptr : &node_input(ctx, 0);
    const NodeChunk* nb = bn ? nullptr : &node_input(ctx, 1);
    std::array<ChunkId, 4> out;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        ChunkId ca = na ? na->children[static_cast<std::size_t>(2 * i + j)] : ChunkId{};
        ChunkId cb = nb ? child_of(*nb, i, j, tb) : ChunkId{};
        if (ca.value() != 0 && ca.is_null()) ca = {};
        if (cb.value() != 0 && cb.is_null()) cb = {};
        out[static_cast<std::size_t>(2 * i + j)] =
            add_task(ctx, std::move(ca), std::move(cb), lv.half(), alpha, beta, tb, tau);
      }
    }
    return TaskResult::forward(join_node(ctx, lv.dim, std::move(out)));
  });
}

ChunkId transpose_task(rt::Scope& scope, ChunkId a, Level lv) {
  if (a.value() == 0) return {};
  return scope.register_task("transpose", {std::move(a)}, [=](TaskContext& ctx) -> TaskResult {
    if (ctx.input_is_null(0)) return TaskResult::null();
    if (lv.leaf()) return leaf_result(leaf_transpose(ctx.input<LeafChunk>(0).leaf));
    const NodeChunk& n = node_input(ctx, 0);
    std::array<ChunkId, 4> out;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const ChunkId& c = child_of(n, i, j, true);
        if (!c.is_null()) out[static_cast<std::size_t>(2 * i + j)] = transpose_task(ctx, c, lv.half());
      }
    }
    return TaskResult::forward(join_node(ctx, lv.dim, std::move(out)));
  });
}

ChunkId truncate_task(rt::Scope& scope, ChunkId a, Level lv, double tau) {
  if (a.value() == 0) return {};
  return scope.register_task("truncate", {std::move(a)}, [=](TaskContext& ctx) -> TaskResult {
    if (ctx.input_is_null(0)) return TaskResult::null();
    if (lv.leaf()) return leaf_result(leaf_truncate(ctx.input<LeafChunk>(0).leaf, tau));
    const NodeChunk& n = node_input(ctx, 0);
    std::array<ChunkId, 4> out;
    for (std::size_t q = 0; q < 4; ++q) {
      if (!n.children[q].is_null()) out[q] = truncate_task(ctx, n.children[q], lv.half(), tau);
    }
    return TaskResult::forward(join_node(ctx, lv.dim, std::move(out)));
  });
}

ChunkId sumsq_task(rt::Scope& scope, ChunkId a, Level lv) {
  if (a.value() == 0) return {};
  return scope.register_task("sumsq", {std::move(a)}, [=](TaskContext& ctx) -> TaskResult {
    if (ctx.input_is_null(0)) return TaskResult::null();
    if (lv.leaf()) {
      return TaskResult::make<rt::ScalarChunk>(ctx.input<LeafChunk>(0).leaf.frobenius_norm_squared());
    }
    const NodeChunk& n = node_input(ctx, 0);
    std::vector<ChunkId> parts;
    for (const auto& c : n.children) {
      if (!c.is_null()) parts.push_back(sumsq_task(ctx, c, lv.half()));
    }
    return TaskResult::forward(ctx.register_task("sum", std::move(parts), [](TaskContext& sum) {
      double total = 0.0;
      for (std::size_t i = 0; i < sum.input_count(); ++i) total += scalar_value(sum.input_data(i));
      return TaskResult::make<rt::ScalarChunk>(total);
    }));
  });
}

int checked_pow2_multiple(int n, int leaf_dim) {
  if (leaf_dim <= 0 || !std::has_single_bit(static_cast<unsigned>(leaf_dim))) {
    throw InvalidInput("leaf dimension must be a positive power of two, got " + std::to_string(leaf_dim));
  }
  long long d = leaf_dim;
  while (d < n) d *= 2;
  if (d > (1LL << 30)) throw InvalidInput("matrix order too large: " + std::to_string(n));
  return static_cast<int>(d);
}

const rt::ChunkData* ready_payload(const rt::Runtime& runtime, const ChunkId& id) {
  return runtime.payload(id).get();
}

void visit_leaves(const rt::Runtime& runtime, const ChunkId& id, int dim, int leaf_dim, int r0,
                  int c0, const std::function<void(int, int, const LeafMatrix&)>& fn) {
  const rt::ChunkData* p = ready_payload(runtime, id);
  if (p == nullptr) return;
  if (dim == leaf_dim) {
    fn(r0, c0, dynamic_cast<const LeafChunk&>(*p).leaf);
    return;
  }
  const auto& n = dynamic_cast<const NodeChunk&>(*p);
  const int h = dim / 2;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      visit_leaves(runtime, n.children[static_cast<std::size_t>(2 * i + j)], h, leaf_dim, r0 + i * h,
                   c0 + j * h, fn);
    }
  }
}

}  // namespace

HMatrix HMatrix::child(int i, int j, rt::ChunkId id) const {
  HMatrix h = *this;
  h.root = std::move(id);
  h.dim = dim / 2;
  if (i == j) {
    h.logical_dim = std::clamp(logical_dim - i * h.dim, 0, h.dim);
  } else {
    h.logical_dim = h.dim;
  }
  return h;
}

PadSpec PadSpec::for_dim(int n, int leaf_dim) {
  if (n < 1) throw InvalidInput("matrix order must be positive, got " + std::to_string(n));
  return {n, checked_pow2_multiple(n, leaf_dim)};
}

HMatrix assemble(rt::Scope& scope, std::vector<Entry> entries, int logical_dim,
                 const TreeOptions& opts) {
  const PadSpec pad = PadSpec::for_dim(logical_dim, opts.leaf_dim);
  if (opts.blocksize <= 0 || opts.leaf_dim % opts.blocksize != 0) {
    throw InvalidInput("blocksize " + std::to_string(opts.blocksize) + " does not divide leaf dimension " +
                       std::to_string(opts.leaf_dim));
  }
  const int ld = opts.leaf_dim;
  using Key = std::pair<int, int>;
  std::map<Key, std::vector<double>> leaves;
  auto leaf_values = [&](int r, int c) -> double& {
    auto& vals = leaves[{r / ld, c / ld}];
    if (vals.empty()) vals.assign(static_cast<std::size_t>(ld) * ld, 0.0);
    return vals[static_cast<std::size_t>(r % ld) * ld + static_cast<std::size_t>(c % ld)];
  };
  for (const auto& e : entries) {
    if (e.row < 0 || e.col < 0 || e.row >= logical_dim || e.col >= logical_dim) {
      throw InvalidInput("entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                         ") outside a " + std::to_string(logical_dim) + " x " +
                         std::to_string(logical_dim) + " matrix");
    }
    leaf_values(e.row, e.col) += e.value;
  }
  for (int i = logical_dim; i < pad.padded_dim; ++i) leaf_values(i, i) = 1.0;

  std::vector<std::pair<Key, ChunkId>> keyed;
  keyed.reserve(leaves.size());
  for (auto& [key, vals] : leaves) {
    LeafMatrix m = LeafMatrix::from_dense(ld, opts.blocksize, vals);
    if (!m.empty()) keyed.emplace_back(key, scope.make_chunk<LeafChunk>(std::move(m)));
    vals.clear();
    vals.shrink_to_fit();
  }

  // Split the leaf list into quadrants until one leaf tile remains.
  std::function<ChunkId(std::vector<std::pair<Key, ChunkId>>&, int, int, int)> build =
      [&](std::vector<std::pair<Key, ChunkId>>& items, int r0, int c0, int tiles) -> ChunkId {
    if (items.empty()) return {};
    if (tiles == 1) return items.front().second;
    const int h = tiles / 2;
    std::array<std::vector<std::pair<Key, ChunkId>>, 4> parts;
    for (auto& it : items) {
      const int qi = it.first.first >= r0 + h ? 1 : 0;
      const int qj = it.first.second >= c0 + h ? 1 : 0;
      parts[static_cast<std::size_t>(2 * qi + qj)].push_back(std::move(it));
    }
    items.clear();
    std::array<ChunkId, 4> children;
    bool any = false;
    for (int q = 0; q < 4; ++q) {
      children[static_cast<std::size_t>(q)] =
          build(parts[static_cast<std::size_t>(q)], r0 + (q / 2) * h, c0 + (q % 2) * h, h);
      any = any || children[static_cast<std::size_t>(q)].value() != 0;
    }
    if (!any) return {};
    return scope.make_chunk<NodeChunk>(tiles * ld, std::move(children));
  };
  HMatrix h;
  h.root = build(keyed, 0, 0, pad.padded_dim / ld);
  h.dim = pad.padded_dim;
  h.leaf_dim = ld;
  h.blocksize = opts.blocksize;
  h.logical_dim = logical_dim;
  return h;
}

HMatrix identity(rt::Scope& scope, int dim, int leaf_dim, int blocksize, double scale,
                 int logical_dim) {
  if (dim < leaf_dim || dim % leaf_dim != 0 || !std::has_single_bit(static_cast<unsigned>(dim / leaf_dim))) {
    throw InvalidInput("identity order " + std::to_string(dim) + " is not leaf_dim * 2^k");
  }
  HMatrix h;
  h.dim = dim;
  h.leaf_dim = leaf_dim;
  h.blocksize = blocksize;
  h.logical_dim = logical_dim < 0 ? dim : logical_dim;
  if (scale == 0.0) return h;
  ChunkId diag = scope.make_chunk<LeafChunk>(LeafMatrix::identity(leaf_dim, blocksize, scale));
  for (int d = 2 * leaf_dim; d <= dim; d *= 2) {
    diag = scope.make_chunk<NodeChunk>(d, std::array<ChunkId, 4>{diag, {}, {}, diag});
  }
  h.root = std::move(diag);
  return h;
}

HMatrix register_multiply(rt::Scope& scope, const HMatrix& a, const HMatrix& b, bool ta, bool tb,
                          double tau, double alpha) {
  require_same_shape(a, b);
  return a.with_root(multiply_task(scope, a.root, b.root, level_of(a), ta, tb, alpha, tau));
}

HMatrix register_add(rt::Scope& scope, const HMatrix& a, const HMatrix& b, double alpha,
                     double beta, bool tb, double tau) {
  require_same_shape(a, b);
  return a.with_root(add_task(scope, a.root, b.root, level_of(a), alpha, beta, tb, tau));
}

HMatrix join_quadrants(rt::Scope& scope, const HMatrix& parent, std::array<rt::ChunkId, 4> parts) {
  return parent.with_root(join_node(scope, parent.dim, std::move(parts)));
}

HMatrix register_transpose(rt::Scope& scope, const HMatrix& a) {
  return a.with_root(transpose_task(scope, a.root, level_of(a)));
}

HMatrix register_truncate(rt::Scope& scope, const HMatrix& a, double tau) {
  if (tau < 0.0) throw InvalidInput("truncation threshold must be nonnegative");
  return a.with_root(truncate_task(scope, a.root, level_of(a), tau));
}

ChunkId register_sumsq(rt::Scope& scope, const HMatrix& a) {
  return sumsq_task(scope, a.root, level_of(a));
}

double scalar_value(const rt::ChunkData* chunk) {
  if (chunk == nullptr) return 0.0;
  const auto* s = dynamic_cast<const rt::ScalarChunk*>(chunk);
  if (s == nullptr) throw std::logic_error("chunk is not a scalar");
  return s->value;
}

namespace {
HMatrix run(rt::Runtime& runtime, HMatrix h) {
  if (h.root.value() != 0) runtime.execute(h.root);
  return h;
}
}  // namespace

HMatrix multiply(rt::Runtime& runtime, const HMatrix& a, const HMatrix& b, bool ta, bool tb,
                 double tau) {
  return run(runtime, register_multiply(runtime, a, b, ta, tb, tau));
}

HMatrix add_scaled(rt::Runtime& runtime, const HMatrix& a, const HMatrix& b, double alpha,
                   double beta) {
  return run(runtime, register_add(runtime, a, b, alpha, beta));
}

HMatrix transpose(rt::Runtime& runtime, const HMatrix& a) {
  return run(runtime, register_transpose(runtime, a));
}

HMatrix truncate(rt::Runtime& runtime, const HMatrix& a, double tau) {
  return run(runtime, register_truncate(runtime, a, tau));
}

double frobenius_norm(rt::Runtime& runtime, const HMatrix& a) {
  ChunkId s = register_sumsq(runtime, a);
  if (s.value() == 0) return 0.0;
  runtime.execute(s);
  return std::sqrt(scalar_value(runtime.payload(s).get()));
}

double gershgorin_upper_bound(const rt::Runtime& runtime, const HMatrix& s) {
  std::vector<double> rows(static_cast<std::size_t>(s.dim), 0.0);
  for_each_leaf(runtime, s, [&](int r0, int c0, const LeafMatrix& leaf) {
    leaf_gershgorin_rows(leaf, std::span<double>(rows).subspan(static_cast<std::size_t>(r0), leaf.dim()),
                         r0 == c0);
  });
  return rows.empty() ? 0.0 : *std::max_element(rows.begin(), rows.end());
}

Quadrants quadrants(const rt::Runtime& runtime, const HMatrix& s) {
  if (s.is_leaf_level()) throw InvalidInput("quadrants of a leaf-level matrix");
  const rt::ChunkData* p = ready_payload(runtime, s.root);
  if (p == nullptr) throw InvalidInput("quadrants of a null matrix");
  const auto& n = dynamic_cast<const NodeChunk&>(*p);
  return {s.child(0, 0, n.children[0]), s.child(0, 1, n.children[1]), s.child(1, 0, n.children[2]),
          s.child(1, 1, n.children[3])};
}

void for_each_leaf(const rt::Runtime& runtime, const HMatrix& a,
                   const std::function<void(int, int, const LeafMatrix&)>& fn) {
  visit_leaves(runtime, a.root, a.dim, a.leaf_dim, 0, 0, fn);
}

std::vector<double> densify(const rt::Runtime& runtime, const HMatrix& a, int max_dim) {
  if (a.dim > max_dim) {
    throw InvalidInput("refusing to densify a " + std::to_string(a.dim) + " x " +
                       std::to_string(a.dim) + " matrix (cap " + std::to_string(max_dim) + ")");
  }
  const auto n = static_cast<std::size_t>(a.dim);
  std::vector<double> out(n * n, 0.0);
  for_each_leaf(runtime, a, [&](int r0, int c0, const LeafMatrix& leaf) {
    const int bs = leaf.blocksize();
    for (const auto& [idx, blk] : leaf.blocks()) {
      for (int i = 0; i < bs; ++i) {
        const auto row = static_cast<std::size_t>(r0 + static_cast<int>(idx.row) * bs + i);
        for (int j = 0; j < bs; ++j) {
          const auto col = static_cast<std::size_t>(c0 + static_cast<int>(idx.col) * bs + j);
          out[row * n + col] = blk[static_cast<std::size_t>(i) * bs + j];
        }
      }
    }
  });
  return out;
}

namespace {
template <class Fn>
void for_each_logical_nonzero(const rt::Runtime& runtime, const HMatrix& a, Fn fn) {
  const int limit = a.logical_dim;
  for_each_leaf(runtime, a, [&](int r0, int c0, const LeafMatrix& leaf) {
    if (r0 >= limit || c0 >= limit) return;
    const int bs = leaf.blocksize();
    for (const auto& [idx, blk] : leaf.blocks()) {
      for (int i = 0; i < bs; ++i) {
        const int row = r0 + static_cast<int>(idx.row) * bs + i;
        if (row >= limit) break;
        for (int j = 0; j < bs; ++j) {
          const int col = c0 + static_cast<int>(idx.col) * bs + j;
          if (col >= limit) break;
          const double v = blk[static_cast<std::size_t>(i) * bs + j];
          if (v != 0.0) fn(row, col, v);
        }
      }
    }
  });
}
}  // namespace

double nnz_per_row(const rt::Runtime& runtime, const HMatrix& a) {
  if (a.logical_dim <= 0) return 0.0;
  std::size_t count = 0;
  for_each_logical_nonzero(runtime, a, [&](int, int, double) { ++count; });
  return static_cast<double>(count) / a.logical_dim;
}

std::vector<Entry> to_entries(const rt::Runtime& runtime, const HMatrix& a) {
  std::vector<Entry> out;
  for_each_logical_nonzero(runtime, a, [&](int r, int c, double v) { out.push_back({r, c, v}); });
  std::sort(out.begin(), out.end(), [](const Entry& x, const Entry& y) {
    return std::pair(x.row, x.col) < std::pair(y.row, y.col);
  });
  return out;
}

}  // namespace qtinv

#pragma once

// Quad-tree matrices on top of the task runtime.
//
// An HMatrix is a chunk id plus geometry. The chunk is either null (all-zero
// matrix), a LeafChunk at the leaf level, or a NodeChunk holding four child
// ids in the order (0,0), (0,1), (1,0), (1,1). Subtrees that are entirely zero
// are always null; a node never has four null children.
//
// The register_* functions only build task graphs: they return immediately
// with a pending root, and the result is available after Runtime::execute.
// The host functions further down read ready trees from the main program.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "qtinv/leaf_matrix.hpp"
#include "qtinv/task_runtime.hpp"

namespace qtinv {

struct LeafChunk final : rt::ChunkData {
  explicit LeafChunk(LeafMatrix m) : leaf(std::move(m)) {}
  std::size_t size_bytes() const override { return leaf.size_bytes(); }
  LeafMatrix leaf;
};

struct NodeChunk final : rt::ChunkData {
  NodeChunk(int d, std::array<rt::ChunkId, 4> c) : dim(d), children(std::move(c)) {}
  std::size_t size_bytes() const override { return 16 + 4 * sizeof(std::uint64_t); }
  int dim;
  std::array<rt::ChunkId, 4> children;
};

struct HMatrix {
  rt::ChunkId root;
  int dim = 0;
  int leaf_dim = 0;
  int blocksize = 0;
  /// Order of the matrix before identity padding.
  int logical_dim = 0;

  bool is_leaf_level() const noexcept { return dim == leaf_dim; }
  /// Same geometry, different chunk.
  HMatrix with_root(rt::ChunkId id) const {
    HMatrix h = *this;
    h.root = std::move(id);
    return h;
  }
  /// Geometry of quadrant (i, j); only diagonal quadrants carry a logical part.
  HMatrix child(int i, int j, rt::ChunkId id) const;
};

struct PadSpec {
  int logical_dim = 0;
  int padded_dim = 0;

  /// Smallest leaf_dim * 2^k that holds n rows.
  static PadSpec for_dim(int n, int leaf_dim);
};

struct Entry {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

struct TreeOptions {
  int leaf_dim = 128;
  int blocksize = 8;
};

/// Builds a tree from coordinate entries (duplicates are summed). Rows and
/// columns past logical_dim get 1 on the diagonal. Throws InvalidInput on an
/// index outside [0, logical_dim).
HMatrix assemble(rt::Scope& scope, std::vector<Entry> entries, int logical_dim,
                 const TreeOptions& opts);

/// scale * I of padded order dim. Diagonal subtrees share one chunk.
HMatrix identity(rt::Scope& scope, int dim, int leaf_dim, int blocksize, double scale = 1.0,
                 int logical_dim = -1);

/// alpha * op(a) * op(b). Products with a null operand are skipped and every
/// output leaf is truncated at tau exactly once.
HMatrix register_multiply(rt::Scope& scope, const HMatrix& a, const HMatrix& b, bool ta = false,
                          bool tb = false, double tau = 0.0, double alpha = 1.0);

/// alpha * a + beta * op(b), optionally truncating output leaves at tau.
HMatrix register_add(rt::Scope& scope, const HMatrix& a, const HMatrix& b, double alpha,
                     double beta, bool tb = false, double tau = 0.0);

HMatrix register_transpose(rt::Scope& scope, const HMatrix& a);

/// Node with the geometry of `parent` from four (possibly pending) quadrants.
HMatrix join_quadrants(rt::Scope& scope, const HMatrix& parent, std::array<rt::ChunkId, 4> parts);

/// Drops leaf blocks with Frobenius norm below tau.
HMatrix register_truncate(rt::Scope& scope, const HMatrix& a, double tau);

/// ScalarChunk with the sum of squares of all entries, null for a null tree.
/// Leaves are summed in tree order, so the value does not depend on scheduling.
rt::ChunkId register_sumsq(rt::Scope& scope, const HMatrix& a);

/// Value of a ready ScalarChunk; null reads as 0.
double scalar_value(const rt::ChunkData* chunk);

// Host side helpers. These read ready chunks and run outside any task.

/// Registers and runs a product, returning the ready result.
HMatrix multiply(rt::Runtime& runtime, const HMatrix& a, const HMatrix& b, bool ta = false,
                 bool tb = false, double tau = 0.0);
HMatrix add_scaled(rt::Runtime& runtime, const HMatrix& a, const HMatrix& b, double alpha,
                   double beta);
HMatrix transpose(rt::Runtime& runtime, const HMatrix& a);
HMatrix truncate(rt::Runtime& runtime, const HMatrix& a, double tau);
double frobenius_norm(rt::Runtime& runtime, const HMatrix& a);

/// max_i (s_ii + sum_{j != i} |s_ij|) over all padded rows.
double gershgorin_upper_bound(const rt::Runtime& runtime, const HMatrix& s);

struct Quadrants {
  HMatrix a, b, bt, c;
};
/// Children of an internal node; throws InvalidInput for a leaf or null root.
Quadrants quadrants(const rt::Runtime& runtime, const HMatrix& s);

/// Calls fn(row0, col0, leaf) for every stored leaf, in tree order.
void for_each_leaf(const rt::Runtime& runtime, const HMatrix& a,
                   const std::function<void(int, int, const LeafMatrix&)>& fn);

inline constexpr int kDefaultDensifyCap = 8192;

/// Row-major padded dim x dim copy. Throws InvalidInput above max_dim.
std::vector<double> densify(const rt::Runtime& runtime, const HMatrix& a,
                            int max_dim = kDefaultDensifyCap);

/// Nonzero entries inside the logical block, divided by logical_dim.
double nnz_per_row(const rt::Runtime& runtime, const HMatrix& a);

/// Nonzero entries with row, col < logical_dim, in row-major order.
std::vector<Entry> to_entries(const rt::Runtime& runtime, const HMatrix& a);

}  // namespace qtinv

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dense_oracle.hpp"
#include "qtinv/errors.hpp"
#include "qtinv/quadtree.hpp"

using namespace qtinv;
using namespace qtinv::testing;
using rt::Runtime;

namespace {

Dense tridiagonal(int n) {
  Dense d = Dense::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    d(i, i) = 2.0;
    if (i + 1 < n) d(i, i + 1) = d(i + 1, i) = -1.0;
  }
  return d;
}

double max_abs_diff(const Dense& a, const Dense& b) { return (a - b).cwiseAbs().maxCoeff(); }

// True when no reachable node densifies to all zeros.
bool pruned(const Runtime& rt, const rt::ChunkId& id, int dim, int leaf_dim) {
  auto p = rt.payload(id);
  if (!p) return true;
  if (dim == leaf_dim) {
    const auto* leaf = dynamic_cast<const LeafChunk*>(p.get());
    return leaf != nullptr && !leaf->leaf.empty() && leaf->leaf.nonzero_count() > 0;
  }
  const auto* node = dynamic_cast<const NodeChunk*>(p.get());
  if (node == nullptr) return false;
  bool any = false;
  for (const auto& c : node->children) {
    if (!pruned(rt, c, dim / 2, leaf_dim)) return false;
    any = any || rt.payload(c) != nullptr;
  }
  return any;
}

}  // namespace

TEST(PadSpec, RoundsUpToLeafTimesPowerOfTwo) {
  EXPECT_EQ(PadSpec::for_dim(5, 4).padded_dim, 8);
  EXPECT_EQ(PadSpec::for_dim(8, 4).padded_dim, 8);
  EXPECT_EQ(PadSpec::for_dim(3, 4).padded_dim, 4);
  EXPECT_EQ(PadSpec::for_dim(1000, 128).padded_dim, 1024);
  EXPECT_EQ(PadSpec::for_dim(1025, 128).padded_dim, 2048);
  EXPECT_EQ(PadSpec::for_dim(1000, 128).logical_dim, 1000);
  EXPECT_THROW(PadSpec::for_dim(0, 4), InvalidInput);
}

TEST(Assemble, EmptyListGivesNullLogicalPart) {
  Runtime rt;
  HMatrix h = assemble(rt, {}, 4, {4, 2});
  EXPECT_EQ(h.dim, 4);
  EXPECT_TRUE(h.root.is_null());
  // With padding the pad rows carry the identity.
  HMatrix p = assemble(rt, {}, 5, {4, 2});
  EXPECT_EQ(p.dim, 8);
  Dense expect = Dense::Zero(8, 8);
  for (int i = 5; i < 8; ++i) expect(i, i) = 1.0;
  EXPECT_EQ(to_eigen(rt, p), expect);
}

TEST(Assemble, SingleEntryHasNullSiblings) {
  Runtime rt;
  HMatrix h = assemble(rt, {{0, 0, 2.0}}, 16, {4, 2});
  int leaves = 0;
  for_each_leaf(rt, h, [&](int r0, int c0, const LeafMatrix& leaf) {
    ++leaves;
    EXPECT_EQ(r0, 0);
    EXPECT_EQ(c0, 0);
    EXPECT_EQ(leaf.at(0, 0), 2.0);
    EXPECT_EQ(leaf.block_count(), 1u);
  });
  EXPECT_EQ(leaves, 1);
  // Walk down the (0,0) spine; the other three children are null at every level.
  rt::ChunkId id = h.root;
  for (int dim = 16; dim > 4; dim /= 2) {
    auto node = rt.get<NodeChunk>(id);
    ASSERT_NE(node, nullptr);
    for (int i = 1; i < 4; ++i) EXPECT_TRUE(node->children[i].is_null());
    id = node->children[0];
  }
}

TEST(Assemble, TridiagonalFivePadsToEight) {
  Runtime rt;
  const Dense t = tridiagonal(5);
  HMatrix h = from_eigen(rt, t, 4, 2);
  EXPECT_EQ(h.dim, 8);
  EXPECT_EQ(h.logical_dim, 5);
  const Dense d = to_eigen(rt, h);
  EXPECT_EQ(d, padded(t, 8));
  for (int i = 5; i < 8; ++i) EXPECT_EQ(d(i, i), 1.0);
}

TEST(Assemble, SumsDuplicates) {
  Runtime rt;
  HMatrix h = assemble(rt, {{1, 2, 1.5}, {1, 2, 2.5}, {0, 0, 1.0}}, 4, {4, 2});
  const Dense d = to_eigen(rt, h);
  EXPECT_EQ(d(1, 2), 4.0);
  EXPECT_EQ(d(0, 0), 1.0);
}

TEST(Assemble, RejectsOutOfRangeIndex) {
  Runtime rt;
  EXPECT_THROW(assemble(rt, {{5, 0, 1.0}}, 5, {4, 2}), InvalidInput);
  EXPECT_THROW(assemble(rt, {{0, -1, 1.0}}, 5, {4, 2}), InvalidInput);
  EXPECT_THROW(assemble(rt, {}, 5, {4, 3}), InvalidInput);
  EXPECT_THROW(assemble(rt, {}, 5, {6, 3}), InvalidInput);
}

TEST(Assemble, DensifyRoundTrip) {
  std::mt19937_64 rng(21);
  Runtime rt;
  const Dense d = random_dense(rng, 100, 0.05);
  HMatrix h = from_eigen(rt, d, 16, 4);
  EXPECT_EQ(to_eigen(rt, h).topLeftCorner(100, 100), d);
  const auto entries = to_entries(rt, h);
  EXPECT_EQ(entries.size(), entries_of(d).size());
}

TEST(Identity, SharesDiagonalAndHasSqrtNNorm) {
  Runtime rt;
  HMatrix id = identity(rt, 64, 8, 4);
  EXPECT_EQ(to_eigen(rt, id), Dense::Identity(64, 64));
  EXPECT_DOUBLE_EQ(frobenius_norm(rt, id), 8.0);
  EXPECT_DOUBLE_EQ(nnz_per_row(rt, id), 1.0);
  auto node = rt.get<NodeChunk>(id.root);
  EXPECT_TRUE(node->children[0] == node->children[3]);
  EXPECT_THROW(identity(rt, 48, 8, 4), InvalidInput);
}

TEST(Multiply, NullOperandGivesNull) {
  std::mt19937_64 rng(1);
  Runtime rt;
  HMatrix b = from_eigen(rt, random_dense(rng, 64), 16, 4);
  HMatrix a = b.with_root({});
  EXPECT_TRUE(multiply(rt, a, b).root.is_null());
  EXPECT_TRUE(multiply(rt, b, a).root.is_null());
}

TEST(Multiply, IdentityTimesMatrixIsBitwiseEqual) {
  std::mt19937_64 rng(2);
  Runtime rt;
  const Dense b = random_dense(rng, 128, 0.3);
  HMatrix hb = from_eigen(rt, b, 32, 8);
  HMatrix id = identity(rt, 128, 32, 8);
  EXPECT_EQ(to_eigen(rt, multiply(rt, id, hb)), b);
  EXPECT_EQ(to_eigen(rt, multiply(rt, hb, id)), b);
}

TEST(Multiply, RandomSparseMatchesDense) {
  std::mt19937_64 rng(3);
  Runtime rt;
  const Dense a = random_dense(rng, 256, 0.05);
  const Dense b = random_dense(rng, 256, 0.05);
  HMatrix ha = from_eigen(rt, a, 32, 8);
  HMatrix hb = from_eigen(rt, b, 32, 8);
  EXPECT_LE(max_abs_diff(to_eigen(rt, multiply(rt, ha, hb)), a * b), 1e-12);
  EXPECT_LE(max_abs_diff(to_eigen(rt, multiply(rt, ha, hb, true, false)), a.transpose() * b), 1e-12);
  EXPECT_LE(max_abs_diff(to_eigen(rt, multiply(rt, ha, hb, false, true)), a * b.transpose()), 1e-12);
  EXPECT_LE(max_abs_diff(to_eigen(rt, multiply(rt, ha, hb, true, true)),
                         a.transpose() * b.transpose()),
            1e-12);
}

TEST(Multiply, PropertyUpTo512) {
  std::mt19937_64 rng(4);
  for (int n : {16, 64, 200, 512}) {
    for (double density : {0.02, 0.3}) {
      Runtime rt(rt::RuntimeOptions{.workers = 2});
      const Dense a = random_dense(rng, n, density);
      const Dense b = random_dense(rng, n, density);
      HMatrix ha = from_eigen(rt, a, 64, 8);
      HMatrix hb = from_eigen(rt, b, 64, 8);
      HMatrix p = multiply(rt, ha, hb);
      const Dense expect = padded(a, ha.dim) * padded(b, hb.dim);
      EXPECT_LE(max_abs_diff(to_eigen(rt, p), expect), 1e-12) << "n=" << n;
      EXPECT_TRUE(pruned(rt, p.root, p.dim, p.leaf_dim));
    }
  }
}

TEST(Multiply, ScaledProduct) {
  std::mt19937_64 rng(5);
  Runtime rt;
  const Dense a = random_dense(rng, 64);
  HMatrix ha = from_eigen(rt, a, 16, 4);
  HMatrix p = register_multiply(rt, ha, ha, false, false, 0.0, -0.5);
  rt.execute(p.root);
  EXPECT_LE(max_abs_diff(to_eigen(rt, p), -0.5 * a * a), 1e-12);
}

TEST(Multiply, TruncationErrorBound) {
  std::mt19937_64 rng(6);
  Runtime rt;
  // Entries that decay away from the diagonal give blocks over a wide range of norms.
  Dense a = random_dense(rng, 128);
  for (int i = 0; i < 128; ++i)
    for (int j = 0; j < 128; ++j) a(i, j) *= std::exp(-0.15 * std::abs(i - j));
  HMatrix ha = from_eigen(rt, a, 32, 4);
  const Dense exact = to_eigen(rt, multiply(rt, ha, ha));
  for (double tau : {1e-6, 1e-4, 1e-2}) {
    HMatrix t = multiply(rt, ha, ha, false, false, tau);
    // Blocks of the exact product that are absent after truncation.
    const int bs = 4;
    const Dense got = to_eigen(rt, t);
    int removed = 0;
    for (int bi = 0; bi < 128 / bs; ++bi) {
      for (int bj = 0; bj < 128 / bs; ++bj) {
        const bool had = exact.block(bi * bs, bj * bs, bs, bs).norm() > 0.0;
        const bool has = got.block(bi * bs, bj * bs, bs, bs).norm() > 0.0;
        removed += had && !has;
      }
    }
    EXPECT_GT(removed, 0) << "tau=" << tau;
    EXPECT_LE((exact - got).norm(), tau * std::sqrt(double(removed)) + 1e-15) << "tau=" << tau;
  }
}

TEST(Multiply, ShapeMismatchThrows) {
  Runtime rt;
  HMatrix a = identity(rt, 64, 16, 4);
  HMatrix b = identity(rt, 32, 16, 4);
  HMatrix c = identity(rt, 64, 32, 4);
  EXPECT_THROW(register_multiply(rt, a, b), DimensionMismatch);
  EXPECT_THROW(register_multiply(rt, a, c), DimensionMismatch);
  EXPECT_THROW(register_add(rt, a, b, 1.0, 1.0), DimensionMismatch);
}

TEST(Add, NullSideReturnsOther) {
  std::mt19937_64 rng(7);
  Runtime rt;
  const Dense a = random_dense(rng, 64, 0.4);
  HMatrix ha = from_eigen(rt, a, 16, 4);
  EXPECT_EQ(to_eigen(rt, add_scaled(rt, ha, ha.with_root({}), 1.0, 1.0)), a);
  EXPECT_EQ(to_eigen(rt, add_scaled(rt, ha.with_root({}), ha, 1.0, 1.0)), a);
  EXPECT_EQ(to_eigen(rt, add_scaled(rt, ha, ha.with_root({}), 2.0, 1.0)), 2.0 * a);
}

TEST(Add, CancellationPrunesToNull) {
  std::mt19937_64 rng(8);
  Runtime rt;
  const Dense a = random_dense(rng, 64, 0.4);
  HMatrix ha = from_eigen(rt, a, 16, 4);
  HMatrix hm = from_eigen(rt, -a, 16, 4);
  EXPECT_TRUE(add_scaled(rt, ha, hm, 1.0, 1.0).root.is_null());
  EXPECT_TRUE(add_scaled(rt, ha, ha, 1.0, -1.0).root.is_null());
}

TEST(Add, RandomMatchesDense) {
  std::mt19937_64 rng(9);
  for (int n : {32, 100, 512}) {
    Runtime rt;
    const Dense a = random_dense(rng, n, 0.1);
    const Dense b = random_dense(rng, n, 0.1);
    HMatrix ha = from_eigen(rt, a, 32, 8);
    HMatrix hb = from_eigen(rt, b, 32, 8);
    const int d = ha.dim;
    EXPECT_LE(max_abs_diff(to_eigen(rt, add_scaled(rt, ha, hb, 0.5, -2.0)),
                           0.5 * padded(a, d) - 2.0 * padded(b, d)),
              1e-14);
    HMatrix t = register_add(rt, ha, hb, 1.0, 3.0, true);
    rt.execute(t.root);
    EXPECT_LE(max_abs_diff(to_eigen(rt, t), padded(a, d) + 3.0 * padded(b, d).transpose()), 1e-14);
    EXPECT_TRUE(pruned(rt, t.root, t.dim, t.leaf_dim));
  }
}

TEST(Transpose, Cases) {
  std::mt19937_64 rng(10);
  Runtime rt;
  const Dense a = random_dense(rng, 96, 0.2);
  HMatrix ha = from_eigen(rt, a, 16, 4);
  EXPECT_EQ(to_eigen(rt, transpose(rt, ha)), padded(a, ha.dim).transpose());
  const Dense s = a + a.transpose();
  HMatrix hs = from_eigen(rt, s, 16, 4);
  EXPECT_EQ(to_eigen(rt, transpose(rt, hs)), to_eigen(rt, hs));
  EXPECT_TRUE(transpose(rt, ha.with_root({})).root.is_null());
}

TEST(Truncate, DropsSmallBlocksOnly) {
  Runtime rt;
  Dense d = Dense::Zero(8, 8);
  d(0, 0) = 2e-5;
  d(4, 4) = 5e-6;
  d(0, 5) = 1.0;
  HMatrix h = from_eigen(rt, d, 8, 4);
  const Dense t = to_eigen(rt, truncate(rt, h, 1e-5));
  EXPECT_EQ(t(0, 0), 2e-5);
  EXPECT_EQ(t(4, 4), 0.0);
  EXPECT_EQ(t(0, 5), 1.0);
  EXPECT_TRUE(truncate(rt, h, 10.0).root.is_null());
  EXPECT_THROW(register_truncate(rt, h, -1.0), InvalidInput);
}

TEST(FrobeniusNorm, Cases) {
  std::mt19937_64 rng(11);
  Runtime rt;
  HMatrix id = identity(rt, 128, 32, 8);
  EXPECT_EQ(frobenius_norm(rt, id.with_root({})), 0.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(rt, identity(rt, 256, 32, 8)), 16.0);
  const Dense a = random_dense(rng, 128);
  HMatrix ha = from_eigen(rt, a, 32, 8);
  EXPECT_NEAR(frobenius_norm(rt, ha), a.norm(), 1e-13 * a.norm());
}

TEST(FrobeniusNorm, IndependentOfWorkers) {
  std::mt19937_64 rng(12);
  const Dense a = random_dense(rng, 256, 0.3);
  double first = -1.0;
  for (int w : {1, 2, 4, 8}) {
    Runtime rt(rt::RuntimeOptions{.workers = w});
    HMatrix ha = from_eigen(rt, a, 32, 8);
    const double v = frobenius_norm(rt, ha);
    if (first < 0) first = v;
    EXPECT_EQ(v, first);
  }
}

TEST(Gershgorin, Cases) {
  Runtime rt;
  EXPECT_EQ(gershgorin_upper_bound(rt, identity(rt, 16, 4, 2)), 1.0);
  Dense s(2, 2);
  s << 4, 2, 2, 5;
  EXPECT_EQ(gershgorin_upper_bound(rt, from_eigen(rt, s, 1, 1)), 7.0);
  EXPECT_EQ(gershgorin_upper_bound(rt, from_eigen(rt, s, 4, 2)), 7.0);
}

TEST(Gershgorin, BoundsLargestEigenvalue) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Runtime rt;
    const Dense s = trial % 2 == 0 ? random_spd(rng, 64, 30.0) : random_banded_spd(rng, 64, 5);
    // Leaf 16 puts entries in off-diagonal tiles as well.
    HMatrix h = from_eigen(rt, s, 16, 4);
    EXPECT_GE(gershgorin_upper_bound(rt, h), spectrum(s).lambda_max - 1e-12);
  }
}

TEST(Quadrants, Cases) {
  std::mt19937_64 rng(14);
  Runtime rt;
  Quadrants q = quadrants(rt, identity(rt, 64, 16, 4));
  EXPECT_EQ(to_eigen(rt, q.a), Dense::Identity(32, 32));
  EXPECT_EQ(to_eigen(rt, q.c), Dense::Identity(32, 32));
  EXPECT_TRUE(q.b.root.is_null());
  EXPECT_TRUE(q.bt.root.is_null());

  Dense bd = Dense::Zero(64, 64);
  bd.topLeftCorner(32, 32) = random_dense(rng, 32);
  bd.bottomRightCorner(32, 32) = random_dense(rng, 32);
  q = quadrants(rt, from_eigen(rt, bd, 16, 4));
  EXPECT_TRUE(q.b.root.is_null());
  EXPECT_TRUE(q.bt.root.is_null());

  const Dense r = random_dense(rng, 64);
  q = quadrants(rt, from_eigen(rt, r, 16, 4));
  EXPECT_EQ(to_eigen(rt, q.a), r.topLeftCorner(32, 32));
  EXPECT_EQ(to_eigen(rt, q.b), r.topRightCorner(32, 32));
  EXPECT_EQ(to_eigen(rt, q.bt), r.bottomLeftCorner(32, 32));
  EXPECT_EQ(to_eigen(rt, q.c), r.bottomRightCorner(32, 32));
  EXPECT_EQ(q.a.dim, 32);
}

TEST(Quadrants, RejectsLeafAndNull) {
  Runtime rt;
  EXPECT_THROW(quadrants(rt, identity(rt, 16, 16, 4)), InvalidInput);
  EXPECT_THROW(quadrants(rt, identity(rt, 32, 16, 4).with_root({})), InvalidInput);
}

TEST(Quadrants, JoinRebuildsParent) {
  std::mt19937_64 rng(15);
  Runtime rt;
  const Dense r = random_dense(rng, 64, 0.3);
  HMatrix h = from_eigen(rt, r, 16, 4);
  Quadrants q = quadrants(rt, h);
  HMatrix j = join_quadrants(rt, h, {q.a.root, q.b.root, q.bt.root, q.c.root});
  rt.execute(j.root);
  EXPECT_EQ(to_eigen(rt, j), r);
}

TEST(NnzPerRow, Cases) {
  Runtime rt;
  EXPECT_EQ(nnz_per_row(rt, identity(rt, 32, 8, 4).with_root({})), 0.0);
  HMatrix t = from_eigen(rt, tridiagonal(64), 16, 4);
  EXPECT_DOUBLE_EQ(nnz_per_row(rt, t), 3.0 - 2.0 / 64.0);
  // Padding does not count.
  HMatrix t5 = from_eigen(rt, tridiagonal(5), 4, 2);
  EXPECT_DOUBLE_EQ(nnz_per_row(rt, t5), 13.0 / 5.0);
}

TEST(Densify, NullIsZeroAndCapIsEnforced) {
  Runtime rt;
  HMatrix z = identity(rt, 32, 8, 4).with_root({});
  EXPECT_EQ(to_eigen(rt, z), Dense::Zero(32, 32));
  HMatrix big = identity(rt, 64, 8, 4);
  EXPECT_THROW(densify(rt, big, 32), InvalidInput);
  EXPECT_NO_THROW(densify(rt, big, 64));
}

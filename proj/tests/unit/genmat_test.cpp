#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "dense_oracle.hpp"
#include "qtinv/errors.hpp"
#include "qtinv/genmat.hpp"

using namespace qtinv;
using namespace qtinv::testing;
using rt::Runtime;

namespace {

Dense dense_of(const CoordinateMatrix& m) {
  Dense d = Dense::Zero(m.n, m.n);
  for (const auto& e : m.entries) d(e.row, e.col) += e.value;
  return d;
}

GenSpec single_function(int centers) {
  GenSpec s;
  s.n_centers = centers;
  s.funcs_per_center = 1;
  return s;
}

double nnz_per_row(const CoordinateMatrix& m) { return double(m.entries.size()) / m.n; }

}  // namespace

TEST(Geometry, ParseAndPrint) {
  EXPECT_EQ(parse_geometry("chain"), Geometry::chain);
  EXPECT_EQ(parse_geometry("cluster3d"), Geometry::cluster3d);
  EXPECT_EQ(to_string(Geometry::cluster3d), "cluster3d");
  EXPECT_THROW(parse_geometry("torus"), InvalidInput);
}

TEST(GenSpec, OrderRoundsUp) {
  GenSpec s;
  s.funcs_per_center = 4;
  s.set_order(1000);
  EXPECT_EQ(s.n_centers, 250);
  s.set_order(1001);
  EXPECT_EQ(s.order(), 1004);
}

TEST(Generate, SingleCenter) {
  GenSpec s = single_function(1);
  s.shift = 0.25;
  const CoordinateMatrix m = generate_entries(s);
  ASSERT_EQ(m.n, 1);
  ASSERT_EQ(m.entries.size(), 1u);
  EXPECT_EQ(m.entries[0].value, 1.25);
}

TEST(Generate, ChainPairOverlap) {
  for (double d : {0.5, 1.0, 2.0}) {
    GenSpec s = single_function(2);
    s.spacing = d;
    s.alpha = 0.7;
    const Dense m = dense_of(generate_entries(s));
    EXPECT_NEAR(m(0, 1), std::exp(-0.7 * d * d), 1e-15);
    EXPECT_EQ(m(0, 1), m(1, 0));
    EXPECT_EQ(m(0, 0), 1.0 + s.shift);
  }
}

TEST(Generate, SeveralFunctionsPerCenter) {
  GenSpec s;
  s.n_centers = 3;
  s.funcs_per_center = 3;
  const Dense m = dense_of(generate_entries(s));
  ASSERT_EQ(m.rows(), 9);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(m(i, i), 1.0 + s.shift);
  // Functions on the same center overlap but less than 1.
  EXPECT_GT(m(0, 1), 0.0);
  EXPECT_LT(m(0, 1), 1.0);
  // The most diffuse pair on neighbouring centers.
  EXPECT_NEAR(m(0, 3), std::exp(-s.alpha * s.spacing * s.spacing), 1e-15);
}

TEST(Generate, SymmetricPositiveDefinite) {
  for (Geometry g : {Geometry::chain, Geometry::cluster3d}) {
    for (int n : {16, 128, 512}) {
      GenSpec s;
      s.geometry = g;
      s.set_order(n);
      const Dense m = dense_of(generate_entries(s));
      EXPECT_EQ(m, m.transpose()) << to_string(g) << " n=" << n;
      EXPECT_GT(spectrum(m).lambda_min, 0.0) << to_string(g) << " n=" << n;
    }
  }
}

TEST(Generate, Deterministic) {
  GenSpec s;
  s.geometry = Geometry::cluster3d;
  s.n_centers = 200;
  s.seed = 9;
  const CoordinateMatrix a = generate_entries(s);
  const CoordinateMatrix b = generate_entries(s);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].row, b.entries[i].row);
    EXPECT_EQ(a.entries[i].col, b.entries[i].col);
    EXPECT_EQ(a.entries[i].value, b.entries[i].value);
  }
  s.seed = 10;
  const CoordinateMatrix c = generate_entries(s);
  bool differs = c.entries.size() != a.entries.size();
  for (std::size_t i = 0; !differs && i < a.entries.size(); ++i) differs = a.entries[i].value != c.entries[i].value;
  EXPECT_TRUE(differs);
}

TEST(Generate, ChainBandwidthIsConstant) {
  GenSpec s;
  s.set_order(2048);
  const double a = nnz_per_row(generate_entries(s));
  s.set_order(4096);
  const double b = nnz_per_row(generate_entries(s));
  EXPECT_LE(std::abs(a - b) / b, 0.01);
  EXPECT_LT(b, 200.0);
}

TEST(Generate, ClusterCentersAreDistinctAndCompact) {
  GenSpec s;
  s.geometry = Geometry::cluster3d;
  s.n_centers = 500;
  const auto pts = generate_centers(s);
  ASSERT_EQ(pts.size(), 500u);
  double rmax = 0.0;
  for (const auto& p : pts) rmax = std::max(rmax, std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z));
  // A ball of 500 unit cells has radius about 4.9.
  EXPECT_LT(rmax, 7.0);
}

TEST(Generate, AggressiveCutoffIsRejectedWithCertificate) {
  GenSpec s;
  s.n_centers = 64;
  s.cutoff = 0.3;
  s.shift = 0.01;
  try {
    generate_entries(s);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row"), std::string::npos) << msg;
    EXPECT_NE(msg.find("shift"), std::string::npos) << msg;
  }
}

TEST(Generate, InvalidSpecs) {
  GenSpec s;
  s.n_centers = 0;
  EXPECT_THROW(generate_entries(s), InvalidInput);
  s = GenSpec{};
  s.alpha = -1.0;
  EXPECT_THROW(generate_entries(s), InvalidInput);
  s = GenSpec{};
  s.cutoff = 0.0;
  EXPECT_THROW(generate_entries(s), InvalidInput);
}

TEST(Generate, TreeMatchesEntries) {
  GenSpec s;
  s.set_order(300);
  Runtime rt;
  HMatrix h = generate(rt, s, {64, 8});
  EXPECT_EQ(h.logical_dim, 300);
  EXPECT_EQ(h.dim, 512);
  EXPECT_EQ(to_eigen(rt, h), padded(dense_of(generate_entries(s)), 512));
}

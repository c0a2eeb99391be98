#pragma once

// Synthetic overlap matrices of s-type Gaussians placed on a line or in a ball.
//
// Center i carries funcs_per_center functions exp(-e_k |r - r_i|^2) with
// e_k = 2 alpha ratio^k. Two functions overlap by
//   (2 sqrt(e_p e_q) / (e_p + e_q))^{3/2} exp(-e_p e_q / (e_p + e_q) d^2),
// which is exp(-alpha d^2) for a pair of the most diffuse functions. Overlaps
// below the cutoff are dropped and the diagonal is 1 + shift.

#include <cstdint>
#include <string>
#include <vector>

#include "qtinv/quadtree.hpp"

namespace qtinv {

enum class Geometry { chain, cluster3d };

Geometry parse_geometry(const std::string& name);
std::string to_string(Geometry g);

struct GenSpec {
  Geometry geometry = Geometry::chain;
  int n_centers = 1024;
  /// Distance between neighbouring centers on the chain.
  double spacing = 1.0;
  /// Centers per unit volume in the cluster.
  double density = 1.0;
  int funcs_per_center = 4;
  double alpha = 0.3;
  /// Ratio between successive exponents on one center.
  double exponent_ratio = 3.0;
  double cutoff = 1e-8;
  double shift = 0.1;
  /// Cluster jitter as a fraction of the lattice spacing.
  double jitter = 0.1;
  std::uint64_t seed = 1;

  int order() const noexcept { return n_centers * funcs_per_center; }
  /// Enough centers for at least n basis functions.
  void set_order(int n) { n_centers = (n + funcs_per_center - 1) / funcs_per_center; }
};

struct CoordinateMatrix {
  int n = 0;
  /// Both triangles, row-major order.
  std::vector<Entry> entries;
};

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

/// Center positions in basis order (Morton order for clusters).
std::vector<Point3> generate_centers(const GenSpec& spec);

/// Throws InvalidInput for an invalid spec, or when the dropped overlaps can
/// no longer be shown to leave the matrix positive definite (the message
/// carries the offending row and its bound).
CoordinateMatrix generate_entries(const GenSpec& spec);

HMatrix generate(rt::Scope& scope, const GenSpec& spec, const TreeOptions& opts);

}  // namespace qtinv

#pragma once

// Dense reference helpers for tests: Eigen copies of quad-tree matrices and
// random inputs.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "qtinv/leaf_matrix.hpp"
#include "qtinv/quadtree.hpp"
#include "qtinv/task_runtime.hpp"

namespace qtinv::testing {

using Dense = Eigen::MatrixXd;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Dense to_eigen(const LeafMatrix& m) {
  const std::vector<double> v = m.to_dense();
  return Eigen::Map<const RowMajor>(v.data(), m.dim(), m.dim());
}

inline Dense to_eigen(const rt::Runtime& runtime, const HMatrix& h) {
  const std::vector<double> v = densify(runtime, h);
  return Eigen::Map<const RowMajor>(v.data(), h.dim, h.dim);
}

inline LeafMatrix leaf_from_eigen(const Dense& d, int blocksize) {
  const RowMajor r = d;
  return LeafMatrix::from_dense(static_cast<int>(d.rows()), blocksize,
                                std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
}

inline std::vector<Entry> entries_of(const Dense& d) {
  std::vector<Entry> out;
  for (int i = 0; i < d.rows(); ++i) {
    for (int j = 0; j < d.cols(); ++j) {
      if (d(i, j) != 0.0) out.push_back({i, j, d(i, j)});
    }
  }
  return out;
}

inline HMatrix from_eigen(rt::Scope& scope, const Dense& d, int leaf_dim, int blocksize) {
  return assemble(scope, entries_of(d), static_cast<int>(d.rows()), {leaf_dim, blocksize});
}

/// Pads with identity to the order of `h`.
inline Dense padded(const Dense& d, int dim) {
  Dense out = Dense::Identity(dim, dim);
  out.topLeftCorner(d.rows(), d.cols()) = d;
  return out;
}

inline Dense random_dense(std::mt19937_64& rng, int n, double density = 1.0) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dense d = Dense::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (unit(rng) < density) d(i, j) = normal(rng);
    }
  }
  return d;
}

/// Random SPD matrix with eigenvalues spread over [1, cond].
inline Dense random_spd(std::mt19937_64& rng, int n, double cond = 50.0) {
  const Dense g = random_dense(rng, n);
  Eigen::HouseholderQR<Dense> qr(g);
  const Dense q = qr.householderQ();
  Eigen::VectorXd ev(n);
  for (int i = 0; i < n; ++i) ev(i) = n == 1 ? 1.0 : std::pow(cond, double(i) / (n - 1));
  Dense s = q * ev.asDiagonal() * q.transpose();
  return (s + s.transpose()) / 2.0;
}

/// Random SPD matrix whose entries decay away from the diagonal.
inline Dense random_banded_spd(std::mt19937_64& rng, int n, int bandwidth, double shift = 0.5) {
  std::normal_distribution<double> normal;
  Dense a = Dense::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = std::max(0, i - bandwidth); j <= std::min(n - 1, i + bandwidth); ++j) {
      a(i, j) = normal(rng) / (1.0 + std::abs(i - j));
    }
  }
  Dense s = a * a.transpose() / bandwidth + shift * Dense::Identity(n, n);
  return (s + s.transpose()) / 2.0;
}

/// Transposed inverse of the lower Cholesky factor.
inline Dense inverse_cholesky(const Dense& s) {
  const Dense l = s.llt().matrixL();
  return l.triangularView<Eigen::Lower>().solve(Dense::Identity(s.rows(), s.cols())).transpose();
}

struct Spectrum {
  double lambda_min;
  double lambda_max;
};

inline Spectrum spectrum(const Dense& s) {
  Eigen::SelfAdjointEigenSolver<Dense> es(s, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

inline double spectral_norm_symmetric(const Dense& d) {
  Eigen::SelfAdjointEigenSolver<Dense> es((d + d.transpose()) / 2.0, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace qtinv::testing

#pragma once

// Critical path length models for the recursive factorizations.
//
// With N = 2^L and a per-level cost C(N) the recursions read
//   Psi(N) = C(N) + q Psi(N/2),  Psi(1) = 1,
// with q = 2 for the inverse Cholesky recursion (the two recursive calls are
// serial) and q = 1 for localized factorization (they run side by side).
// When C(N) = c1 L^2 + c2 L + c3 both have closed forms.

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace qtinv {

enum class CplForm { recursion, closed };

struct CplModel {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  /// Serial recursive calls per level.
  int q = 2;

  static CplModel rinch(double c1, double c2, double c3) { return {c1, c2, c3, 2}; }
  static CplModel lif(double c1, double c2, double c3) { return {c1, c2, c3, 1}; }

  /// c1 log2(N)^2 + c2 log2(N) + c3.
  double level_cost(std::uint64_t n) const;
};

/// log2 of a power of two; throws InvalidInput otherwise.
int exact_log2(std::uint64_t n);

using LevelCost = std::function<double(std::uint64_t)>;

/// Psi(N) = cost(N) + q Psi(N/2), Psi(1) = 1.
double cpl_recursion(std::uint64_t n, const LevelCost& cost, int q);

/// Requires model.q == 2.
double rinch_cpl(std::uint64_t n, const CplModel& model, CplForm form);
/// Requires model.q == 1.
double lif_cpl(std::uint64_t n, const CplModel& model, CplForm form);

/// Critical path of one matrix-matrix multiplication of order N.
using XiFn = std::function<double(std::uint64_t)>;

/// Tree traversal such as an addition: log2(N) + 1.
double traversal_cpl(std::uint64_t n);

/// Level cost of the inverse Cholesky recursion: 3 xi(N/2) + 3 (log2(N/2) + 1).
double rinch_level_cost(std::uint64_t n, const XiFn& xi);

/// Level cost of localized factorization with kmax refinement steps:
/// kmax ((m+2) xi(N) + (2m+3)(log2 N + 1)) + 2 xi(N/2) + 2 log2 N + 1.
double lif_level_cost(std::uint64_t n, const XiFn& xi, int kmax, int m);

struct LogFit {
  /// c0 + c1 log2 N + c2 log2^2 N + c3 log2^3 N.
  double c0 = 0.0, c1 = 0.0, c2 = 0.0, c3 = 0.0;
  /// Root mean square of the residuals.
  double residual = 0.0;

  double operator()(double n) const;
};

/// Least-squares fit of (N, value) points. Needs at least 4 distinct N.
LogFit fit_log_polynomial(std::span<const std::pair<double, double>> points);

}  // namespace qtinv

#pragma once

// Inverse factorization of symmetric positive definite quad-tree matrices.
//
//   rinch  recursive inverse Cholesky; Z is upper triangular.
//   irsi   iterative refinement started from a scaled identity; Z -> S^{-1/2}.
//   lif    localized inverse factorization: factor the two diagonal blocks
//          independently, glue them with localized refinement.
//
// Every algorithm is a task graph; the register_* variants only build it.

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qtinv/quadtree.hpp"
#include "qtinv/task_runtime.hpp"

namespace qtinv {

enum class RefinementMode { regular, localized };

struct RefinementParams {
  int m = 4;
  double tau = 1e-5;
  int max_iters = 100;
  RefinementMode mode = RefinementMode::localized;
  /// Replace delta by (delta + delta^T) / 2 once per iteration when tau > 0.
  bool symmetrize = true;

  /// b_0 .. b_m.
  std::vector<double> coefficients() const;
};

/// Taylor coefficients of (1 - x)^{-1/2}: b_0 = 1, b_k = (2k - 1) / (2k) * b_{k-1}.
std::vector<double> refinement_coefficients(int m);

struct ScalingEstimate {
  double beta = 0.0;
  double c = 0.0;
};

/// beta from the Gershgorin bound, c = sqrt(2 / beta). Throws InvalidInput if beta <= 0.
ScalingEstimate scaling_guess(const rt::Runtime& runtime, const HMatrix& s);

/// One refinement loop, as seen from the outside.
struct RefinementRecord {
  int dim = 0;
  int offset = 0;
  /// Refinement steps taken.
  int iterations = 0;
  /// ||delta_i||_F for every iterate that was formed, starting with delta_0.
  std::vector<double> errors;
};

/// Collects RefinementRecords from tasks; safe to share between workers.
class RefinementLog {
 public:
  void add(RefinementRecord rec);
  /// Sorted by descending dim, then offset.
  std::vector<RefinementRecord> records() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<RefinementRecord> records_;
};

struct FactorizationReport {
  std::string algorithm;
  HMatrix z;
  /// ||I - Z^T S Z||_F on the padded system, evaluated without truncation.
  double err_frobenius = 0.0;
  /// Top-level refinement steps for lif, all steps for irsi, 0 for rinch.
  int iterations = 0;
  std::vector<RefinementRecord> refinements;
  rt::RunStats stats;
  double nnz_per_row = 0.0;
  std::optional<ScalingEstimate> scaling;
  /// Task trace of the factorization when the runtime records traces.
  rt::Trace trace;
};

// Graph builders.

/// offset is the global row of s(0, 0); it only shows up in error messages.
HMatrix register_rinch(rt::Scope& scope, const HMatrix& s, double tau, int offset = 0);

struct RefineOutput {
  HMatrix z;
  HMatrix delta;
};

/// One step from (Z, delta). Localized mode needs only S; regular mode
/// recomputes delta = I - Z'^T S Z' and builds its own identity.
RefineOutput register_refine_step(rt::Scope& scope, const HMatrix& z, const HMatrix& s,
                                  const HMatrix& delta, const RefinementParams& params);

/// Refinement loop driven by recursive task registration: each iteration is a
/// task that checks the stopping rule and registers its successor.
HMatrix register_refinement(rt::Scope& scope, const HMatrix& s, const HMatrix& z0,
                            const HMatrix& delta0, const RefinementParams& params,
                            std::shared_ptr<RefinementLog> log, int offset = 0);

/// delta_0 = -[0, X; X^T, 0] with X = Zl^T B Zr. The result has twice the order of B.
HMatrix register_build_delta0(rt::Scope& scope, const HMatrix& zl, const HMatrix& zr,
                              const HMatrix& b, double tau);

HMatrix register_irsi(rt::Scope& scope, const HMatrix& s, double c, const RefinementParams& params,
                      std::shared_ptr<RefinementLog> log);

HMatrix register_lif(rt::Scope& scope, const HMatrix& s, const RefinementParams& params,
                     int switch_dim, std::shared_ptr<RefinementLog> log, int offset = 0);

// Drivers: build, execute, and measure.

FactorizationReport rinch(rt::Runtime& runtime, const HMatrix& s, const RefinementParams& params);

/// With c unset the Gershgorin guess is used; its cost is not part of the
/// reported statistics.
FactorizationReport irsi(rt::Runtime& runtime, const HMatrix& s, const RefinementParams& params,
                         std::optional<double> c = std::nullopt);

inline constexpr int kDefaultSwitchDim = 1024;

FactorizationReport lif(rt::Runtime& runtime, const HMatrix& s, const RefinementParams& params,
                        int switch_dim = kDefaultSwitchDim);

/// Executes one refinement step from the main program.
RefineOutput refine_step(rt::Runtime& runtime, const HMatrix& z, const HMatrix& s,
                         const HMatrix& delta, const RefinementParams& params);

HMatrix build_delta0(rt::Runtime& runtime, const HMatrix& zl, const HMatrix& zr, const HMatrix& b,
                     double tau = 0.0);

/// ||I - Z^T S Z||_F, computed without truncation.
double factorization_error(rt::Runtime& runtime, const HMatrix& s, const HMatrix& z);

/// Upper bound on refinement steps needed to bring the error below eps.
int kmax_bound(double lambda_min, double lambda_max, double eps, int m);

}  // namespace qtinv

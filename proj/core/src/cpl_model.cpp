#include "qtinv/cpl_model.hpp"

#include <bit>
#include <cmath>
#include <set>
#include <string>

#include <Eigen/Dense>

#include "qtinv/errors.hpp"

namespace qtinv {

int exact_log2(std::uint64_t n) {
  if (n == 0 || !std::has_single_bit(n)) {
    throw InvalidInput("matrix order " + std::to_string(n) + " is not a power of two");
  }
  return std::countr_zero(n);
}

double CplModel::level_cost(std::uint64_t n) const {
  const double l = exact_log2(n);
  return c1 * l * l + c2 * l + c3;
}

double cpl_recursion(std::uint64_t n, const LevelCost& cost, int q) {
  const int levels = exact_log2(n);
  // Unrolled from the bottom so deep trees do not recurse.
  double psi = 1.0;
  for (int l = 1; l <= levels; ++l) psi = cost(std::uint64_t{1} << l) + q * psi;
  return psi;
}

double rinch_cpl(std::uint64_t n, const CplModel& model, CplForm form) {
  if (model.q != 2) throw InvalidInput("rinch_cpl needs q = 2");
  if (form == CplForm::recursion) {
    return cpl_recursion(n, [&](std::uint64_t k) { return model.level_cost(k); }, 2);
  }
  const double l = exact_log2(n);
  const double big_n = static_cast<double>(n);
  const auto [c1, c2, c3, q] = model;
  return (1.0 + 6.0 * c1 + 2.0 * c2 + c3) * big_n - c1 * l * l - (4.0 * c1 + c2) * l - 6.0 * c1 -
         2.0 * c2 - c3;
}

double lif_cpl(std::uint64_t n, const CplModel& model, CplForm form) {
  if (model.q != 1) throw InvalidInput("lif_cpl needs q = 1");
  if (form == CplForm::recursion) {
    return cpl_recursion(n, [&](std::uint64_t k) { return model.level_cost(k); }, 1);
  }
  const double l = exact_log2(n);
  const auto [c1, c2, c3, q] = model;
  return c1 * (l * l * l / 3.0 + l * l / 2.0 + l / 6.0) + c2 * (l * l + l) / 2.0 + c3 * l + 1.0;
}

double traversal_cpl(std::uint64_t n) { return exact_log2(n) + 1.0; }

double rinch_level_cost(std::uint64_t n, const XiFn& xi) {
  return 3.0 * xi(n / 2) + 3.0 * traversal_cpl(n / 2);
}

double lif_level_cost(std::uint64_t n, const XiFn& xi, int kmax, int m) {
  const double l = exact_log2(n);
  return kmax * ((m + 2) * xi(n) + (2 * m + 3) * (l + 1.0)) + 2.0 * xi(n / 2) + 2.0 * l + 1.0;
}

double LogFit::operator()(double n) const {
  const double l = std::log2(n);
  return c0 + l * (c1 + l * (c2 + l * c3));
}

LogFit fit_log_polynomial(std::span<const std::pair<double, double>> points) {
  std::set<double> distinct;
  for (const auto& [n, v] : points) {
    if (!(n > 0.0)) throw InvalidInput("fit points need N > 0");
    distinct.insert(n);
  }
  if (distinct.size() < 4) {
    throw InvalidInput("log-polynomial fit needs at least 4 distinct N, got " + std::to_string(distinct.size()));
  }
  const auto rows = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd a(rows, 4);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double l = std::log2(points[static_cast<std::size_t>(i)].first);
    a(i, 0) = 1.0;
    a(i, 1) = l;
    a(i, 2) = l * l;
    a(i, 3) = l * l * l;
    y(i) = points[static_cast<std::size_t>(i)].second;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 4) throw InvalidInput("log-polynomial design matrix is rank deficient");
  const Eigen::VectorXd c = qr.solve(y);
  LogFit fit{c(0), c(1), c(2), c(3), 0.0};
  fit.residual = std::sqrt((a * c - y).squaredNorm() / static_cast<double>(rows));
  return fit;
}

}  // namespace qtinv

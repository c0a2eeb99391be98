#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "qtinv/errors.hpp"
#include "qtinv/genmat.hpp"
#include "qtinv/quadtree.hpp"

namespace qtinv {

class MatrixMarketError : public InvalidInput {
 public:
  MatrixMarketError(std::size_t line, const std::string& what);
  /// 1-based line number, 0 when the problem is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Coordinate real matrices. Symmetric matrices are written as their lower
/// triangle with a "symmetric" header; values use 17 significant digits.
void write_matrix_market(std::ostream& out, const CoordinateMatrix& m);
/// Symmetric files are expanded to both triangles.
CoordinateMatrix read_matrix_market(std::istream& in);

void save_mm(const rt::Runtime& runtime, const HMatrix& a, const std::string& path);
CoordinateMatrix load_mm(const std::string& path);
HMatrix load_mm(rt::Scope& scope, const std::string& path, const TreeOptions& opts);

}  // namespace qtinv

#include "qtinv/matrix_market.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

namespace qtinv {

MatrixMarketError::MatrixMarketError(std::size_t line, const std::string& what)
    : InvalidInput(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

bool is_symmetric(const std::vector<Entry>& entries) {
  std::map<std::pair<int, int>, double> vals;
  for (const auto& e : entries) vals[{e.row, e.col}] += e.value;
  for (const auto& [rc, v] : vals) {
    auto it = vals.find({rc.second, rc.first});
    if (it == vals.end() || it->second != v) return false;
  }
  return true;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

void write_matrix_market(std::ostream& out, const CoordinateMatrix& m) {
  const bool sym = is_symmetric(m.entries);
  std::vector<Entry> kept;
  for (const auto& e : m.entries) {
    if (!sym || e.row >= e.col) kept.push_back(e);
  }
  out << "%%MatrixMarket matrix coordinate real " << (sym ? "symmetric" : "general") << '\n';
  out << m.n << ' ' << m.n << ' ' << kept.size() << '\n';
  char buf[64];
  for (const auto& e : kept) {
    std::snprintf(buf, sizeof buf, "%.17g", e.value);
    out << e.row + 1 << ' ' << e.col + 1 << ' ' << buf << '\n';
  }
}

CoordinateMatrix read_matrix_market(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw MatrixMarketError(1, "empty input");
  ++lineno;
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket") throw MatrixMarketError(lineno, "missing %%MatrixMarket banner");
  object = lower(object);
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (object != "matrix" || format != "coordinate") {
    throw MatrixMarketError(lineno, "only 'matrix coordinate' files are supported");
  }
  if (field != "real" && field != "integer" && field != "double") {
    throw MatrixMarketError(lineno, "unsupported field '" + field + "'");
  }
  if (symmetry != "general" && symmetry != "symmetric") {
    throw MatrixMarketError(lineno, "unsupported symmetry '" + symmetry + "'");
  }
  const bool sym = symmetry == "symmetric";

  long long rows = -1, cols = -1, nnz = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream size(line);
    if (!(size >> rows >> cols >> nnz)) throw MatrixMarketError(lineno, "malformed size line");
    break;
  }
  if (rows < 0) throw MatrixMarketError(lineno, "missing size line");
  if (rows != cols) throw MatrixMarketError(lineno, "matrix is not square");
  if (rows < 1 || rows > (1LL << 30) || nnz < 0) throw MatrixMarketError(lineno, "invalid dimensions");

  CoordinateMatrix m;
  m.n = static_cast<int>(rows);
  long long read = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    long long i = 0, j = 0;
    double v = 0.0;
    if (!(row >> i >> j >> v)) throw MatrixMarketError(lineno, "malformed entry");
    if (i < 1 || j < 1 || i > rows || j > cols) throw MatrixMarketError(lineno, "index out of range");
    if (sym && j > i) throw MatrixMarketError(lineno, "symmetric file stores an upper-triangle entry");
    if (++read > nnz) throw MatrixMarketError(lineno, "more entries than declared");
    m.entries.push_back({static_cast<int>(i - 1), static_cast<int>(j - 1), v});
    if (sym && i != j) m.entries.push_back({static_cast<int>(j - 1), static_cast<int>(i - 1), v});
  }
  if (read != nnz) {
    throw MatrixMarketError(lineno, "expected " + std::to_string(nnz) + " entries, found " + std::to_string(read));
  }
  std::sort(m.entries.begin(), m.entries.end(), [](const Entry& a, const Entry& b) {
    return std::pair(a.row, a.col) < std::pair(b.row, b.col);
  });
  return m;
}

void save_mm(const rt::Runtime& runtime, const HMatrix& a, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  write_matrix_market(out, {a.logical_dim, to_entries(runtime, a)});
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

CoordinateMatrix load_mm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return read_matrix_market(in);
}

HMatrix load_mm(rt::Scope& scope, const std::string& path, const TreeOptions& opts) {
  CoordinateMatrix m = load_mm(path);
  return assemble(scope, std::move(m.entries), m.n, opts);
}

}  // namespace qtinv

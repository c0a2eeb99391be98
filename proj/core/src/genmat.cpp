#include "qtinv/genmat.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

#include "qtinv/errors.hpp"

namespace qtinv {

Geometry parse_geometry(const std::string& name) {
  if (name == "chain") return Geometry::chain;
  if (name == "cluster3d" || name == "cluster") return Geometry::cluster3d;
  throw InvalidInput("unknown geometry '" + name + "' (expected chain or cluster3d)");
}

std::string to_string(Geometry g) { return g == Geometry::chain ? "chain" : "cluster3d"; }

namespace {

void validate(const GenSpec& s) {
  auto fail = [](const std::string& what) { throw InvalidInput("invalid generator spec: " + what); };
  if (s.n_centers < 1) fail("n_centers must be positive");
  if (s.funcs_per_center < 1) fail("funcs_per_center must be positive");
  if (!(s.alpha > 0.0)) fail("alpha must be positive");
  if (!(s.exponent_ratio >= 1.0)) fail("exponent_ratio must be >= 1");
  if (!(s.cutoff > 0.0 && s.cutoff < 1.0)) fail("cutoff must lie in (0, 1)");
  if (!(s.shift >= 0.0)) fail("shift must be nonnegative");
  if (s.geometry == Geometry::chain && !(s.spacing > 0.0)) fail("spacing must be positive");
  if (s.geometry == Geometry::cluster3d && !(s.density > 0.0)) fail("density must be positive");
  if (static_cast<long long>(s.n_centers) * s.funcs_per_center > (1LL << 30)) fail("matrix too large");
}

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t spread_bits(std::uint64_t v) {
  v &= 0x1fffff;
  v = (v | v << 32) & 0x1f00000000ffffULL;
  v = (v | v << 16) & 0x1f0000ff0000ffULL;
  v = (v | v << 8) & 0x100f00f00f00f00fULL;
  v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
  v = (v | v << 2) & 0x1249249249249249ULL;
  return v;
}

std::vector<Point3> cluster_centers(const GenSpec& spec) {
  const double a = std::cbrt(1.0 / spec.density);
  const double want = spec.n_centers;
  double radius = std::cbrt(3.0 * want / (4.0 * std::numbers::pi * spec.density)) + 2.0 * a;
  std::vector<std::tuple<double, int, int, int>> lattice;
  for (;;) {
    lattice.clear();
    const int k = static_cast<int>(std::ceil(radius / a));
    for (int i = -k; i <= k; ++i) {
      for (int j = -k; j <= k; ++j) {
        for (int l = -k; l <= k; ++l) {
          const double r2 = a * a * (double(i) * i + double(j) * j + double(l) * l);
          if (r2 <= radius * radius) lattice.emplace_back(r2, i, j, l);
        }
      }
    }
    if (lattice.size() >= static_cast<std::size_t>(spec.n_centers)) break;
    radius *= 1.25;
  }
  // Nearest lattice points to the origin; ties broken by lattice coordinates.
  std::sort(lattice.begin(), lattice.end());
  lattice.resize(static_cast<std::size_t>(spec.n_centers));

  std::mt19937_64 rng(spec.seed);
  std::vector<Point3> pts;
  pts.reserve(lattice.size());
  for (const auto& [r2, i, j, l] : lattice) {
    Point3 p{a * i, a * j, a * l};
    p.x += (2.0 * unit(rng) - 1.0) * spec.jitter * a;
    p.y += (2.0 * unit(rng) - 1.0) * spec.jitter * a;
    p.z += (2.0 * unit(rng) - 1.0) * spec.jitter * a;
    pts.push_back(p);
  }

  double lo = 0.0, hi = 0.0;
  for (const auto& p : pts) {
    lo = std::min({lo, p.x, p.y, p.z});
    hi = std::max({hi, p.x, p.y, p.z});
  }
  const double scale = hi > lo ? static_cast<double>(0x1fffff) / (hi - lo) : 0.0;
  auto key = [&](const Point3& p) {
    auto q = [&](double v) { return static_cast<std::uint64_t>((v - lo) * scale); };
    return spread_bits(q(p.x)) | spread_bits(q(p.y)) << 1 | spread_bits(q(p.z)) << 2;
  };
  std::stable_sort(pts.begin(), pts.end(),
                   [&](const Point3& p, const Point3& q) { return key(p) < key(q); });
  return pts;
}

}  // namespace

std::vector<Point3> generate_centers(const GenSpec& spec) {
  validate(spec);
  if (spec.geometry == Geometry::chain) {
    std::vector<Point3> pts(static_cast<std::size_t>(spec.n_centers));
    for (int i = 0; i < spec.n_centers; ++i) pts[static_cast<std::size_t>(i)].x = spec.spacing * i;
    return pts;
  }
  return cluster_centers(spec);
}

CoordinateMatrix generate_entries(const GenSpec& spec) {
  const std::vector<Point3> centers = generate_centers(spec);
  const int nf = spec.funcs_per_center;
  const int n = spec.order();

  std::vector<double> exps(static_cast<std::size_t>(nf));
  for (int k = 0; k < nf; ++k) exps[static_cast<std::size_t>(k)] = 2.0 * spec.alpha * std::pow(spec.exponent_ratio, k);

  // Beyond rc even the most diffuse pair overlaps by less than the cutoff.
  const double rc = std::sqrt(std::log(1.0 / spec.cutoff) / spec.alpha);
  using Cell = std::tuple<long, long, long>;
  auto cell_of = [rc](const Point3& p) {
    return Cell{static_cast<long>(std::floor(p.x / rc)), static_cast<long>(std::floor(p.y / rc)),
                static_cast<long>(std::floor(p.z / rc))};
  };
  std::map<Cell, std::vector<int>> cells;
  for (int i = 0; i < static_cast<int>(centers.size()); ++i) {
    cells[cell_of(centers[static_cast<std::size_t>(i)])].push_back(i);
  }

  CoordinateMatrix out;
  out.n = n;
  std::vector<double> dropped(static_cast<std::size_t>(n), 0.0);
  std::vector<long long> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> near;
  for (int ci = 0; ci < static_cast<int>(centers.size()); ++ci) {
    const Point3& p = centers[static_cast<std::size_t>(ci)];
    const auto [cx, cy, cz] = cell_of(p);
    near.clear();
    for (long dx = -1; dx <= 1; ++dx) {
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dz = -1; dz <= 1; ++dz) {
          auto it = cells.find({cx + dx, cy + dy, cz + dz});
          if (it != cells.end()) near.insert(near.end(), it->second.begin(), it->second.end());
        }
      }
    }
    std::sort(near.begin(), near.end());
    for (int k = 0; k < nf; ++k) {
      const int row = ci * nf + k;
      const double ek = exps[static_cast<std::size_t>(k)];
      for (int cj : near) {
        const Point3& q = centers[static_cast<std::size_t>(cj)];
        const double d2 = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z);
        for (int l = 0; l < nf; ++l) {
          const int col = cj * nf + l;
          ++seen[static_cast<std::size_t>(row)];
          if (col == row) {
            out.entries.push_back({row, col, 1.0 + spec.shift});
            continue;
          }
          const double el = exps[static_cast<std::size_t>(l)];
          const double pre = std::pow(2.0 * std::sqrt(ek * el) / (ek + el), 1.5);
          const double v = pre * std::exp(-ek * el / (ek + el) * d2);
          if (v >= spec.cutoff) {
            out.entries.push_back({row, col, v});
          } else {
            dropped[static_cast<std::size_t>(row)] += v;
          }
        }
      }
    }
  }

  // The kept matrix is K + shift I - D with K a Gram matrix (positive
  // semidefinite); it stays positive definite while ||D||_inf < shift.
  for (int row = 0; row < n; ++row) {
    const auto r = static_cast<std::size_t>(row);
    const double unseen = static_cast<double>(n - seen[r]);
    const double bound = dropped[r] + unseen * spec.cutoff;
    if (bound > 0.0 && bound >= spec.shift) {
      std::ostringstream msg;
      msg << "cutoff " << spec.cutoff << " may leave the matrix indefinite: row " << row
          << " drops overlaps summing up to " << bound << " >= shift " << spec.shift;
      throw InvalidInput(msg.str());
    }
  }

  std::sort(out.entries.begin(), out.entries.end(), [](const Entry& a, const Entry& b) {
    return std::pair(a.row, a.col) < std::pair(b.row, b.col);
  });
  return out;
}

HMatrix generate(rt::Scope& scope, const GenSpec& spec, const TreeOptions& opts) {
  CoordinateMatrix m = generate_entries(spec);
  return assemble(scope, std::move(m.entries), m.n, opts);
}

}  // namespace qtinv

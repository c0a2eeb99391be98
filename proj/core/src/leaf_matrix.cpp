#include "qtinv/leaf_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qtinv/errors.hpp"

namespace qtinv {

namespace {

bool all_zero(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

double sum_squares(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

void check_same_shape(const LeafMatrix& a, const LeafMatrix& b, const char* op) {
  if (a.dim() != b.dim() || a.blocksize() != b.blocksize()) {
    throw DimensionMismatch(std::string(op) + ": leaf shapes differ (" + std::to_string(a.dim()) +
                            "/" + std::to_string(a.blocksize()) + " vs " +
                            std::to_string(b.dim()) + "/" + std::to_string(b.blocksize()) + ")");
  }
}

// c += alpha * op(a) * op(b) on one bs x bs block.
template <bool TA, bool TB>
void block_gemm(const double* a, const double* b, double* c, int bs, double alpha) {
  for (int i = 0; i < bs; ++i) {
    double* crow = c + static_cast<std::ptrdiff_t>(i) * bs;
    if constexpr (!TB) {
      for (int k = 0; k < bs; ++k) {
        const double aik = alpha * (TA ? a[k * bs + i] : a[i * bs + k]);
        const double* brow = b + static_cast<std::ptrdiff_t>(k) * bs;
        for (int j = 0; j < bs; ++j) crow[j] += aik * brow[j];
      }
    } else {
      for (int j = 0; j < bs; ++j) {
        const double* bcol = b + static_cast<std::ptrdiff_t>(j) * bs;
        double s = 0.0;
        for (int k = 0; k < bs; ++k) s += (TA ? a[k * bs + i] : a[i * bs + k]) * bcol[k];
        crow[j] += alpha * s;
      }
    }
  }
}

using GemmKernel = void (*)(const double*, const double*, double*, int, double);

GemmKernel pick_kernel(bool ta, bool tb) {
  if (ta) return tb ? &block_gemm<true, true> : &block_gemm<true, false>;
  return tb ? &block_gemm<false, true> : &block_gemm<false, false>;
}

void transpose_block(const double* in, double* out, int bs) {
  for (int i = 0; i < bs; ++i)
    for (int j = 0; j < bs; ++j) out[j * bs + i] = in[i * bs + j];
}

}  // namespace

LeafMatrix::LeafMatrix(int dim, int blocksize) : dim_(dim), blocksize_(blocksize) {
  if (dim <= 0 || blocksize <= 0 || dim % blocksize != 0) {
    throw InvalidInput("leaf dim " + std::to_string(dim) + " is not a positive multiple of blocksize " +
                       std::to_string(blocksize));
  }
}

LeafMatrix LeafMatrix::identity(int dim, int blocksize, double scale) {
  LeafMatrix m(dim, blocksize);
  if (scale == 0.0) return m;
  const int nb = m.blocks_per_side();
  for (int b = 0; b < nb; ++b) {
    Block blk(m.block_elements(), 0.0);
    for (int i = 0; i < blocksize; ++i) blk[static_cast<std::size_t>(i) * blocksize + i] = scale;
    m.blocks_.emplace(BlockIndex{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b)},
                      std::move(blk));
  }
  return m;
}

LeafMatrix LeafMatrix::from_dense(int dim, int blocksize, std::span<const double> values) {
  LeafMatrix m(dim, blocksize);
  if (values.size() != static_cast<std::size_t>(dim) * dim) {
    throw DimensionMismatch("from_dense: expected " + std::to_string(dim * dim) + " values");
  }
  const int nb = m.blocks_per_side();
  Block blk(m.block_elements());
  for (int bi = 0; bi < nb; ++bi) {
    for (int bj = 0; bj < nb; ++bj) {
      for (int i = 0; i < blocksize; ++i) {
        for (int j = 0; j < blocksize; ++j) {
          blk[static_cast<std::size_t>(i) * blocksize + j] =
              values[static_cast<std::size_t>(bi * blocksize + i) * dim + bj * blocksize + j];
        }
      }
      if (!all_zero(blk)) {
        m.blocks_.emplace(BlockIndex{static_cast<std::uint32_t>(bi), static_cast<std::uint32_t>(bj)},
                          blk);
      }
    }
  }
  return m;
}

const double* LeafMatrix::find_block(BlockIndex idx) const {
  auto it = blocks_.find(idx);
  return it == blocks_.end() ? nullptr : it->second.data();
}

std::span<double> LeafMatrix::block(BlockIndex idx) {
  auto [it, inserted] = blocks_.try_emplace(idx);
  if (inserted) it->second.assign(block_elements(), 0.0);
  return it->second;
}

void LeafMatrix::set_block(BlockIndex idx, Block values) {
  if (values.size() != block_elements()) {
    throw DimensionMismatch("set_block: block has " + std::to_string(values.size()) + " values");
  }
  blocks_[idx] = std::move(values);
}

double LeafMatrix::at(int row, int col) const {
  const auto idx = BlockIndex{static_cast<std::uint32_t>(row / blocksize_),
                              static_cast<std::uint32_t>(col / blocksize_)};
  const double* blk = find_block(idx);
  if (blk == nullptr) return 0.0;
  return blk[(row % blocksize_) * blocksize_ + col % blocksize_];
}

std::vector<double> LeafMatrix::to_dense() const {
  std::vector<double> out(static_cast<std::size_t>(dim_) * dim_, 0.0);
  for (const auto& [idx, blk] : blocks_) {
    for (int i = 0; i < blocksize_; ++i) {
      for (int j = 0; j < blocksize_; ++j) {
        out[static_cast<std::size_t>(idx.row * blocksize_ + i) * dim_ + idx.col * blocksize_ + j] =
            blk[static_cast<std::size_t>(i) * blocksize_ + j];
      }
    }
  }
  return out;
}

double LeafMatrix::frobenius_norm_squared() const {
  double s = 0.0;
  for (const auto& [idx, blk] : blocks_) s += sum_squares(blk);
  return s;
}

std::size_t LeafMatrix::nonzero_count() const {
  std::size_t n = 0;
  for (const auto& [idx, blk] : blocks_) {
    n += static_cast<std::size_t>(std::count_if(blk.begin(), blk.end(), [](double v) { return v != 0.0; }));
  }
  return n;
}

std::size_t LeafMatrix::size_bytes() const noexcept {
  return kHeaderBytes + blocks_.size() * block_elements() * sizeof(double);
}

LeafMatrix leaf_multiply(const LeafMatrix& a, const LeafMatrix& b, bool ta, bool tb, double alpha,
                         const LeafMatrix* accum) {
  check_same_shape(a, b, "leaf_multiply");
  if (accum != nullptr) check_same_shape(a, *accum, "leaf_multiply accumulator");

  const int bs = a.blocksize();
  const int nb = a.blocks_per_side();
  const std::size_t nel = a.block_elements();

  // Rows of op(a): for output row i, the (k, block) pairs in ascending k.
  struct Entry {
    std::uint32_t k;
    const double* data;
  };
  std::vector<std::vector<Entry>> a_rows(static_cast<std::size_t>(nb));
  for (const auto& [idx, blk] : a.blocks()) {
    if (ta) a_rows[idx.col].push_back({idx.row, blk.data()});
    else a_rows[idx.row].push_back({idx.col, blk.data()});
  }
  // Rows of op(b): for inner index k, the (j, block) pairs in ascending j.
  std::vector<std::vector<Entry>> b_rows(static_cast<std::size_t>(nb));
  for (const auto& [idx, blk] : b.blocks()) {
    if (tb) b_rows[idx.col].push_back({idx.row, blk.data()});
    else b_rows[idx.row].push_back({idx.col, blk.data()});
  }

  const GemmKernel kernel = pick_kernel(ta, tb);
  LeafMatrix out(a.dim(), bs);
  std::vector<LeafMatrix::Block> row_buffer(static_cast<std::size_t>(nb));
  std::vector<char> touched(static_cast<std::size_t>(nb), 0);

  for (int i = 0; i < nb; ++i) {
    std::fill(touched.begin(), touched.end(), 0);
    auto touch = [&](std::uint32_t j) -> double* {
      if (!touched[j]) {
        touched[j] = 1;
        row_buffer[j].assign(nel, 0.0);
      }
      return row_buffer[j].data();
    };
    if (accum != nullptr) {
      auto it = accum->blocks().lower_bound(BlockIndex{static_cast<std::uint32_t>(i), 0});
      for (; it != accum->blocks().end() && it->first.row == static_cast<std::uint32_t>(i); ++it) {
        double* c = touch(it->first.col);
        std::copy(it->second.begin(), it->second.end(), c);
      }
    }
    for (const Entry& ae : a_rows[static_cast<std::size_t>(i)]) {
      for (const Entry& be : b_rows[ae.k]) kernel(ae.data, be.data, touch(be.k), bs, alpha);
    }
    for (int j = 0; j < nb; ++j) {
      if (touched[static_cast<std::size_t>(j)] && !all_zero(row_buffer[static_cast<std::size_t>(j)])) {
        out.set_block(BlockIndex{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)},
                      std::move(row_buffer[static_cast<std::size_t>(j)]));
      }
    }
  }
  return out;
}

LeafMatrix leaf_add(const LeafMatrix& a, const LeafMatrix& b, double alpha, double beta, bool tb) {
  check_same_shape(a, b, "leaf_add");
  const int bs = a.blocksize();
  const std::size_t nel = a.block_elements();
  LeafMatrix out(a.dim(), bs);

  std::map<BlockIndex, const double*> b_blocks;
  for (const auto& [idx, blk] : b.blocks()) {
    b_blocks.emplace(tb ? BlockIndex{idx.col, idx.row} : idx, blk.data());
  }

  LeafMatrix::Block tmp(nel);
  auto emit = [&](BlockIndex idx, const double* ablk, const double* bblk) {
    LeafMatrix::Block res(nel, 0.0);
    if (ablk != nullptr) {
      for (std::size_t e = 0; e < nel; ++e) res[e] = alpha * ablk[e];
    }
    if (bblk != nullptr) {
      const double* src = bblk;
      if (tb) {
        transpose_block(bblk, tmp.data(), bs);
        src = tmp.data();
      }
      if (ablk != nullptr) {
        for (std::size_t e = 0; e < nel; ++e) res[e] += beta * src[e];
      } else {
        for (std::size_t e = 0; e < nel; ++e) res[e] = beta * src[e];
      }
    }
    if (!all_zero(res)) out.set_block(idx, std::move(res));
  };

  auto ait = a.blocks().begin();
  auto bit = b_blocks.begin();
  while (ait != a.blocks().end() || bit != b_blocks.end()) {
    if (bit == b_blocks.end() || (ait != a.blocks().end() && ait->first < bit->first)) {
      emit(ait->first, ait->second.data(), nullptr);
      ++ait;
    } else if (ait == a.blocks().end() || bit->first < ait->first) {
      emit(bit->first, nullptr, bit->second);
      ++bit;
    } else {
      emit(ait->first, ait->second.data(), bit->second);
      ++ait;
      ++bit;
    }
  }
  return out;
}

LeafMatrix leaf_scale(const LeafMatrix& a, double alpha) {
  LeafMatrix out(a.dim(), a.blocksize());
  if (alpha == 0.0) return out;
  for (const auto& [idx, blk] : a.blocks()) {
    LeafMatrix::Block res(blk.size());
    for (std::size_t e = 0; e < blk.size(); ++e) res[e] = alpha * blk[e];
    if (!all_zero(res)) out.set_block(idx, std::move(res));
  }
  return out;
}

LeafMatrix leaf_transpose(const LeafMatrix& a) {
  LeafMatrix out(a.dim(), a.blocksize());
  const int bs = a.blocksize();
  for (const auto& [idx, blk] : a.blocks()) {
    LeafMatrix::Block t(blk.size());
    transpose_block(blk.data(), t.data(), bs);
    out.set_block(BlockIndex{idx.col, idx.row}, std::move(t));
  }
  return out;
}

std::size_t leaf_truncate_in_place(LeafMatrix& a, double tau) {
  if (tau < 0.0) throw InvalidInput("truncation threshold must be nonnegative");
  LeafMatrix kept(a.dim(), a.blocksize());
  std::size_t removed = 0;
  for (const auto& [idx, blk] : a.blocks()) {
    const double norm = std::sqrt(sum_squares(blk));
    if (norm > 0.0 && norm >= tau) {
      kept.set_block(idx, blk);
    } else {
      ++removed;
    }
  }
  if (removed > 0) a = std::move(kept);
  return removed;
}

LeafMatrix leaf_truncate(const LeafMatrix& a, double tau) {
  LeafMatrix out = a;
  leaf_truncate_in_place(out, tau);
  return out;
}

LeafMatrix leaf_inverse_cholesky(const LeafMatrix& s) {
  const int n = s.dim();
  const auto un = static_cast<std::size_t>(n);
  std::vector<double> l = s.to_dense();

  // In-place lower Cholesky factor, row-major.
  for (int j = 0; j < n; ++j) {
    double d = l[j * un + j];
    for (int k = 0; k < j; ++k) d -= l[j * un + k] * l[j * un + k];
    if (!(d > 0.0)) throw NotPositiveDefinite(static_cast<std::size_t>(j), d);
    const double ljj = std::sqrt(d);
    l[j * un + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double v = l[i * un + j];
      for (int k = 0; k < j; ++k) v -= l[i * un + k] * l[j * un + k];
      l[i * un + j] = v / ljj;
    }
  }

  // W = L^{-1} (lower), column by column via forward substitution; Z = W^T.
  std::vector<double> z(un * un, 0.0);
  std::vector<double> w(un);
  for (int c = 0; c < n; ++c) {
    std::fill(w.begin(), w.end(), 0.0);
    for (int i = c; i < n; ++i) {
      double v = (i == c) ? 1.0 : 0.0;
      for (int k = c; k < i; ++k) v -= l[i * un + k] * w[static_cast<std::size_t>(k)];
      w[static_cast<std::size_t>(i)] = v / l[i * un + i];
    }
    // Column c of W becomes row c of Z.
    for (int i = c; i < n; ++i) z[c * un + i] = w[static_cast<std::size_t>(i)];
  }
  return LeafMatrix::from_dense(n, s.blocksize(), z);
}

void leaf_gershgorin_rows(const LeafMatrix& s, std::span<double> row_sums, bool on_diagonal) {
  const int bs = s.blocksize();
  for (const auto& [idx, blk] : s.blocks()) {
    for (int i = 0; i < bs; ++i) {
      const int row = static_cast<int>(idx.row) * bs + i;
      for (int j = 0; j < bs; ++j) {
        const int col = static_cast<int>(idx.col) * bs + j;
        const double v = blk[static_cast<std::size_t>(i) * bs + j];
        row_sums[static_cast<std::size_t>(row)] += (on_diagonal && row == col) ? v : std::abs(v);
      }
    }
  }
}

}  // namespace qtinv

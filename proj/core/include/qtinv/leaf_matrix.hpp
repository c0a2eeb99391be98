#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace qtinv {

struct BlockIndex {
  std::uint32_t row = 0;
  std::uint32_t col = 0;

  auto operator<=>(const BlockIndex&) const = default;
};

/// Square leaf matrix split into blocksize x blocksize dense blocks.
///
/// Only blocks that are present in the map are stored; an absent block is an
/// all-zero block. Blocks are row-major. The ordered map fixes the iteration
/// order, and with it the order of every floating point reduction done on the
/// leaf.
class LeafMatrix {
 public:
  using Block = std::vector<double>;
  using BlockMap = std::map<BlockIndex, Block>;

  LeafMatrix() = default;
  LeafMatrix(int dim, int blocksize);

  static LeafMatrix identity(int dim, int blocksize, double scale = 1.0);
  /// Builds a leaf from a row-major dim x dim array. All-zero blocks are not stored.
  static LeafMatrix from_dense(int dim, int blocksize, std::span<const double> values);

  int dim() const noexcept { return dim_; }
  int blocksize() const noexcept { return blocksize_; }
  int blocks_per_side() const noexcept { return blocksize_ == 0 ? 0 : dim_ / blocksize_; }
  std::size_t block_elements() const noexcept {
    return static_cast<std::size_t>(blocksize_) * static_cast<std::size_t>(blocksize_);
  }

  std::size_t block_count() const noexcept { return blocks_.size(); }
  bool empty() const noexcept { return blocks_.empty(); }
  const BlockMap& blocks() const noexcept { return blocks_; }

  /// nullptr when the block is absent.
  const double* find_block(BlockIndex idx) const;
  /// Returns the block, inserting a zero block when absent.
  std::span<double> block(BlockIndex idx);
  void set_block(BlockIndex idx, Block values);

  double at(int row, int col) const;
  /// Row-major dim x dim copy.
  std::vector<double> to_dense() const;

  double frobenius_norm_squared() const;
  /// Number of stored entries with a nonzero value.
  std::size_t nonzero_count() const;
  /// Bytes this leaf occupies when shipped between workers.
  std::size_t size_bytes() const noexcept;

  static constexpr std::size_t kHeaderBytes = 32;

 private:
  int dim_ = 0;
  int blocksize_ = 0;
  BlockMap blocks_;
};

/// Returns accum + alpha * op(a) * op(b), where op transposes when the flag is
/// set. Absent blocks are skipped; each output block sums its contributions in
/// ascending inner block index.
LeafMatrix leaf_multiply(const LeafMatrix& a, const LeafMatrix& b, bool ta = false,
                         bool tb = false, double alpha = 1.0, const LeafMatrix* accum = nullptr);

/// alpha * a + beta * op(b). Blocks that come out exactly zero are dropped.
LeafMatrix leaf_add(const LeafMatrix& a, const LeafMatrix& b, double alpha, double beta,
                    bool tb = false);
LeafMatrix leaf_scale(const LeafMatrix& a, double alpha);
LeafMatrix leaf_transpose(const LeafMatrix& a);

/// Keeps the blocks whose Frobenius norm is >= tau and nonzero.
LeafMatrix leaf_truncate(const LeafMatrix& a, double tau);
/// In-place variant; returns the number of removed blocks.
std::size_t leaf_truncate_in_place(LeafMatrix& a, double tau);

/// Upper triangular Z with Z^T S Z = I, i.e. the transposed inverse of the
/// lower Cholesky factor of the densified leaf. Only the lower triangle of s is
/// read. Throws NotPositiveDefinite with the failing (leaf local) pivot.
LeafMatrix leaf_inverse_cholesky(const LeafMatrix& s);

/// Adds |s_ij| (j != i) and s_ii into row_sums[i] for every stored entry.
/// With on_diagonal false the leaf is an off-diagonal tile and every entry
/// counts with its absolute value.
void leaf_gershgorin_rows(const LeafMatrix& s, std::span<double> row_sums, bool on_diagonal = true);

}  // namespace qtinv

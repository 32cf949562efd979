#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace diagt {

using Index = std::size_t;

struct Triplet {
  Index row;
  Index col;
  double value;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Non-owning view of one sparse row. Stored indices are relative; the
/// logical column of entry i is `indices[i] + offset`, which lets block
/// views hand out shifted rows without copying.
struct SparseRowRef {
  std::span<const Index> indices;
  std::span<const double> values;
  Index offset = 0;

  [[nodiscard]] std::size_t size() const noexcept { return indices.size(); }
  [[nodiscard]] bool empty() const noexcept { return indices.empty(); }
  [[nodiscard]] Index col(std::size_t i) const noexcept { return indices[i] + offset; }
  [[nodiscard]] double value(std::size_t i) const noexcept { return values[i]; }

  /// Materialized (column, value) pairs in ascending column order.
  [[nodiscard]] std::vector<std::pair<Index, double>> to_pairs() const;
};

/// Owning sparse vector; doubles as scratch storage for computed rows.
struct SparseVector {
  std::vector<Index> indices;
  std::vector<double> values;

  void clear() noexcept {
    indices.clear();
    values.clear();
  }
  [[nodiscard]] SparseRowRef ref() const noexcept { return {indices, values, 0}; }
};

/// Anything that can stream sparse rows of a fixed logical shape. Learners
/// consume designs through this interface so that transformed design
/// matrices never need to exist in memory.
class RowSource {
 public:
  virtual ~RowSource() = default;

  [[nodiscard]] virtual std::size_t rows() const = 0;
  [[nodiscard]] virtual std::size_t cols() const = 0;
  /// Row `r`. The result may point into `scratch`, so it is only valid until
  /// the next call that reuses the same buffer.
  [[nodiscard]] virtual SparseRowRef row(std::size_t r, SparseVector& scratch) const = 0;
};

struct MatrixStats {
  std::size_t nnz = 0;
  double density = 0.0;  // fraction in [0, 1], not percent
};

/// Immutable CSR matrix with strictly increasing column indices per row and
/// no stored zeros.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  /// Builds a canonical CSR matrix. Throws IndexError for out-of-range
  /// coordinates and DuplicateEntryError for repeated (row, col) pairs.
  /// Zero values are dropped.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::span<const Triplet> entries);

  /// Adopts raw CSR arrays after validating every invariant.
  static SparseMatrix from_csr(std::size_t rows, std::size_t cols, std::vector<Index> row_offsets,
                               std::vector<Index> col_indices, std::vector<double> values);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t nnz() const noexcept { return col_indices_.size(); }

  [[nodiscard]] std::span<const Index> row_offsets() const noexcept { return row_offsets_; }
  [[nodiscard]] std::span<const Index> col_indices() const noexcept { return col_indices_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

  /// Throws IndexError when `r >= rows()`.
  [[nodiscard]] SparseRowRef row(std::size_t r) const;

  /// Value at (r, c), 0 when not stored.
  [[nodiscard]] double at(std::size_t r, std::size_t c) const;

  /// Column `c` as a dense 0/1 vector (nonzero -> 1).
  [[nodiscard]] std::vector<std::uint8_t> binary_column(std::size_t c) const;

  [[nodiscard]] bool is_binary() const noexcept;

  /// Triplets in row-major order.
  [[nodiscard]] std::vector<Triplet> triplets() const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Index> row_offsets_{0};
  std::vector<Index> col_indices_;
  std::vector<double> values_;
};

/// Rows of a SparseMatrix through the RowSource interface.
class MatrixRows final : public RowSource {
 public:
  explicit MatrixRows(const SparseMatrix& matrix) : matrix_(&matrix) {}

  [[nodiscard]] std::size_t rows() const override { return matrix_->rows(); }
  [[nodiscard]] std::size_t cols() const override { return matrix_->cols(); }
  [[nodiscard]] SparseRowRef row(std::size_t r, SparseVector&) const override {
    return matrix_->row(r);
  }

 private:
  const SparseMatrix* matrix_;
};

/// Virtual k-block-diagonal expansion diag(A, ..., A) of a base matrix A
/// (m x n). Logical shape is (m*k) x (n*k); logical row r is base row r % m
/// placed in block r / m. Nothing is materialized. The base matrix must
/// outlive the view.
class BlockDiagView final : public RowSource {
 public:
  /// Throws ConfigError when `num_blocks == 0`.
  BlockDiagView(const SparseMatrix& base, std::size_t num_blocks);

  [[nodiscard]] const SparseMatrix& base() const noexcept { return *base_; }
  [[nodiscard]] std::size_t num_blocks() const noexcept { return num_blocks_; }

  [[nodiscard]] std::size_t rows() const override { return base_->rows() * num_blocks_; }
  [[nodiscard]] std::size_t cols() const override { return base_->cols() * num_blocks_; }
  [[nodiscard]] std::size_t nnz() const noexcept { return base_->nnz() * num_blocks_; }

  /// Block index and base row of logical row `r`.
  [[nodiscard]] std::size_t block_of(std::size_t r) const noexcept { return r / base_->rows(); }
  [[nodiscard]] std::size_t base_row_of(std::size_t r) const noexcept { return r % base_->rows(); }

  /// Throws IndexError when `r >= rows()`.
  [[nodiscard]] SparseRowRef view_row(std::size_t r) const;

  [[nodiscard]] SparseRowRef row(std::size_t r, SparseVector&) const override { return view_row(r); }

 private:
  const SparseMatrix* base_;
  std::size_t num_blocks_;
};

/// nnz and density. Throws DegenerateShapeError when either dimension is 0.
[[nodiscard]] MatrixStats stats(const SparseMatrix& matrix);
/// Uses the structural identities nnz = k * nnz(base), density = density(base) / k.
[[nodiscard]] MatrixStats stats(const BlockDiagView& view);

}  // namespace diagt

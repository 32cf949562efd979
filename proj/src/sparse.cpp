#include "diagt/sparse.hpp"

#include <algorithm>
#include <string>

#include <fmt/format.h>

#include "diagt/error.hpp"

namespace diagt {

std::vector<std::pair<Index, double>> SparseRowRef::to_pairs() const {
  std::vector<std::pair<Index, double>> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.emplace_back(col(i), value(i));
  return out;
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::span<const Triplet> entries) {
  for (const auto& t : entries) {
    if (t.row >= rows || t.col >= cols) {
      throw IndexError(fmt::format("triplet ({}, {}) outside {}x{} matrix", t.row, t.col, rows,
                                   cols));
    }
  }

  std::vector<Triplet> sorted(entries.begin(), entries.end());
  std::sort(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  auto dup = std::adjacent_find(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
    return a.row == b.row && a.col == b.col;
  });
  if (dup != sorted.end()) {
    throw DuplicateEntryError(fmt::format("duplicate entry at ({}, {})", dup->row, dup->col));
  }

  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_offsets_.assign(rows + 1, 0);
  m.col_indices_.reserve(sorted.size());
  m.values_.reserve(sorted.size());
  for (const auto& t : sorted) {
    if (t.value == 0.0) continue;
    ++m.row_offsets_[t.row + 1];
    m.col_indices_.push_back(t.col);
    m.values_.push_back(t.value);
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_offsets_[r + 1] += m.row_offsets_[r];
  return m;
}

SparseMatrix SparseMatrix::from_csr(std::size_t rows, std::size_t cols,
                                    std::vector<Index> row_offsets,
                                    std::vector<Index> col_indices, std::vector<double> values) {
  if (row_offsets.size() != rows + 1 || row_offsets.front() != 0 ||
      row_offsets.back() != col_indices.size() || col_indices.size() != values.size()) {
    throw ShapeError("inconsistent CSR array lengths");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_offsets[r + 1] < row_offsets[r]) {
      throw ShapeError(fmt::format("row_offsets decrease at row {}", r));
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const Index begin = row_offsets[r];
    const Index end = row_offsets[r + 1];
    for (Index p = begin; p < end; ++p) {
      if (col_indices[p] >= cols) {
        throw IndexError(fmt::format("column {} out of range in row {}", col_indices[p], r));
      }
      if (p > begin && col_indices[p] <= col_indices[p - 1]) {
        throw DuplicateEntryError(fmt::format("row {} columns not strictly increasing", r));
      }
      if (values[p] == 0.0) throw ShapeError(fmt::format("explicit zero stored in row {}", r));
    }
  }
  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_offsets_ = std::move(row_offsets);
  m.col_indices_ = std::move(col_indices);
  m.values_ = std::move(values);
  return m;
}

SparseRowRef SparseMatrix::row(std::size_t r) const {
  if (r >= rows_) throw IndexError(fmt::format("row {} out of range ({} rows)", r, rows_));
  const Index begin = row_offsets_[r];
  const Index len = row_offsets_[r + 1] - begin;
  return {std::span<const Index>(col_indices_).subspan(begin, len),
          std::span<const double>(values_).subspan(begin, len), 0};
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto rr = row(r);
  auto it = std::lower_bound(rr.indices.begin(), rr.indices.end(), c);
  if (it == rr.indices.end() || *it != c) return 0.0;
  return rr.values[static_cast<std::size_t>(it - rr.indices.begin())];
}

std::vector<std::uint8_t> SparseMatrix::binary_column(std::size_t c) const {
  if (c >= cols_) throw IndexError(fmt::format("column {} out of range ({} cols)", c, cols_));
  std::vector<std::uint8_t> out(rows_, 0);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = at(r, c) != 0.0 ? 1 : 0;
  return out;
}

bool SparseMatrix::is_binary() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 1.0; });
}

std::vector<Triplet> SparseMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (Index p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
      out.push_back({r, col_indices_[p], values_[p]});
    }
  }
  return out;
}

BlockDiagView::BlockDiagView(const SparseMatrix& base, std::size_t num_blocks)
    : base_(&base), num_blocks_(num_blocks) {
  if (num_blocks == 0) throw ConfigError("block-diagonal view needs at least one block");
}

SparseRowRef BlockDiagView::view_row(std::size_t r) const {
  if (r >= rows()) throw IndexError(fmt::format("row {} out of range ({} rows)", r, rows()));
  SparseRowRef ref = base_->row(base_row_of(r));
  ref.offset = block_of(r) * base_->cols();
  return ref;
}

MatrixStats stats(const SparseMatrix& matrix) {
  if (matrix.rows() == 0 || matrix.cols() == 0) {
    throw DegenerateShapeError(
        fmt::format("density undefined for {}x{} matrix", matrix.rows(), matrix.cols()));
  }
  const double cells = static_cast<double>(matrix.rows()) * static_cast<double>(matrix.cols());
  return {matrix.nnz(), static_cast<double>(matrix.nnz()) / cells};
}

MatrixStats stats(const BlockDiagView& view) {
  const MatrixStats base = stats(view.base());
  return {base.nnz * view.num_blocks(), base.density / static_cast<double>(view.num_blocks())};
}

}  // namespace diagt

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "diagt/sparse.hpp"

namespace diagt {

/// Dense row-major m x k matrix of label scores.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] double& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * cols_ + j];
  }
  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }
  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }
  [[nodiscard]] std::span<double> row(std::size_t i) noexcept {
    return std::span<double>(data_).subspan(i * cols_, cols_);
  }

  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Shape of a block-diagonal transformation: m instances, n features, k labels.
struct DiagTransform {
  std::size_t num_instances = 0;
  std::size_t num_features = 0;
  std::size_t num_labels = 0;

  /// Transformed example index of (instance i, label j); label-major.
  [[nodiscard]] std::size_t stacked_index(std::size_t i, std::size_t j) const noexcept {
    return j * num_instances + i;
  }
  [[nodiscard]] std::size_t stacked_size() const noexcept { return num_instances * num_labels; }
  [[nodiscard]] std::size_t transformed_dim() const noexcept { return num_features * num_labels; }
};

/// Label columns of an m x k binary matrix stacked into one length-m*k
/// vector: entry j*m + i holds Y[i][j].
class StackedLabels {
 public:
  StackedLabels() = default;
  StackedLabels(std::vector<std::uint8_t> values, std::size_t num_instances,
                std::size_t num_labels);

  /// Throws ShapeError unless Y is binary.
  static StackedLabels stack(const SparseMatrix& labels);

  [[nodiscard]] std::size_t num_instances() const noexcept { return num_instances_; }
  [[nodiscard]] std::size_t num_labels() const noexcept { return num_labels_; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] std::span<const std::uint8_t> values() const noexcept { return values_; }
  [[nodiscard]] std::uint8_t operator[](std::size_t r) const noexcept { return values_[r]; }
  [[nodiscard]] std::uint8_t at(std::size_t i, std::size_t j) const noexcept {
    return values_[j * num_instances_ + i];
  }
  [[nodiscard]] std::size_t num_positive() const noexcept;

 private:
  std::vector<std::uint8_t> values_;
  std::size_t num_instances_ = 0;
  std::size_t num_labels_ = 0;
};

struct Expansion {
  DiagTransform shape;
  BlockDiagView design;
  StackedLabels labels;
};

/// X' = diag(X, ..., X) (k copies) and the stacked label vector. Throws
/// ShapeError on row-count mismatch or non-binary Y, DegenerateShapeError
/// when m, n or k is zero. The returned view refers to `features`.
[[nodiscard]] Expansion expand(const SparseMatrix& features, const SparseMatrix& labels);

/// Inverse of the stacking order: result(i, j) = scores[j*m + i].
/// Throws ShapeError when scores.size() != m*k.
[[nodiscard]] ScoreMatrix fold_back(std::span<const double> scores, std::size_t m, std::size_t k);

// ---------------------------------------------------------------------------
// Feature hashing

struct HashingConfig {
  double bucket_ratio = 0.9;
  std::uint64_t seed = 0;
  bool is_signed = true;
};

/// splitmix64 finalizer applied to (seed XOR col).
[[nodiscard]] std::uint64_t hash_mix(std::uint64_t seed, Index col) noexcept;

/// ceil(ratio * input_dim). Throws ConfigError for ratio outside (0, 1] or a
/// zero-sized result.
[[nodiscard]] std::size_t bucket_count(double bucket_ratio, std::size_t input_dim);

/// Maps sparse rows over `input_dim` columns to `output_dim()` buckets.
/// The per-column (bucket, sign) lookup is tabulated once unless
/// `tabulate` is off or the input space is very large.
class FeatureHasher {
 public:
  FeatureHasher(const HashingConfig& config, std::size_t input_dim, bool tabulate = true);

  [[nodiscard]] const HashingConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
  [[nodiscard]] std::size_t output_dim() const noexcept { return output_dim_; }

  [[nodiscard]] std::size_t bucket(Index col) const noexcept;
  [[nodiscard]] double sign(Index col) const noexcept;

  /// Hashes `row` into `out` (sorted buckets, exact-zero sums dropped).
  /// `row` may alias `out`. Throws IndexError for columns >= input_dim.
  void hash(SparseRowRef row, SparseVector& out) const;
  [[nodiscard]] SparseVector hash(SparseRowRef row) const;

 private:
  HashingConfig config_;
  std::size_t input_dim_;
  std::size_t output_dim_;
  std::vector<std::uint32_t> bucket_table_;
  std::vector<std::int8_t> sign_table_;
};

[[nodiscard]] SparseVector hash_row(SparseRowRef row, const HashingConfig& config,
                                    std::size_t input_dim);

// ---------------------------------------------------------------------------
// Random undersampling

struct UndersampleConfig {
  double neg_pos_ratio = 1.0;
  std::uint64_t seed = 0;
};

/// Keeps every positive row and a seeded uniform subset of
/// min(#neg, round(ratio * #pos)) negatives. Returns row indices ascending.
/// Throws DegenerateLabelsError without positives, ConfigError for ratio <= 0.
[[nodiscard]] std::vector<std::size_t> undersample(std::span<const std::uint8_t> labels,
                                                   const UndersampleConfig& config);
[[nodiscard]] std::vector<std::size_t> undersample(const StackedLabels& labels,
                                                   const UndersampleConfig& config);

// ---------------------------------------------------------------------------
// Row-source adapters for the reduced designs

/// The rows of `inner` listed in `kept`, in that order.
class SubsetRows final : public RowSource {
 public:
  SubsetRows(const RowSource& inner, std::span<const std::size_t> kept)
      : inner_(&inner), kept_(kept) {}

  [[nodiscard]] std::size_t rows() const override { return kept_.size(); }
  [[nodiscard]] std::size_t cols() const override { return inner_->cols(); }
  [[nodiscard]] SparseRowRef row(std::size_t r, SparseVector& scratch) const override;

 private:
  const RowSource* inner_;
  std::span<const std::size_t> kept_;
};

/// Rows of `inner` passed through a FeatureHasher.
class HashedRows final : public RowSource {
 public:
  HashedRows(const RowSource& inner, const FeatureHasher& hasher);

  [[nodiscard]] std::size_t rows() const override { return inner_->rows(); }
  [[nodiscard]] std::size_t cols() const override { return hasher_->output_dim(); }
  [[nodiscard]] SparseRowRef row(std::size_t r, SparseVector& scratch) const override;

 private:
  const RowSource* inner_;
  const FeatureHasher* hasher_;
};

}  // namespace diagt

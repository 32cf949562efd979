#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "diagt/sparse.hpp"
#include "diagt/transform.hpp"

namespace diagt {

/// Half-open interval [begin, end) of positions in a time-ordered log.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const noexcept { return end - begin; }
  [[nodiscard]] bool empty() const noexcept { return end == begin; }
  [[nodiscard]] bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct FoldSpec {
  std::size_t fold_index = 1;  // 1-based
  IndexRange train;
  IndexRange test;
  friend bool operator==(const FoldSpec&, const FoldSpec&) = default;
};

/// Expanding-window split of a time-ordered sequence: the timeline is cut
/// into num_folds + 1 contiguous segments whose sizes differ by at most one
/// (larger segments first); fold f trains on segments 1..f and tests on
/// segment f + 1. Throws ConfigError for zero folds and
/// InsufficientDataError when there are fewer than num_folds + 1 items.
[[nodiscard]] std::vector<FoldSpec> temporal_split(std::size_t num_interactions,
                                                   std::size_t num_folds);

/// Mean precision@K in percent over users with at least one truth label.
/// Labels present in `exclude` are removed before truncating the ranking;
/// ties go to the lower label index. Throws ConfigError when K is 0 or
/// larger than the number of labels, ShapeError on mismatched shapes.
[[nodiscard]] double precision_at_k(const ScoreMatrix& scores, const SparseMatrix& truth,
                                    std::size_t k, const SparseMatrix* exclude = nullptr);

/// Indices of the top-K labels of one score row, best first.
[[nodiscard]] std::vector<std::size_t> top_k_labels(std::span<const double> scores, std::size_t k,
                                                    SparseRowRef excluded = {});

struct ConfidenceInterval {
  double mean = 0.0;
  double halfwidth = 0.0;
};

/// Two-sided 95% Student-t critical value t(0.975, df), rounded to four
/// decimals as in printed t-tables (df = 2 gives 4.3027).
[[nodiscard]] double t_critical_975(std::size_t degrees_of_freedom);

/// Mean and t-based 95% halfwidth t(0.975, f-1) * s / sqrt(f) of f fold
/// values. Throws InsufficientDataError for fewer than two values.
[[nodiscard]] ConfidenceInterval aggregate_ci(std::span<const double> fold_values);

}  // namespace diagt

#include "diagt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "diagt/error.hpp"

namespace diagt {

std::vector<FoldSpec> temporal_split(std::size_t num_interactions, std::size_t num_folds) {
  if (num_folds == 0) throw ConfigError("need at least one fold");
  const std::size_t segments = num_folds + 1;
  if (num_interactions < segments) {
    throw InsufficientDataError(fmt::format("{} interactions cannot fill {} time segments",
                                            num_interactions, segments));
  }
  const std::size_t base = num_interactions / segments;
  const std::size_t extra = num_interactions % segments;
  std::vector<std::size_t> bounds{0};
  for (std::size_t s = 0; s < segments; ++s) {
    bounds.push_back(bounds.back() + base + (s < extra ? 1 : 0));
  }
  std::vector<FoldSpec> folds;
  for (std::size_t f = 1; f <= num_folds; ++f) {
    folds.push_back({f, {0, bounds[f]}, {bounds[f], bounds[f + 1]}});
  }
  return folds;
}

std::vector<std::size_t> top_k_labels(std::span<const double> scores, std::size_t k,
                                      SparseRowRef excluded) {
  std::vector<std::size_t> candidates;
  candidates.reserve(scores.size());
  std::size_t e = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    while (e < excluded.size() && excluded.col(e) < j) ++e;
    if (e < excluded.size() && excluded.col(e) == j) continue;
    candidates.push_back(j);
  }
  auto key = [&](std::size_t j) {
    const double s = scores[j];
    return std::isnan(s) ? -std::numeric_limits<double>::infinity() : s;
  };
  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), [&](std::size_t a, std::size_t b) {
                      const double sa = key(a);
                      const double sb = key(b);
                      return sa != sb ? sa > sb : a < b;
                    });
  candidates.resize(take);
  return candidates;
}

double precision_at_k(const ScoreMatrix& scores, const SparseMatrix& truth, std::size_t k,
                      const SparseMatrix* exclude) {
  if (scores.rows() != truth.rows() || scores.cols() != truth.cols()) {
    throw ShapeError(fmt::format("scores {}x{} vs truth {}x{}", scores.rows(), scores.cols(),
                                 truth.rows(), truth.cols()));
  }
  if (exclude && (exclude->rows() != truth.rows() || exclude->cols() != truth.cols())) {
    throw ShapeError("exclusion matrix shape differs from truth");
  }
  if (k == 0 || k > truth.cols()) {
    throw ConfigError(fmt::format("K = {} outside [1, {}]", k, truth.cols()));
  }

  double total = 0.0;
  std::size_t users = 0;
  for (std::size_t i = 0; i < truth.rows(); ++i) {
    const SparseRowRef relevant = truth.row(i);
    if (relevant.empty()) continue;
    const auto top = top_k_labels(scores.row(i), k, exclude ? exclude->row(i) : SparseRowRef{});
    std::size_t hits = 0;
    for (std::size_t j : top) {
      hits += std::binary_search(relevant.indices.begin(), relevant.indices.end(), j) ? 1 : 0;
    }
    total += static_cast<double>(hits) / static_cast<double>(k);
    ++users;
  }
  return users == 0 ? 0.0 : 100.0 * total / static_cast<double>(users);
}

double t_critical_975(std::size_t degrees_of_freedom) {
  if (degrees_of_freedom == 0) throw InsufficientDataError("t quantile needs df >= 1");
  const boost::math::students_t dist(static_cast<double>(degrees_of_freedom));
  return std::round(boost::math::quantile(dist, 0.975) * 1e4) / 1e4;
}

ConfidenceInterval aggregate_ci(std::span<const double> fold_values) {
  const std::size_t f = fold_values.size();
  if (f < 2) {
    throw InsufficientDataError(fmt::format("confidence interval needs >= 2 values, got {}", f));
  }
  const double mean =
      std::accumulate(fold_values.begin(), fold_values.end(), 0.0) / static_cast<double>(f);
  double ss = 0.0;
  for (double v : fold_values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(f - 1));
  return {mean, t_critical_975(f - 1) * sd / std::sqrt(static_cast<double>(f))};
}

}  // namespace diagt

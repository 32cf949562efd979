#include "diagt/transform.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "diagt/error.hpp"
#include "diagt/random.hpp"

namespace diagt {

namespace {

// Columns beyond this are hashed on demand instead of tabulated.
constexpr std::size_t kMaxTabulatedColumns = std::size_t{1} << 24;

}  // namespace

StackedLabels::StackedLabels(std::vector<std::uint8_t> values, std::size_t num_instances,
                             std::size_t num_labels)
    : values_(std::move(values)), num_instances_(num_instances), num_labels_(num_labels) {
  if (values_.size() != num_instances * num_labels) {
    throw ShapeError(fmt::format("stacked labels of length {} do not match {}x{}",
                                 values_.size(), num_instances, num_labels));
  }
  for (auto v : values_) {
    if (v > 1) throw ShapeError("stacked labels must be 0/1");
  }
}

StackedLabels StackedLabels::stack(const SparseMatrix& labels) {
  if (!labels.is_binary()) throw ShapeError("label matrix must be binary");
  const std::size_t m = labels.rows();
  std::vector<std::uint8_t> values(m * labels.cols(), 0);
  for (const auto& t : labels.triplets()) values[t.col * m + t.row] = 1;
  return {std::move(values), m, labels.cols()};
}

std::size_t StackedLabels::num_positive() const noexcept {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

Expansion expand(const SparseMatrix& features, const SparseMatrix& labels) {
  if (features.rows() != labels.rows()) {
    throw ShapeError(fmt::format("X has {} rows but Y has {}", features.rows(), labels.rows()));
  }
  if (features.rows() == 0 || features.cols() == 0 || labels.cols() == 0) {
    throw DegenerateShapeError(fmt::format("cannot expand X {}x{} with {} labels",
                                           features.rows(), features.cols(), labels.cols()));
  }
  DiagTransform shape{features.rows(), features.cols(), labels.cols()};
  return {shape, BlockDiagView(features, labels.cols()), StackedLabels::stack(labels)};
}

ScoreMatrix fold_back(std::span<const double> scores, std::size_t m, std::size_t k) {
  if (scores.size() != m * k) {
    throw ShapeError(fmt::format("{} scores cannot fold into {}x{}", scores.size(), m, k));
  }
  ScoreMatrix out(m, k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < m; ++i) out(i, j) = scores[j * m + i];
  }
  return out;
}

std::uint64_t hash_mix(std::uint64_t seed, Index col) noexcept {
  return splitmix64(seed ^ static_cast<std::uint64_t>(col));
}

std::size_t bucket_count(double bucket_ratio, std::size_t input_dim) {
  if (!(bucket_ratio > 0.0 && bucket_ratio <= 1.0)) {
    throw ConfigError(fmt::format("hash bucket ratio {} outside (0, 1]", bucket_ratio));
  }
  const double raw = bucket_ratio * static_cast<double>(input_dim);
  // 0.9 * 100 must give 90, not 91 through representation error.
  const double nearest = std::round(raw);
  const double d = std::abs(raw - nearest) <= 1e-9 * std::max(1.0, raw) ? nearest : std::ceil(raw);
  if (d < 1.0) throw ConfigError(fmt::format("hashing {} columns yields no buckets", input_dim));
  return static_cast<std::size_t>(d);
}

FeatureHasher::FeatureHasher(const HashingConfig& config, std::size_t input_dim, bool tabulate)
    : config_(config), input_dim_(input_dim), output_dim_(bucket_count(config.bucket_ratio, input_dim)) {
  if (tabulate && input_dim_ <= kMaxTabulatedColumns) {
    bucket_table_.resize(input_dim_);
    sign_table_.resize(input_dim_);
    for (std::size_t c = 0; c < input_dim_; ++c) {
      const std::uint64_t z = hash_mix(config_.seed, c);
      bucket_table_[c] = static_cast<std::uint32_t>(z % output_dim_);
      sign_table_[c] = (!config_.is_signed || (z >> 63) == 0) ? 1 : -1;
    }
  }
}

std::size_t FeatureHasher::bucket(Index col) const noexcept {
  if (!bucket_table_.empty()) return bucket_table_[col];
  return hash_mix(config_.seed, col) % output_dim_;
}

double FeatureHasher::sign(Index col) const noexcept {
  if (!config_.is_signed) return 1.0;
  if (!sign_table_.empty()) return sign_table_[col];
  return (hash_mix(config_.seed, col) >> 63) == 0 ? 1.0 : -1.0;
}

void FeatureHasher::hash(SparseRowRef row, SparseVector& out) const {
  thread_local std::vector<std::pair<Index, double>> pairs;
  pairs.clear();
  pairs.reserve(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    const Index c = row.col(i);
    if (c >= input_dim_) {
      throw IndexError(fmt::format("column {} outside hashed space of {}", c, input_dim_));
    }
    pairs.emplace_back(bucket(c), sign(c) * row.value(i));
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // `row` may point into `out`; it is not read past this point.
  out.clear();
  for (std::size_t i = 0; i < pairs.size();) {
    const Index b = pairs[i].first;
    double sum = 0.0;
    for (; i < pairs.size() && pairs[i].first == b; ++i) sum += pairs[i].second;
    if (sum != 0.0) {
      out.indices.push_back(b);
      out.values.push_back(sum);
    }
  }
}

SparseVector FeatureHasher::hash(SparseRowRef row) const {
  SparseVector out;
  hash(row, out);
  return out;
}

SparseVector hash_row(SparseRowRef row, const HashingConfig& config, std::size_t input_dim) {
  return FeatureHasher(config, input_dim).hash(row);
}

std::vector<std::size_t> undersample(std::span<const std::uint8_t> labels,
                                     const UndersampleConfig& config) {
  if (!(config.neg_pos_ratio > 0.0) || !std::isfinite(config.neg_pos_ratio)) {
    throw ConfigError(fmt::format("undersampling ratio {} must be positive", config.neg_pos_ratio));
  }
  const auto num_pos =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  if (num_pos == 0) throw DegenerateLabelsError("undersampling needs at least one positive label");
  const std::size_t num_neg = labels.size() - num_pos;
  const auto wanted = static_cast<std::size_t>(
      std::llround(config.neg_pos_ratio * static_cast<double>(num_pos)));
  std::size_t need = std::min(num_neg, wanted);

  // Selection sampling: each negative is kept with probability
  // need / remaining, which yields a uniform subset already in index order.
  Rng rng(config.seed);
  std::vector<std::size_t> kept;
  kept.reserve(num_pos + need);
  std::size_t remaining = num_neg;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] != 0) {
      kept.push_back(r);
      continue;
    }
    if (need > 0 && uniform_below(rng, remaining) < need) {
      kept.push_back(r);
      --need;
    }
    --remaining;
  }
  return kept;
}

std::vector<std::size_t> undersample(const StackedLabels& labels, const UndersampleConfig& config) {
  return undersample(labels.values(), config);
}

SparseRowRef SubsetRows::row(std::size_t r, SparseVector& scratch) const {
  if (r >= kept_.size()) {
    throw IndexError(fmt::format("row {} out of range ({} rows)", r, kept_.size()));
  }
  return inner_->row(kept_[r], scratch);
}

HashedRows::HashedRows(const RowSource& inner, const FeatureHasher& hasher)
    : inner_(&inner), hasher_(&hasher) {
  if (inner.cols() != hasher.input_dim()) {
    throw ShapeError(fmt::format("hasher expects {} columns, design has {}", hasher.input_dim(),
                                 inner.cols()));
  }
}

SparseRowRef HashedRows::row(std::size_t r, SparseVector& scratch) const {
  const SparseRowRef raw = inner_->row(r, scratch);
  hasher_->hash(raw, scratch);
  return scratch.ref();
}

}  // namespace diagt

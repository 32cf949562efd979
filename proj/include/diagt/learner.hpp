#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "diagt/sparse.hpp"
#include "diagt/transform.hpp"

namespace diagt {

enum class LrSchedule { constant, inverse_scaling };

struct SgdConfig {
  std::size_t epochs = 5;
  double learning_rate = 0.1;
  /// inverse_scaling: eta_t = eta_0 / (1 + eta_0 * lambda * t), t = global step.
  LrSchedule lr_schedule = LrSchedule::inverse_scaling;
  double l2_lambda = 1e-6;
  bool use_intercept = true;
  bool shuffle = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on epochs == 0, non-positive rate or negative lambda.
  void validate() const;
  [[nodiscard]] double rate_at(std::size_t step) const noexcept;
};

struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;
  bool has_intercept = false;

  [[nodiscard]] std::size_t feature_dim() const noexcept { return weights.size(); }
  /// w.x + b. Throws IndexError for columns >= feature_dim.
  [[nodiscard]] double margin(SparseRowRef row) const;

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct TrainStats {
  double wall_clock_seconds = 0.0;
  std::size_t examples_seen = 0;  // summed over all epochs
  double final_mean_loss = 0.0;
  /// Mean logistic loss of each epoch, accumulated before each example's update.
  std::vector<double> epoch_mean_loss;
};

/// Size of the design a model was actually trained on.
struct PipelineMeta {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t nnz = 0;
  double density = 0.0;  // fraction
};

// Logistic loss pieces, shared by the trainer and the gradient checks.

[[nodiscard]] double sigmoid(double t) noexcept;
/// log(1 + exp(-(2y-1) * margin)), computed without overflow.
[[nodiscard]] double logistic_loss(double margin, std::uint8_t label) noexcept;
/// d loss / d margin = sigmoid(margin) - y.
[[nodiscard]] double logistic_loss_slope(double margin, std::uint8_t label) noexcept;

/// Full objective loss(w.x + b) + (lambda / 2) * ||w||^2 for dense w.
[[nodiscard]] double regularized_loss(std::span<const double> weights, double intercept,
                                      SparseRowRef row, std::uint8_t label, double l2_lambda);
/// Analytic gradient of regularized_loss with respect to w, dense.
[[nodiscard]] std::vector<double> regularized_gradient(std::span<const double> weights,
                                                       double intercept, SparseRowRef row,
                                                       std::uint8_t label, double l2_lambda);

/// sigmoid(w.x + b).
[[nodiscard]] double predict_score(const LinearModel& model, SparseRowRef row);

/// Mean logistic loss of `model` over a labelled design.
[[nodiscard]] double mean_log_loss(const LinearModel& model, const RowSource& rows,
                                   std::span<const std::uint8_t> labels);

struct BinaryFit {
  LinearModel model;
  TrainStats stats;
};

/// Sequential SGD on L2-regularized logistic loss over `rows.cols()`
/// features. Regularization is lazy: a step only shrinks the coordinates the
/// example touches. Deterministic for a given config.
///
/// Throws EmptyDataError with no rows, ShapeError when label and row counts
/// differ and DivergenceError when a weight becomes non-finite.
[[nodiscard]] BinaryFit fit_binary(const RowSource& rows, std::span<const std::uint8_t> labels,
                                   const SgdConfig& config);

// ---------------------------------------------------------------------------
// Meta-learners

struct PipelineOptions {
  /// When training label j, drop feature j (only meaningful when X == Y).
  bool mask_target = false;
  /// Worker threads for binary relevance; 1 is fully sequential.
  std::size_t jobs = 1;
};

struct BrModel {
  std::vector<LinearModel> models;
  std::size_t num_features = 0;
  bool mask_target = false;

  [[nodiscard]] std::size_t num_labels() const noexcept { return models.size(); }
  friend bool operator==(const BrModel&, const BrModel&) = default;
};

struct BrFit {
  BrModel model;
  TrainStats stats;
  PipelineMeta meta;
};

/// One binary model per label column; label j is trained with seed + j.
/// Parallel workers reproduce the sequential result exactly.
[[nodiscard]] BrFit fit_br(const SparseMatrix& features, const SparseMatrix& labels,
                           const SgdConfig& config, const PipelineOptions& options = {});

struct DiagtOptions {
  std::optional<HashingConfig> hashing;
  std::optional<UndersampleConfig> undersampling;
  bool mask_target = false;
};

struct DiagtModel {
  LinearModel linear;
  std::size_t num_features = 0;
  std::size_t num_labels = 0;
  std::optional<HashingConfig> hashing;
  bool mask_target = false;

  friend bool operator==(const DiagtModel& a, const DiagtModel& b) {
    const bool same_hashing =
        a.hashing.has_value() == b.hashing.has_value() &&
        (!a.hashing || (a.hashing->bucket_ratio == b.hashing->bucket_ratio &&
                        a.hashing->seed == b.hashing->seed &&
                        a.hashing->is_signed == b.hashing->is_signed));
    return a.linear == b.linear && a.num_features == b.num_features &&
           a.num_labels == b.num_labels && same_hashing && a.mask_target == b.mask_target;
  }
};

struct DiagtFit {
  DiagtModel model;
  TrainStats stats;
  PipelineMeta meta;
};

/// expand -> undersample rows (optional) -> hash columns (optional) ->
/// fit_binary. The transformed design is streamed, never materialized.
/// Timing covers the whole pipeline; computing `meta` is not timed.
[[nodiscard]] DiagtFit fit_diagt(const SparseMatrix& features, const SparseMatrix& labels,
                                 const SgdConfig& config, const DiagtOptions& options = {});

/// k label scores for one instance with n features.
[[nodiscard]] std::vector<double> score_labels(const DiagtModel& model, SparseRowRef x);
[[nodiscard]] std::vector<double> score_labels(const BrModel& model, SparseRowRef x);

/// Scores for every row of X. The DiagT overload scores the stacked design
/// and folds it back to m x k.
[[nodiscard]] ScoreMatrix score_matrix(const DiagtModel& model, const SparseMatrix& features);
[[nodiscard]] ScoreMatrix score_matrix(const BrModel& model, const SparseMatrix& features);

// ---------------------------------------------------------------------------
// Persistence: versioned text format starting with the line "DIAGT1".

using AnyModel = std::variant<BrModel, DiagtModel>;

struct SavedModel {
  AnyModel model;
  /// Optional display names for the k labels (empty or exactly k entries).
  std::vector<std::string> label_names;
};

void save_model(std::ostream& out, const SavedModel& saved);
/// Throws ParseError on a malformed or foreign file.
[[nodiscard]] SavedModel load_model(std::istream& in);

void save_model_file(const std::string& path, const SavedModel& saved);
[[nodiscard]] SavedModel load_model_file(const std::string& path);

}  // namespace diagt

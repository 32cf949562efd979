#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diagt/data.hpp"
#include "diagt/eval.hpp"
#include "diagt/learner.hpp"

namespace diagt {

enum class Variant { br, diagt, diagt_hb, diagt_rus, diagt_rus_hb };

/// Parses "br", "diagt", "diagt-hb", "diagt-rus", "diagt-rus-hb".
/// Throws ConfigError otherwise.
[[nodiscard]] Variant parse_variant(const std::string& name);
[[nodiscard]] std::string variant_key(Variant variant);
/// Row label in reports, e.g. "DiagT-rus-hb0.9".
[[nodiscard]] std::string model_name(Variant variant, double hash_ratio);
[[nodiscard]] std::vector<Variant> all_variants();

struct BenchConfig {
  std::size_t folds = 3;
  std::size_t top_items = 100;
  SgdConfig sgd;
  double hash_ratio = 0.9;
  bool signed_hash = true;
  double undersample_ratio = 1.0;
  std::vector<std::size_t> k_list{1, 5, 10};
  std::uint64_t seed = 0;
  /// Drop training-period items from each user's ranking.
  bool exclude_seen = false;
  bool mask_target = false;
  /// Concurrent (variant, fold) cells; 1 is the sequential reference.
  std::size_t jobs = 1;
};

struct PrecisionSummary {
  std::size_t k = 0;
  ConfidenceInterval pct;
  std::vector<double> fold_values;
};

struct MetricsReport {
  std::string model_name;
  std::size_t nnz = 0;        // training design of the final fold
  double density_pct = 0.0;   // same design, percent
  double speed_seconds = 0.0; // mean fit wall-clock per fold
  std::vector<PrecisionSummary> precision_at;
};

/// Trains and evaluates one variant on prepared matrices; the building
/// block of run_benchmark, exposed for custom experiment loops.
struct CellResult {
  PipelineMeta meta;
  double fit_seconds = 0.0;
  std::vector<double> precision_pct;  // one per K in config.k_list
};
[[nodiscard]] CellResult evaluate_variant(Variant variant, const TrainTestMatrices& fold_data,
                                          const BenchConfig& config);

/// Expanding-window cross-validation of every requested variant over a log
/// (sorted internally). Rows follow the order of `variants`.
/// Throws ConfigError for fewer than two folds or an empty K list.
[[nodiscard]] std::vector<MetricsReport> run_benchmark(const InteractionLog& log,
                                                       std::span<const Variant> variants,
                                                       const BenchConfig& config);

/// Uniformly random scores on the same folds; the floor any model must clear.
[[nodiscard]] MetricsReport random_baseline(const InteractionLog& log, const BenchConfig& config);

/// "# key=value" provenance lines followed by
/// model,nnz,density_pct,speed_s,p@K,p@K_ci,...
void write_report_csv(std::ostream& out, std::span<const MetricsReport> reports,
                      std::span<const std::pair<std::string, std::string>> provenance = {});
/// Aligned plain-text table in the same column order.
void write_report_table(std::ostream& out, std::span<const MetricsReport> reports);

}  // namespace diagt

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "diagt/eval.hpp"
#include "diagt/sparse.hpp"

namespace diagt {

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;  // epoch seconds

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct InteractionLog {
  std::vector<Interaction> records;

  [[nodiscard]] std::size_t size() const noexcept { return records.size(); }
  [[nodiscard]] bool empty() const noexcept { return records.empty(); }
  [[nodiscard]] bool is_time_sorted() const noexcept;
  /// Stable sort by timestamp; equal timestamps keep input order.
  void sort_by_time();

  friend bool operator==(const InteractionLog&, const InteractionLog&) = default;
};

/// CSV with header `user_id,item_id,timestamp`. Records keep file order.
/// Throws IoError when the file cannot be opened, ParseError (with the line
/// number) for any malformed line.
[[nodiscard]] InteractionLog load_interactions(const std::string& path);
[[nodiscard]] InteractionLog read_interactions(std::istream& in);
void write_interactions(std::ostream& out, const InteractionLog& log);
void write_interactions_file(const std::string& path, const InteractionLog& log);

/// Bidirectional string <-> dense index map.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  /// Index of `name`, appending it when new.
  std::size_t add(const std::string& name);
  [[nodiscard]] const std::size_t* find(const std::string& name) const;
  /// Throws IndexError for unknown names.
  [[nodiscard]] std::size_t index_of(const std::string& name) const;
  [[nodiscard]] const std::string& name_of(std::size_t index) const { return names_.at(index); }
  [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }
  [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Features X (m x n) and labels Y (m x k) sharing one row index.
struct Dataset {
  SparseMatrix features;
  SparseMatrix labels;
  Vocabulary users;  // row index
  Vocabulary items;  // label columns (and feature columns when X == Y)
};

struct TrainTestMatrices {
  Dataset train;           // X == Y: binary users x vocabulary, train range only
  SparseMatrix test_truth; // same rows and columns, test range only
};

/// Builds the fold's matrices from a time-sorted log. The label vocabulary is
/// the `top_items` most frequent items of the train range (ties broken by
/// item id), ordered by popularity. Users are every user seen in the train
/// or test range, in order of first appearance; test-only users get empty
/// train rows. Throws ConfigError for an unsorted log or top_items == 0,
/// InsufficientDataError for an empty train range.
[[nodiscard]] TrainTestMatrices build_matrices(const InteractionLog& log, std::size_t top_items,
                                               const FoldSpec& fold);

/// Binary user x item matrix of every interaction in `log` whose item is in
/// `items`. Rows cover every user of the log in first-appearance order, so
/// users without vocabulary items get empty rows. X == Y.
[[nodiscard]] Dataset build_user_item_dataset(const InteractionLog& log, const Vocabulary& items);

struct SyntheticConfig {
  std::size_t num_users = 1000;
  std::size_t num_items = 100;
  std::uint64_t seed = 0;
  /// Power-law exponent of item popularity; 0 is uniform.
  double popularity_skew = 1.0;
  std::size_t affinity_clusters = 5;
  /// Mean interactions per user (geometric, at least one).
  double mean_interactions = 6.0;
  /// Probability that an interaction is drawn from the user's cluster items.
  double cluster_affinity = 0.8;
  std::int64_t start_time = 1'600'000'000;
  std::int64_t time_span = 365 * 86'400;
};

/// Clustered power-law interaction log, time-sorted, deterministic per
/// config. A user never interacts with the same item twice.
/// Throws ConfigError for invalid parameters.
[[nodiscard]] InteractionLog generate_synthetic(const SyntheticConfig& config);

/// LibSVM-style multi-label file: "l1,l2 f:v f:v" per line; a line that
/// starts with whitespace or a feature has no labels. An optional first
/// line "<rows> <features> <labels>" fixes the dimensions. Throws ParseError
/// with the line number for malformed lines or repeated features.
[[nodiscard]] Dataset load_multilabel_file(const std::string& path);
[[nodiscard]] Dataset read_multilabel(std::istream& in);

}  // namespace diagt

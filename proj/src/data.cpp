#include "diagt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "diagt/error.hpp"
#include "diagt/random.hpp"

namespace diagt {

namespace {

constexpr std::string_view kInteractionHeader = "user_id,item_id,timestamp";

void strip_line_ending(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && !text.empty();
}

/// Sorted, de-duplicated binary matrix from (row, col) pairs.
SparseMatrix binary_matrix(std::size_t rows, std::size_t cols,
                           std::vector<std::pair<std::size_t, std::size_t>> cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  std::vector<Triplet> triplets;
  triplets.reserve(cells.size());
  for (const auto& [r, c] : cells) triplets.push_back({r, c, 1.0});
  return SparseMatrix::from_triplets(rows, cols, triplets);
}

}  // namespace

bool InteractionLog::is_time_sorted() const noexcept {
  return std::is_sorted(records.begin(), records.end(),
                        [](const Interaction& a, const Interaction& b) {
                          return a.timestamp < b.timestamp;
                        });
}

void InteractionLog::sort_by_time() {
  std::stable_sort(records.begin(), records.end(),
                   [](const Interaction& a, const Interaction& b) {
                     return a.timestamp < b.timestamp;
                   });
}

InteractionLog read_interactions(std::istream& in) {
  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return log;
  ++line_no;
  strip_line_ending(line);
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != kInteractionHeader) {
    throw ParseError(line_no, fmt::format("expected header '{}'", kInteractionHeader));
  }

  while (std::getline(in, line)) {
    ++line_no;
    strip_line_ending(line);
    const std::string_view view(line);
    const auto c1 = view.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : view.find(',', c1 + 1);
    if (c2 == std::string_view::npos || view.find(',', c2 + 1) != std::string_view::npos) {
      throw ParseError(line_no, "expected 3 comma-separated fields");
    }
    Interaction rec{std::string(view.substr(0, c1)), std::string(view.substr(c1 + 1, c2 - c1 - 1)),
                    0};
    if (rec.user_id.empty() || rec.item_id.empty()) throw ParseError(line_no, "empty id");
    const std::string_view ts = view.substr(c2 + 1);
    if (!parse_number(ts, rec.timestamp) || rec.timestamp < 0) {
      throw ParseError(line_no, fmt::format("timestamp '{}' is not a non-negative integer", ts));
    }
    log.records.push_back(std::move(rec));
  }
  return log;
}

InteractionLog load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path));
  return read_interactions(in);
}

void write_interactions(std::ostream& out, const InteractionLog& log) {
  out << kInteractionHeader << '\n';
  for (const auto& r : log.records) fmt::print(out, "{},{},{}\n", r.user_id, r.item_id, r.timestamp);
  if (!out) throw IoError("failed writing interactions");
}

void write_interactions_file(const std::string& path, const InteractionLog& log) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path));
  write_interactions(out, log);
}

Vocabulary::Vocabulary(std::vector<std::string> names) {
  for (auto& name : names) {
    if (index_.contains(name)) throw DuplicateEntryError(fmt::format("duplicate name '{}'", name));
    add(name);
  }
}

std::size_t Vocabulary::add(const std::string& name) {
  auto [it, inserted] = index_.try_emplace(name, names_.size());
  if (inserted) names_.push_back(name);
  return it->second;
}

const std::size_t* Vocabulary::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &it->second;
}

std::size_t Vocabulary::index_of(const std::string& name) const {
  if (const auto* idx = find(name)) return *idx;
  throw IndexError(fmt::format("unknown name '{}'", name));
}

TrainTestMatrices build_matrices(const InteractionLog& log, std::size_t top_items,
                                 const FoldSpec& fold) {
  if (top_items == 0) throw ConfigError("top_items must be at least 1");
  if (!log.is_time_sorted()) throw ConfigError("interaction log must be sorted by timestamp");
  if (fold.train.end > log.size() || fold.test.end > log.size() ||
      fold.train.begin > fold.train.end || fold.test.begin > fold.test.end) {
    throw ConfigError("fold ranges exceed the interaction log");
  }
  if (fold.train.empty()) throw InsufficientDataError("empty training range");

  std::unordered_map<std::string, std::size_t> counts;
  for (std::size_t p = fold.train.begin; p < fold.train.end; ++p) ++counts[log.records[p].item_id];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > top_items) ranked.resize(top_items);
  std::vector<std::string> names;
  names.reserve(ranked.size());
  for (auto& [name, count] : ranked) names.push_back(std::move(name));

  TrainTestMatrices out;
  Dataset& train = out.train;
  train.items = Vocabulary(std::move(names));
  for (const IndexRange range : {fold.train, fold.test}) {
    for (std::size_t p = range.begin; p < range.end; ++p) train.users.add(log.records[p].user_id);
  }

  auto cells_in = [&](IndexRange range) {
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t p = range.begin; p < range.end; ++p) {
      const auto& rec = log.records[p];
      if (const auto* col = train.items.find(rec.item_id)) {
        cells.emplace_back(train.users.index_of(rec.user_id), *col);
      }
    }
    return cells;
  };
  const std::size_t m = train.users.size();
  const std::size_t k = train.items.size();
  train.features = binary_matrix(m, k, cells_in(fold.train));
  train.labels = train.features;
  out.test_truth = binary_matrix(m, k, cells_in(fold.test));
  return out;
}

Dataset build_user_item_dataset(const InteractionLog& log, const Vocabulary& items) {
  Dataset ds;
  ds.items = items;
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (const auto& rec : log.records) {
    const std::size_t row = ds.users.add(rec.user_id);
    if (const auto* col = items.find(rec.item_id)) cells.emplace_back(row, *col);
  }
  ds.features = binary_matrix(ds.users.size(), items.size(), std::move(cells));
  ds.labels = ds.features;
  return ds;
}

namespace {

/// Index drawn from unnormalized cumulative weights.
std::size_t draw_cumulative(std::span<const double> cumulative, Rng& rng) {
  const double target = uniform01(rng) * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

std::string padded_id(char prefix, std::size_t value, std::size_t width) {
  return fmt::format("{}{:0{}}", prefix, value, width);
}

}  // namespace

InteractionLog generate_synthetic(const SyntheticConfig& config) {
  if (config.num_users == 0 || config.num_items == 0 || config.affinity_clusters == 0) {
    throw ConfigError("synthetic data needs at least one user, item and cluster");
  }
  if (!(config.popularity_skew >= 0.0) || !std::isfinite(config.popularity_skew)) {
    throw ConfigError("popularity skew must be a non-negative number");
  }
  if (!(config.mean_interactions >= 1.0) || !(config.cluster_affinity >= 0.0) ||
      !(config.cluster_affinity <= 1.0) || config.time_span <= 0 || config.start_time < 0) {
    throw ConfigError("invalid synthetic interaction parameters");
  }

  Rng rng(config.seed);
  const std::size_t n = config.num_items;
  const std::size_t clusters = config.affinity_clusters;

  // Popularity rank and cluster membership are independent random orders.
  std::vector<std::size_t> popularity_rank = iota_indices(n);
  shuffle_in_place(std::span<std::size_t>(popularity_rank), rng);
  std::vector<std::size_t> cluster_order = iota_indices(n);
  shuffle_in_place(std::span<std::size_t>(cluster_order), rng);

  std::vector<double> weight(n);
  for (std::size_t item = 0; item < n; ++item) {
    weight[item] = std::pow(static_cast<double>(popularity_rank[item] + 1), -config.popularity_skew);
  }
  std::vector<double> global_cum(n);
  std::partial_sum(weight.begin(), weight.end(), global_cum.begin());

  std::vector<std::vector<std::size_t>> cluster_items(clusters);
  for (std::size_t pos = 0; pos < n; ++pos) {
    cluster_items[pos % clusters].push_back(cluster_order[pos]);
  }
  std::vector<std::vector<double>> cluster_cum(clusters);
  for (std::size_t c = 0; c < clusters; ++c) {
    double acc = 0.0;
    for (std::size_t item : cluster_items[c]) cluster_cum[c].push_back(acc += weight[item]);
  }

  const std::size_t user_width = fmt::formatted_size("{}", config.num_users - 1);
  const std::size_t item_width = fmt::formatted_size("{}", n - 1);
  const double stop_prob = 1.0 / config.mean_interactions;

  InteractionLog log;
  std::vector<std::uint8_t> taken(n);
  for (std::size_t u = 0; u < config.num_users; ++u) {
    const std::size_t cluster = uniform_below(rng, clusters);
    std::size_t count = 1;
    if (stop_prob < 1.0) {
      const double draw = 1.0 - uniform01(rng);  // (0, 1]
      count += static_cast<std::size_t>(std::floor(std::log(draw) / std::log1p(-stop_prob)));
    }
    count = std::min(count, n);

    std::fill(taken.begin(), taken.end(), 0);
    const std::string user = padded_id('u', u, user_width);
    for (std::size_t drawn = 0, attempts = 0; drawn < count && attempts < 64 * count; ++attempts) {
      const bool from_cluster =
          !cluster_items[cluster].empty() && uniform01(rng) < config.cluster_affinity;
      const std::size_t item = from_cluster
                                   ? cluster_items[cluster][draw_cumulative(cluster_cum[cluster], rng)]
                                   : draw_cumulative(global_cum, rng);
      if (taken[item]) continue;
      taken[item] = 1;
      ++drawn;
      const auto offset = static_cast<std::int64_t>(
          uniform_below(rng, static_cast<std::uint64_t>(config.time_span)));
      log.records.push_back({user, padded_id('i', item, item_width), config.start_time + offset});
    }
  }
  log.sort_by_time();
  return log;
}

Dataset read_multilabel(std::istream& in) {
  std::vector<std::pair<std::size_t, std::size_t>> label_cells;
  std::vector<Triplet> features;
  std::size_t rows = 0;
  std::size_t max_feature = 0;
  std::size_t max_label = 0;
  bool any_feature = false;
  bool any_label = false;
  std::size_t declared_rows = 0, declared_features = 0, declared_labels = 0;
  bool has_header = false;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_line_ending(line);

    if (line_no == 1 && line.find_first_of(":,") == std::string::npos) {
      std::istringstream header(line);
      std::string a, b, c, extra;
      if (header >> a >> b >> c && !(header >> extra) && parse_number(a, declared_rows) &&
          parse_number(b, declared_features) && parse_number(c, declared_labels)) {
        has_header = true;
        continue;
      }
    }

    const std::size_t row = rows++;
    std::istringstream tokens(line);
    std::string token;
    const bool starts_blank = line.empty() || std::isspace(static_cast<unsigned char>(line[0]));
    bool first = true;
    std::vector<std::size_t> seen_features;
    std::vector<std::size_t> seen_labels;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (first && !starts_blank && colon == std::string::npos) {
        std::string_view rest(token);
        while (!rest.empty()) {
          const auto comma = rest.find(',');
          const auto piece = rest.substr(0, comma);
          std::size_t label = 0;
          if (!parse_number(piece, label)) {
            throw ParseError(line_no, fmt::format("bad label '{}'", piece));
          }
          seen_labels.push_back(label);
          rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
          if (comma != std::string_view::npos && rest.empty()) {
            throw ParseError(line_no, "trailing comma in label list");
          }
        }
        first = false;
        continue;
      }
      first = false;
      if (colon == std::string::npos) {
        throw ParseError(line_no, fmt::format("expected index:value, got '{}'", token));
      }
      std::size_t index = 0;
      double value = 0.0;
      const std::string_view tv(token);
      if (!parse_number(tv.substr(0, colon), index) || !parse_number(tv.substr(colon + 1), value) ||
          !std::isfinite(value)) {
        throw ParseError(line_no, fmt::format("bad feature '{}'", token));
      }
      seen_features.push_back(index);
      if (value != 0.0) features.push_back({row, index, value});
      max_feature = std::max(max_feature, index);
      any_feature = true;
    }

    std::sort(seen_features.begin(), seen_features.end());
    if (std::adjacent_find(seen_features.begin(), seen_features.end()) != seen_features.end()) {
      throw ParseError(line_no, "feature index repeated");
    }
    std::sort(seen_labels.begin(), seen_labels.end());
    if (std::adjacent_find(seen_labels.begin(), seen_labels.end()) != seen_labels.end()) {
      throw ParseError(line_no, "label repeated");
    }
    for (std::size_t label : seen_labels) {
      label_cells.emplace_back(row, label);
      max_label = std::max(max_label, label);
      any_label = true;
    }
  }

  std::size_t n = any_feature ? max_feature + 1 : 0;
  std::size_t k = any_label ? max_label + 1 : 0;
  if (has_header) {
    if (declared_rows != rows || n > declared_features || k > declared_labels) {
      throw ParseError(1, "header dimensions do not match the data");
    }
    n = declared_features;
    k = declared_labels;
  }

  Dataset ds;
  ds.features = SparseMatrix::from_triplets(rows, n, features);
  ds.labels = binary_matrix(rows, k, std::move(label_cells));
  for (std::size_t r = 0; r < rows; ++r) ds.users.add(std::to_string(r));
  for (std::size_t j = 0; j < k; ++j) ds.items.add(std::to_string(j));
  return ds;
}

Dataset load_multilabel_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path));
  return read_multilabel(in);
}

}  // namespace diagt

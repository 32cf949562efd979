#include "diagt/learner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "diagt/error.hpp"
#include "diagt/random.hpp"

namespace diagt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr Index kNoColumn = std::numeric_limits<Index>::max();

/// `ref` without logical column `col`. Copies into `scratch` only when the
/// column is present.
SparseRowRef drop_column(SparseRowRef ref, Index col, SparseVector& scratch) {
  if (col == kNoColumn || col < ref.offset) return ref;
  const Index local = col - ref.offset;
  auto it = std::lower_bound(ref.indices.begin(), ref.indices.end(), local);
  if (it == ref.indices.end() || *it != local) return ref;
  const auto skip = static_cast<std::size_t>(it - ref.indices.begin());
  scratch.clear();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (i == skip) continue;
    scratch.indices.push_back(ref.col(i));
    scratch.values.push_back(ref.value(i));
  }
  return scratch.ref();
}

/// Block-diagonal design where block j hides base column j.
class TargetMaskedRows final : public RowSource {
 public:
  explicit TargetMaskedRows(const BlockDiagView& view) : view_(&view) {}

  std::size_t rows() const override { return view_->rows(); }
  std::size_t cols() const override { return view_->cols(); }
  SparseRowRef row(std::size_t r, SparseVector& scratch) const override {
    const SparseRowRef ref = view_->view_row(r);
    const std::size_t j = view_->block_of(r);
    const std::size_t n = view_->base().cols();
    return drop_column(ref, j < n ? j * n + j : kNoColumn, scratch);
  }

 private:
  const BlockDiagView* view_;
};

/// Matrix rows with one column hidden.
class ColumnMaskedRows final : public RowSource {
 public:
  ColumnMaskedRows(const SparseMatrix& matrix, Index masked) : matrix_(&matrix), masked_(masked) {}

  std::size_t rows() const override { return matrix_->rows(); }
  std::size_t cols() const override { return matrix_->cols(); }
  SparseRowRef row(std::size_t r, SparseVector& scratch) const override {
    return drop_column(matrix_->row(r), masked_, scratch);
  }

 private:
  const SparseMatrix* matrix_;
  Index masked_;
};

PipelineMeta measure(const RowSource& design) {
  PipelineMeta meta{design.rows(), design.cols(), 0, 0.0};
  SparseVector scratch;
  for (std::size_t r = 0; r < design.rows(); ++r) meta.nnz += design.row(r, scratch).size();
  const double cells = static_cast<double>(meta.rows) * static_cast<double>(meta.cols);
  meta.density = cells > 0 ? static_cast<double>(meta.nnz) / cells : 0.0;
  return meta;
}

void check_label_vector(std::span<const std::uint8_t> labels) {
  for (auto y : labels) {
    if (y > 1) throw ShapeError("labels must be 0/1");
  }
}

}  // namespace

void SgdConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError(fmt::format("learning rate {} must be positive", learning_rate));
  }
  if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) {
    throw ConfigError(fmt::format("l2 lambda {} must be non-negative", l2_lambda));
  }
}

double SgdConfig::rate_at(std::size_t step) const noexcept {
  if (lr_schedule == LrSchedule::constant) return learning_rate;
  return learning_rate / (1.0 + learning_rate * l2_lambda * static_cast<double>(step));
}

double LinearModel::margin(SparseRowRef row) const {
  double m = has_intercept ? intercept : 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const Index c = row.col(i);
    if (c >= weights.size()) {
      throw IndexError(fmt::format("feature {} outside model dimension {}", c, weights.size()));
    }
    m += weights[c] * row.value(i);
  }
  return m;
}

double sigmoid(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logistic_loss(double margin, std::uint8_t label) noexcept {
  const double z = label != 0 ? margin : -margin;
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double logistic_loss_slope(double margin, std::uint8_t label) noexcept {
  return sigmoid(margin) - (label != 0 ? 1.0 : 0.0);
}

double regularized_loss(std::span<const double> weights, double intercept, SparseRowRef row,
                        std::uint8_t label, double l2_lambda) {
  LinearModel view{{weights.begin(), weights.end()}, intercept, true};
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return logistic_loss(view.margin(row), label) + 0.5 * l2_lambda * sq;
}

std::vector<double> regularized_gradient(std::span<const double> weights, double intercept,
                                         SparseRowRef row, std::uint8_t label, double l2_lambda) {
  LinearModel view{{weights.begin(), weights.end()}, intercept, true};
  const double slope = logistic_loss_slope(view.margin(row), label);
  std::vector<double> grad(weights.size());
  for (std::size_t c = 0; c < weights.size(); ++c) grad[c] = l2_lambda * weights[c];
  for (std::size_t i = 0; i < row.size(); ++i) grad[row.col(i)] += slope * row.value(i);
  return grad;
}

double predict_score(const LinearModel& model, SparseRowRef row) {
  return sigmoid(model.margin(row));
}

double mean_log_loss(const LinearModel& model, const RowSource& rows,
                     std::span<const std::uint8_t> labels) {
  if (rows.rows() != labels.size()) throw ShapeError("label count differs from row count");
  if (labels.empty()) throw EmptyDataError("no rows to evaluate");
  SparseVector scratch;
  double total = 0.0;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    total += logistic_loss(model.margin(rows.row(r, scratch)), labels[r]);
  }
  return total / static_cast<double>(labels.size());
}

BinaryFit fit_binary(const RowSource& rows, std::span<const std::uint8_t> labels,
                     const SgdConfig& config) {
  config.validate();
  const auto start = Clock::now();
  const std::size_t n_rows = rows.rows();
  if (n_rows == 0) throw EmptyDataError("cannot train on zero examples");
  if (labels.size() != n_rows) {
    throw ShapeError(fmt::format("{} labels for {} rows", labels.size(), n_rows));
  }
  check_label_vector(labels);

  const std::size_t dim = rows.cols();
  LinearModel model{std::vector<double>(dim, 0.0), 0.0, config.use_intercept};
  double* w = model.weights.data();
  const double lambda = config.l2_lambda;

  Rng rng(config.seed);
  std::vector<std::size_t> order = iota_indices(n_rows);
  SparseVector scratch;
  TrainStats stats;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) shuffle_in_place(std::span<std::size_t>(order), rng);
    double loss_sum = 0.0;
    for (const std::size_t r : order) {
      const SparseRowRef x = rows.row(r, scratch);
      const double m = model.margin(x);
      const std::uint8_t y = labels[r];
      loss_sum += logistic_loss(m, y);
      const double slope = logistic_loss_slope(m, y);
      const double eta = config.rate_at(step++);

      bool finite = true;
      for (std::size_t i = 0; i < x.size(); ++i) {
        double& wc = w[x.col(i)];
        wc -= eta * (slope * x.value(i) + lambda * wc);
        finite = finite && std::isfinite(wc);
      }
      if (model.has_intercept) {
        model.intercept -= eta * slope;
        finite = finite && std::isfinite(model.intercept);
      }
      if (!finite) {
        throw DivergenceError(fmt::format(
            "non-finite weight in epoch {} at example {}; lower the learning rate (now {})",
            epoch + 1, r, config.learning_rate));
      }
    }
    stats.examples_seen += n_rows;
    stats.epoch_mean_loss.push_back(loss_sum / static_cast<double>(n_rows));
  }
  stats.final_mean_loss = stats.epoch_mean_loss.back();
  stats.wall_clock_seconds = seconds_since(start);
  return {std::move(model), std::move(stats)};
}

BrFit fit_br(const SparseMatrix& features, const SparseMatrix& labels, const SgdConfig& config,
             const PipelineOptions& options) {
  config.validate();
  if (features.rows() != labels.rows()) {
    throw ShapeError(fmt::format("X has {} rows but Y has {}", features.rows(), labels.rows()));
  }
  if (!labels.is_binary()) throw ShapeError("label matrix must be binary");
  const auto start = Clock::now();
  const std::size_t k = labels.cols();

  std::vector<BinaryFit> fits(k);
  auto fit_label = [&](std::size_t j) {
    SgdConfig label_config = config;
    label_config.seed = config.seed + j;
    const std::vector<std::uint8_t> column = labels.binary_column(j);
    if (options.mask_target) {
      fits[j] = fit_binary(ColumnMaskedRows(features, j), column, label_config);
    } else {
      fits[j] = fit_binary(MatrixRows(features), column, label_config);
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(options.jobs, 1), std::max<std::size_t>(k, 1));
  if (workers <= 1) {
    for (std::size_t j = 0; j < k; ++j) fit_label(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t j = next++; j < k; j = next++) fit_label(j);
          } catch (...) {
            errors[w] = std::current_exception();
            next = k;
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  BrFit out;
  out.model.num_features = features.cols();
  out.model.mask_target = options.mask_target;
  double loss = 0.0;
  for (auto& fit : fits) {
    out.stats.examples_seen += fit.stats.examples_seen;
    loss += fit.stats.final_mean_loss;
    out.model.models.push_back(std::move(fit.model));
  }
  out.stats.final_mean_loss = k > 0 ? loss / static_cast<double>(k) : 0.0;
  out.stats.wall_clock_seconds = seconds_since(start);
  const MatrixStats xs = stats(features);
  out.meta = {features.rows(), features.cols(), xs.nnz, xs.density};
  return out;
}

DiagtFit fit_diagt(const SparseMatrix& features, const SparseMatrix& labels,
                   const SgdConfig& config, const DiagtOptions& options) {
  config.validate();
  const auto start = Clock::now();
  const Expansion expansion = expand(features, labels);

  const RowSource* design = &expansion.design;
  std::optional<TargetMaskedRows> masked;
  if (options.mask_target) design = &masked.emplace(expansion.design);

  std::span<const std::uint8_t> targets = expansion.labels.values();
  std::vector<std::size_t> kept;
  std::vector<std::uint8_t> kept_targets;
  std::optional<SubsetRows> subset;
  if (options.undersampling) {
    kept = undersample(expansion.labels, *options.undersampling);
    kept_targets.reserve(kept.size());
    for (std::size_t r : kept) kept_targets.push_back(targets[r]);
    targets = kept_targets;
    design = &subset.emplace(*design, kept);
  }

  std::optional<FeatureHasher> hasher;
  std::optional<HashedRows> hashed;
  if (options.hashing) {
    hasher.emplace(*options.hashing, design->cols());
    design = &hashed.emplace(*design, *hasher);
  }

  BinaryFit fit = fit_binary(*design, targets, config);
  fit.stats.wall_clock_seconds = seconds_since(start);

  DiagtFit out;
  out.model = {std::move(fit.model), features.cols(), labels.cols(), options.hashing,
               options.mask_target};
  out.stats = std::move(fit.stats);
  if (design == &expansion.design) {
    const MatrixStats vs = stats(expansion.design);
    out.meta = {design->rows(), design->cols(), vs.nnz, vs.density};
  } else {
    out.meta = measure(*design);
  }
  return out;
}

std::vector<double> score_labels(const DiagtModel& model, SparseRowRef x) {
  const std::size_t n = model.num_features;
  const std::size_t k = model.num_labels;
  std::optional<FeatureHasher> hasher;
  if (model.hashing) hasher.emplace(*model.hashing, n * k, /*tabulate=*/false);

  std::vector<double> scores(k);
  SparseVector scratch;
  for (std::size_t j = 0; j < k; ++j) {
    SparseRowRef shifted = x;
    shifted.offset = x.offset + j * n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x.col(i) >= n) {
        throw IndexError(fmt::format("feature {} outside {} features", x.col(i), n));
      }
    }
    if (model.mask_target && j < n) shifted = drop_column(shifted, j * n + j, scratch);
    if (hasher) {
      hasher->hash(shifted, scratch);
      shifted = scratch.ref();
    }
    scores[j] = predict_score(model.linear, shifted);
  }
  return scores;
}

std::vector<double> score_labels(const BrModel& model, SparseRowRef x) {
  std::vector<double> scores(model.num_labels());
  SparseVector scratch;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const SparseRowRef row = model.mask_target ? drop_column(x, j, scratch) : x;
    scores[j] = predict_score(model.models[j], row);
  }
  return scores;
}

ScoreMatrix score_matrix(const DiagtModel& model, const SparseMatrix& features) {
  if (features.cols() != model.num_features) {
    throw ShapeError(fmt::format("model expects {} features, matrix has {}", model.num_features,
                                 features.cols()));
  }
  const std::size_t m = features.rows();
  const std::size_t k = model.num_labels;
  if (m == 0) return ScoreMatrix(0, k);

  const BlockDiagView view(features, k);
  const RowSource* design = &view;
  std::optional<TargetMaskedRows> masked;
  if (model.mask_target) design = &masked.emplace(view);
  std::optional<FeatureHasher> hasher;
  std::optional<HashedRows> hashed;
  if (model.hashing) {
    hasher.emplace(*model.hashing, design->cols());
    design = &hashed.emplace(*design, *hasher);
  }

  std::vector<double> stacked(m * k);
  SparseVector scratch;
  for (std::size_t r = 0; r < stacked.size(); ++r) {
    stacked[r] = predict_score(model.linear, design->row(r, scratch));
  }
  return fold_back(stacked, m, k);
}

ScoreMatrix score_matrix(const BrModel& model, const SparseMatrix& features) {
  if (features.cols() != model.num_features) {
    throw ShapeError(fmt::format("model expects {} features, matrix has {}", model.num_features,
                                 features.cols()));
  }
  ScoreMatrix out(features.rows(), model.num_labels());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto scores = score_labels(model, features.row(i));
    std::copy(scores.begin(), scores.end(), out.row(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kMagic = "DIAGT1";

void write_linear(std::ostream& out, const LinearModel& model) {
  fmt::print(out, "linear {} {} {}\n", model.feature_dim(), model.has_intercept ? 1 : 0,
             model.intercept);
  for (double w : model.weights) fmt::print(out, "{}\n", w);
}

class ModelReader {
 public:
  explicit ModelReader(std::istream& in) : in_(in) {}

  std::string line() {
    std::string s;
    if (!std::getline(in_, s)) throw ParseError(line_no_ + 1, "unexpected end of model file");
    ++line_no_;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  }

  /// Line of the form "<key> <fields...>"; returns the fields.
  std::istringstream keyed(const std::string& key) {
    const std::string s = line();
    std::istringstream fields(s);
    std::string found;
    fields >> found;
    if (found != key) fail(fmt::format("expected '{}', found '{}'", key, found));
    return fields;
  }

  template <typename T>
  T read(std::istringstream& fields, const char* what) {
    T value{};
    if (!(fields >> value)) fail(fmt::format("bad {}", what));
    return value;
  }

  double number() {
    const std::string s = line();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
      fail(fmt::format("bad weight '{}'", s));
    }
    return v;
  }

  LinearModel linear() {
    auto fields = keyed("linear");
    const auto dim = read<std::size_t>(fields, "feature_dim");
    const auto has_intercept = read<int>(fields, "intercept flag");
    std::string intercept_text;
    fields >> intercept_text;
    LinearModel model;
    model.has_intercept = has_intercept != 0;
    model.intercept = std::strtod(intercept_text.c_str(), nullptr);
    model.weights.reserve(dim);
    for (std::size_t c = 0; c < dim; ++c) model.weights.push_back(number());
    return model;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_no_, what); }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

}  // namespace

void save_model(std::ostream& out, const SavedModel& saved) {
  out << kMagic << '\n';
  std::visit(
      [&](const auto& model) {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, BrModel>) {
          fmt::print(out, "kind br\nnum_features {}\nnum_labels {}\nmask_target {}\n",
                     model.num_features, model.num_labels(), model.mask_target ? 1 : 0);
          out << "hashing none\n";
        } else {
          fmt::print(out, "kind diagt\nnum_features {}\nnum_labels {}\nmask_target {}\n",
                     model.num_features, model.num_labels, model.mask_target ? 1 : 0);
          if (model.hashing) {
            fmt::print(out, "hashing {} {} {}\n", model.hashing->bucket_ratio, model.hashing->seed,
                       model.hashing->is_signed ? 1 : 0);
          } else {
            out << "hashing none\n";
          }
        }
      },
      saved.model);
  fmt::print(out, "labels {}\n", saved.label_names.size());
  for (const auto& name : saved.label_names) out << name << '\n';
  std::visit(
      [&](const auto& model) {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, BrModel>) {
          for (const auto& m : model.models) write_linear(out, m);
        } else {
          write_linear(out, model.linear);
        }
      },
      saved.model);
  if (!out) throw IoError("failed writing model");
}

SavedModel load_model(std::istream& in) {
  ModelReader reader(in);
  if (reader.line() != kMagic) reader.fail("missing DIAGT1 header");

  auto kind_fields = reader.keyed("kind");
  const auto kind = reader.read<std::string>(kind_fields, "kind");
  if (kind != "br" && kind != "diagt") reader.fail(fmt::format("unknown model kind '{}'", kind));
  auto nf = reader.keyed("num_features");
  const auto num_features = reader.read<std::size_t>(nf, "num_features");
  auto nl = reader.keyed("num_labels");
  const auto num_labels = reader.read<std::size_t>(nl, "num_labels");
  auto mt = reader.keyed("mask_target");
  const bool mask_target = reader.read<int>(mt, "mask_target") != 0;

  std::optional<HashingConfig> hashing;
  auto hf = reader.keyed("hashing");
  const auto first = reader.read<std::string>(hf, "hashing");
  if (first != "none") {
    HashingConfig h;
    h.bucket_ratio = std::strtod(first.c_str(), nullptr);
    h.seed = reader.read<std::uint64_t>(hf, "hash seed");
    h.is_signed = reader.read<int>(hf, "hash sign flag") != 0;
    hashing = h;
  }

  SavedModel saved;
  auto lf = reader.keyed("labels");
  const auto num_names = reader.read<std::size_t>(lf, "label count");
  if (num_names != 0 && num_names != num_labels) reader.fail("label name count differs from k");
  for (std::size_t j = 0; j < num_names; ++j) saved.label_names.push_back(reader.line());

  if (kind == "br") {
    BrModel model{{}, num_features, mask_target};
    for (std::size_t j = 0; j < num_labels; ++j) {
      model.models.push_back(reader.linear());
      if (model.models.back().feature_dim() != num_features) {
        reader.fail("BR weight vector length differs from num_features");
      }
    }
    saved.model = std::move(model);
  } else {
    DiagtModel model{reader.linear(), num_features, num_labels, hashing, mask_target};
    const std::size_t expected =
        hashing ? bucket_count(hashing->bucket_ratio, num_features * num_labels)
                : num_features * num_labels;
    if (model.linear.feature_dim() != expected) {
      reader.fail(fmt::format("DiagT weight vector has {} entries, expected {}",
                              model.linear.feature_dim(), expected));
    }
    saved.model = std::move(model);
  }
  return saved;
}

void save_model_file(const std::string& path, const SavedModel& saved) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path));
  save_model(out, saved);
}

SavedModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path));
  return load_model(in);
}

}  // namespace diagt

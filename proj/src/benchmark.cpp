#include "diagt/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "diagt/error.hpp"
#include "diagt/random.hpp"

namespace diagt {

Variant parse_variant(const std::string& name) {
  for (Variant v : all_variants()) {
    if (variant_key(v) == name) return v;
  }
  throw ConfigError(fmt::format(
      "unknown variant '{}' (expected br, diagt, diagt-hb, diagt-rus or diagt-rus-hb)", name));
}

std::string variant_key(Variant variant) {
  switch (variant) {
    case Variant::br: return "br";
    case Variant::diagt: return "diagt";
    case Variant::diagt_hb: return "diagt-hb";
    case Variant::diagt_rus: return "diagt-rus";
    case Variant::diagt_rus_hb: return "diagt-rus-hb";
  }
  return "?";
}

std::string model_name(Variant variant, double hash_ratio) {
  switch (variant) {
    case Variant::br: return "BR";
    case Variant::diagt: return "DiagT";
    case Variant::diagt_hb: return fmt::format("DiagT-hb{}", hash_ratio);
    case Variant::diagt_rus: return "DiagT-rus";
    case Variant::diagt_rus_hb: return fmt::format("DiagT-rus-hb{}", hash_ratio);
  }
  return "?";
}

std::vector<Variant> all_variants() {
  return {Variant::br, Variant::diagt, Variant::diagt_hb, Variant::diagt_rus,
          Variant::diagt_rus_hb};
}

namespace {

std::string with_thousands(std::size_t n) {
  std::string digits = std::to_string(n);
  for (std::size_t pos = digits.size(); pos > 3; pos -= 3) digits.insert(pos - 3, ",");
  return digits;
}

void validate(const BenchConfig& config) {
  if (config.folds < 2) {
    throw ConfigError("benchmark needs at least two folds for confidence intervals");
  }
  if (config.k_list.empty()) throw ConfigError("empty K list");
  config.sgd.validate();
}

std::vector<double> precisions(const ScoreMatrix& scores, const TrainTestMatrices& fold_data,
                               const BenchConfig& config) {
  const SparseMatrix* exclude = config.exclude_seen ? &fold_data.train.features : nullptr;
  std::vector<double> out;
  for (std::size_t k : config.k_list) {
    out.push_back(precision_at_k(scores, fold_data.test_truth, k, exclude));
  }
  return out;
}

std::vector<TrainTestMatrices> prepare_folds(const InteractionLog& log, const BenchConfig& config,
                                             InteractionLog& sorted) {
  sorted = log;
  sorted.sort_by_time();
  std::vector<TrainTestMatrices> folds;
  for (const FoldSpec& spec : temporal_split(sorted.size(), config.folds)) {
    folds.push_back(build_matrices(sorted, config.top_items, spec));
  }
  return folds;
}

MetricsReport summarize(std::string name, const std::vector<CellResult>& cells,
                        const BenchConfig& config) {
  MetricsReport report;
  report.model_name = std::move(name);
  report.nnz = cells.back().meta.nnz;
  report.density_pct = 100.0 * cells.back().meta.density;
  double seconds = 0.0;
  for (const auto& c : cells) seconds += c.fit_seconds;
  report.speed_seconds = seconds / static_cast<double>(cells.size());
  for (std::size_t q = 0; q < config.k_list.size(); ++q) {
    PrecisionSummary summary;
    summary.k = config.k_list[q];
    for (const auto& c : cells) summary.fold_values.push_back(c.precision_pct[q]);
    summary.pct = aggregate_ci(summary.fold_values);
    report.precision_at.push_back(std::move(summary));
  }
  return report;
}

}  // namespace

CellResult evaluate_variant(Variant variant, const TrainTestMatrices& fold_data,
                            const BenchConfig& config) {
  const Dataset& train = fold_data.train;
  SgdConfig sgd = config.sgd;
  sgd.seed = config.seed;

  CellResult cell;
  ScoreMatrix scores;
  if (variant == Variant::br) {
    BrFit fit = fit_br(train.features, train.labels, sgd, {config.mask_target, 1});
    cell.meta = fit.meta;
    cell.fit_seconds = fit.stats.wall_clock_seconds;
    scores = score_matrix(fit.model, train.features);
  } else {
    DiagtOptions options;
    options.mask_target = config.mask_target;
    if (variant == Variant::diagt_hb || variant == Variant::diagt_rus_hb) {
      options.hashing = HashingConfig{config.hash_ratio, config.seed, config.signed_hash};
    }
    if (variant == Variant::diagt_rus || variant == Variant::diagt_rus_hb) {
      options.undersampling = UndersampleConfig{config.undersample_ratio, config.seed};
    }
    DiagtFit fit = fit_diagt(train.features, train.labels, sgd, options);
    cell.meta = fit.meta;
    cell.fit_seconds = fit.stats.wall_clock_seconds;
    scores = score_matrix(fit.model, train.features);
  }
  cell.precision_pct = precisions(scores, fold_data, config);
  return cell;
}

std::vector<MetricsReport> run_benchmark(const InteractionLog& log,
                                         std::span<const Variant> variants,
                                         const BenchConfig& config) {
  if (variants.empty()) return {};
  validate(config);
  InteractionLog sorted;
  const std::vector<TrainTestMatrices> folds = prepare_folds(log, config, sorted);
  const std::size_t num_cells = variants.size() * folds.size();

  std::vector<CellResult> cells(num_cells);
  auto run_cell = [&](std::size_t c) {
    cells[c] = evaluate_variant(variants[c / folds.size()], folds[c % folds.size()], config);
  };

  const std::size_t workers = std::clamp<std::size_t>(config.jobs, 1, num_cells);
  if (workers == 1) {
    for (std::size_t c = 0; c < num_cells; ++c) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t c = next++; c < num_cells; c = next++) run_cell(c);
          } catch (...) {
            errors[w] = std::current_exception();
            next = num_cells;
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<MetricsReport> reports;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<CellResult> row(cells.begin() + static_cast<std::ptrdiff_t>(v * folds.size()),
                                cells.begin() + static_cast<std::ptrdiff_t>((v + 1) * folds.size()));
    reports.push_back(summarize(model_name(variants[v], config.hash_ratio), row, config));
  }
  return reports;
}

MetricsReport random_baseline(const InteractionLog& log, const BenchConfig& config) {
  validate(config);
  InteractionLog sorted;
  const std::vector<TrainTestMatrices> folds = prepare_folds(log, config, sorted);
  std::vector<CellResult> cells;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const SparseMatrix& truth = folds[f].test_truth;
    Rng rng(config.seed + f);
    ScoreMatrix scores(truth.rows(), truth.cols());
    for (std::size_t i = 0; i < truth.rows(); ++i) {
      for (double& s : scores.row(i)) s = uniform01(rng);
    }
    CellResult cell;
    cell.precision_pct = precisions(scores, folds[f], config);
    cells.push_back(std::move(cell));
  }
  return summarize("Random", cells, config);
}

void write_report_csv(std::ostream& out, std::span<const MetricsReport> reports,
                      std::span<const std::pair<std::string, std::string>> provenance) {
  for (const auto& [key, value] : provenance) fmt::print(out, "# {}={}\n", key, value);
  out << "model,nnz,density_pct,speed_s";
  if (!reports.empty()) {
    for (const auto& p : reports.front().precision_at) fmt::print(out, ",p@{0},p@{0}_ci", p.k);
  }
  out << '\n';
  for (const auto& r : reports) {
    fmt::print(out, "{},{},{:.6g},{:.4f}", r.model_name, r.nnz, r.density_pct, r.speed_seconds);
    for (const auto& p : r.precision_at) fmt::print(out, ",{:.4f},{:.4f}", p.pct.mean, p.pct.halfwidth);
    out << '\n';
  }
}

void write_report_table(std::ostream& out, std::span<const MetricsReport> reports) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"models", "# nnz", "density (%)", "speed (s)"};
  if (!reports.empty()) {
    for (const auto& p : reports.front().precision_at) header.push_back(fmt::format("p@{} (%)", p.k));
  }
  rows.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> cells{r.model_name, with_thousands(r.nnz),
                                   fmt::format("{:.4g}", r.density_pct),
                                   fmt::format("{:.2f}", r.speed_seconds)};
    for (const auto& p : r.precision_at) {
      cells.push_back(fmt::format("{:.1f} ± {:.1f}", p.pct.mean, p.pct.halfwidth));
    }
    rows.push_back(std::move(cells));
  }

  // "±" is two bytes but one column wide.
  auto width_of = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char ch : s) w += (ch & 0xC0) != 0x80 ? 1 : 0;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width_of(row[c]));
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const std::string& cell = rows[r][c];
      const std::string pad(widths[c] - width_of(cell), ' ');
      line += c == 0 ? cell + pad : "  " + pad + cell;
    }
    out << line << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : widths) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
}

}  // namespace diagt

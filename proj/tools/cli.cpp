#include "cli.hpp"

#include <cstdint>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <utility>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "diagt/benchmark.hpp"
#include "diagt/data.hpp"
#include "diagt/error.hpp"
#include "diagt/eval.hpp"
#include "diagt/learner.hpp"

namespace diagt::cli {

namespace {

/// Bad flag values found after CLI11 parsing; reported like parse errors.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct SgdFlags {
  std::size_t epochs = 5;
  double lr = 0.1;
  std::string lr_schedule = "inverse";
  double l2 = 1e-6;
  bool intercept = true;
  bool shuffle = true;

  void attach(CLI::App& app) {
    app.add_option("--epochs", epochs, "SGD passes over the data")
        ->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--lr", lr, "Initial learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--lr-schedule", lr_schedule, "constant or inverse")
        ->check(CLI::IsMember({"constant", "inverse"}))->capture_default_str();
    app.add_option("--l2", l2, "L2 penalty lambda")->check(CLI::NonNegativeNumber)->capture_default_str();
    app.add_flag("--intercept,!--no-intercept", intercept, "Fit an intercept")->capture_default_str();
    app.add_flag("--shuffle,!--no-shuffle", shuffle, "Shuffle examples every epoch")->capture_default_str();
  }

  [[nodiscard]] SgdConfig config(std::uint64_t seed) const {
    SgdConfig c;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.lr_schedule = lr_schedule == "constant" ? LrSchedule::constant : LrSchedule::inverse_scaling;
    c.l2_lambda = l2;
    c.use_intercept = intercept;
    c.shuffle = shuffle;
    c.seed = seed;
    return c;
  }

  void provenance(std::vector<std::pair<std::string, std::string>>& out) const {
    out.emplace_back("epochs", std::to_string(epochs));
    out.emplace_back("lr", fmt::format("{}", lr));
    out.emplace_back("lr-schedule", lr_schedule);
    out.emplace_back("l2", fmt::format("{}", l2));
    out.emplace_back("intercept", intercept ? "true" : "false");
    out.emplace_back("shuffle", shuffle ? "true" : "false");
  }
};

struct Options {
  std::string config_path;
  std::string data;
  std::string variants = "br,diagt,diagt-hb,diagt-rus,diagt-rus-hb";
  std::string variant = "diagt";
  std::size_t folds = 3;
  std::size_t top_items = 100;
  double hash_ratio = 0.9;
  double undersample_ratio = 1.0;
  std::string k_list = "1,5,10";
  std::uint64_t seed = 0;
  std::string out;
  std::string model;
  std::size_t top_k = 10;
  std::size_t jobs = 1;
  bool exclude_seen = false;
  bool mask_target = false;
  bool signed_hash = true;
  SgdFlags sgd;

  // synth
  std::size_t users = 5000;
  std::size_t items = 100;
  double skew = 1.0;
  std::size_t clusters = 5;
  double mean_interactions = 6.0;
  double affinity = 0.8;
};

void add_common(CLI::App& app, Options& o) {
  app.add_option("--config", o.config_path, "JSON file whose keys are flag names");
  app.add_option("--seed", o.seed, "Master seed (falls back to $DIAGT_SEED)")
      ->envname("DIAGT_SEED")->capture_default_str();
}

void add_reduction(CLI::App& app, Options& o) {
  app.add_option("--top-items", o.top_items, "Label space: most popular training items")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--hash-ratio", o.hash_ratio, "Hash buckets as a fraction of n*k")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_option("--undersample-ratio", o.undersample_ratio, "Negatives kept per positive")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--signed-hash,!--no-signed-hash", o.signed_hash, "Signed feature hashing")
      ->capture_default_str();
  app.add_flag("--mask-target,!--no-mask-target", o.mask_target, "Hide feature j when learning label j");
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  for (const auto& item : split_list(text)) {
    std::size_t k = 0;
    std::size_t used = 0;
    try {
      k = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || k == 0) throw UsageError(fmt::format("bad K value '{}'", item));
    ks.push_back(k);
  }
  if (ks.empty()) throw UsageError("--k-list is empty");
  return ks;
}

std::vector<Variant> parse_variants(const std::string& text) {
  std::vector<Variant> out;
  for (const auto& item : split_list(text)) {
    try {
      out.push_back(parse_variant(item));
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

BenchConfig bench_config(const Options& o) {
  BenchConfig c;
  c.folds = o.folds;
  c.top_items = o.top_items;
  c.sgd = o.sgd.config(o.seed);
  c.hash_ratio = o.hash_ratio;
  c.signed_hash = o.signed_hash;
  c.undersample_ratio = o.undersample_ratio;
  c.k_list = parse_k_list(o.k_list);
  c.seed = o.seed;
  c.exclude_seen = o.exclude_seen;
  c.mask_target = o.mask_target;
  c.jobs = o.jobs;
  return c;
}

/// Writes to the file at `path`, or to `fallback` when the path is empty.
template <typename Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream file(path);
  if (!file) throw IoError(fmt::format("cannot open '{}' for writing", path));
  write(file);
  if (!file) throw IoError(fmt::format("failed writing '{}'", path));
}

void cmd_bench(const Options& o, std::ostream& out) {
  const BenchConfig config = bench_config(o);
  const std::vector<Variant> variants = parse_variants(o.variants);
  const InteractionLog log = load_interactions(o.data);
  const auto reports = run_benchmark(log, variants, config);

  std::vector<std::pair<std::string, std::string>> provenance{
      {"command", "bench"},
      {"data", o.data},
      {"variants", o.variants},
      {"folds", std::to_string(o.folds)},
      {"top-items", std::to_string(o.top_items)},
      {"hash-ratio", fmt::format("{}", o.hash_ratio)},
      {"signed-hash", o.signed_hash ? "true" : "false"},
      {"undersample-ratio", fmt::format("{}", o.undersample_ratio)},
      {"k-list", o.k_list},
      {"seed", std::to_string(o.seed)},
      {"exclude-seen", o.exclude_seen ? "true" : "false"},
      {"mask-target", o.mask_target ? "true" : "false"},
      {"jobs", std::to_string(o.jobs)},
  };
  o.sgd.provenance(provenance);

  write_report_table(out, reports);
  if (!o.out.empty()) out << '\n';
  with_output(o.out, out, [&](std::ostream& s) { write_report_csv(s, reports, provenance); });
}

void cmd_train(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("train needs --out for the model file");
  const Variant variant = parse_variants(o.variant).at(0);
  InteractionLog log = load_interactions(o.data);
  log.sort_by_time();
  const FoldSpec all{1, {0, log.size()}, {log.size(), log.size()}};
  const TrainTestMatrices data = build_matrices(log, o.top_items, all);
  const Dataset& train = data.train;
  const SgdConfig sgd = o.sgd.config(o.seed);

  SavedModel saved;
  saved.label_names = train.items.names();
  PipelineMeta meta;
  TrainStats stats;
  if (variant == Variant::br) {
    BrFit fit = fit_br(train.features, train.labels, sgd, {o.mask_target, o.jobs});
    meta = fit.meta;
    stats = fit.stats;
    saved.model = std::move(fit.model);
  } else {
    DiagtOptions options;
    options.mask_target = o.mask_target;
    if (variant == Variant::diagt_hb || variant == Variant::diagt_rus_hb) {
      options.hashing = HashingConfig{o.hash_ratio, o.seed, o.signed_hash};
    }
    if (variant == Variant::diagt_rus || variant == Variant::diagt_rus_hb) {
      options.undersampling = UndersampleConfig{o.undersample_ratio, o.seed};
    }
    DiagtFit fit = fit_diagt(train.features, train.labels, sgd, options);
    meta = fit.meta;
    stats = fit.stats;
    saved.model = std::move(fit.model);
  }
  save_model_file(o.out, saved);
  fmt::print(out, "{}: {} users x {} labels, design {}x{} nnz {} density {:.4g}%, {:.3f}s, loss {:.5f}\n",
             model_name(variant, o.hash_ratio), train.users.size(), train.items.size(), meta.rows,
             meta.cols, meta.nnz, 100.0 * meta.density, stats.wall_clock_seconds,
             stats.final_mean_loss);
}

void cmd_predict(const Options& o, std::ostream& out) {
  if (o.model.empty()) throw UsageError("predict needs --model");
  const SavedModel saved = load_model_file(o.model);
  if (saved.label_names.empty()) throw ConfigError("model file carries no item names");
  const Vocabulary items(saved.label_names);
  const Dataset data = build_user_item_dataset(load_interactions(o.data), items);

  const ScoreMatrix scores = std::visit(
      [&](const auto& model) { return score_matrix(model, data.features); }, saved.model);
  const std::size_t k = std::min(o.top_k, items.size());
  with_output(o.out, out, [&](std::ostream& s) {
    s << "user_id,rank,item_id,score\n";
    for (std::size_t i = 0; i < data.users.size(); ++i) {
      const SparseRowRef seen = o.exclude_seen ? data.features.row(i) : SparseRowRef{};
      const auto top = top_k_labels(scores.row(i), k, seen);
      for (std::size_t r = 0; r < top.size(); ++r) {
        fmt::print(s, "{},{},{},{:.6f}\n", data.users.name_of(i), r + 1, items.name_of(top[r]),
                   scores(i, top[r]));
      }
    }
  });
}

void cmd_synth(const Options& o, std::ostream& out) {
  SyntheticConfig c;
  c.num_users = o.users;
  c.num_items = o.items;
  c.seed = o.seed;
  c.popularity_skew = o.skew;
  c.affinity_clusters = o.clusters;
  c.mean_interactions = o.mean_interactions;
  c.cluster_affinity = o.affinity;
  const InteractionLog log = generate_synthetic(c);
  with_output(o.out, out, [&](std::ostream& s) { write_interactions(s, log); });
}

void cmd_split(const Options& o, std::ostream& out) {
  InteractionLog log = load_interactions(o.data);
  log.sort_by_time();
  out << "fold,train_begin,train_end,test_begin,test_end,train_last_ts,test_first_ts,test_last_ts\n";
  for (const FoldSpec& f : temporal_split(log.size(), o.folds)) {
    fmt::print(out, "{},{},{},{},{},{},{},{}\n", f.fold_index, f.train.begin, f.train.end,
               f.test.begin, f.test.end, log.records[f.train.end - 1].timestamp,
               log.records[f.test.begin].timestamp, log.records[f.test.end - 1].timestamp);
  }
}

/// "--key value" arguments for every entry of a JSON config object.
std::vector<std::string> config_arguments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open config '{}'", path));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("config '{}': {}", path, e.what()));
  }
  if (!doc.is_object()) throw ConfigError(fmt::format("config '{}' must be a JSON object", path));

  std::vector<std::string> args;
  for (const auto& [key, value] : doc.items()) {
    if (key == "config") continue;
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) {
        args.push_back(flag);
      } else {
        args.push_back("--no-" + key);
      }
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ',';
        joined += v.is_string() ? v.get<std::string>() : v.dump();
      }
      args.push_back(flag);
      args.push_back(joined);
    } else {
      args.push_back(flag);
      args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  return args;
}

/// Splices config-file arguments in right after the subcommand so that
/// explicit command-line flags, which come later, take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.size() < 2) return args;
  std::vector<std::string> out{args[0], args[1]};
  for (auto& a : config_arguments(path)) out.push_back(std::move(a));
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-label learning through one binary problem on a block-diagonal design"};
  app.name(raw_args.empty() ? "diagt" : raw_args[0]);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  Options o;
  auto* bench = app.add_subcommand("bench", "Cross-validated benchmark of the model variants");
  add_common(*bench, o);
  bench->add_option("--data", o.data, "Interactions CSV")->required();
  bench->add_option("--variants", o.variants, "Comma-separated variants")->capture_default_str();
  bench->add_option("--folds", o.folds, "Time-series folds")->check(CLI::Range(2, 1000))->capture_default_str();
  bench->add_option("--k-list", o.k_list, "Comma-separated K values")->capture_default_str();
  bench->add_option("--out", o.out, "CSV report path (stdout when omitted)");
  bench->add_option("--jobs", o.jobs, "Concurrent (variant, fold) cells")
      ->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_flag("--exclude-seen,!--no-exclude-seen", o.exclude_seen, "Drop training items from rankings");
  add_reduction(*bench, o);
  o.sgd.attach(*bench);

  auto* train = app.add_subcommand("train", "Fit one variant on the whole log and save it");
  add_common(*train, o);
  train->add_option("--data", o.data, "Interactions CSV")->required();
  train->add_option("--variant", o.variant, "Variant to fit")->capture_default_str();
  train->add_option("--out", o.out, "Model file")->required();
  train->add_option("--jobs", o.jobs, "Worker threads for br")->check(CLI::PositiveNumber);
  add_reduction(*train, o);
  o.sgd.attach(*train);

  auto* predict = app.add_subcommand("predict", "Top-K items per user from a saved model");
  add_common(*predict, o);
  predict->add_option("--model", o.model, "Model file")->required();
  predict->add_option("--data", o.data, "Interactions CSV with user histories")->required();
  predict->add_option("--k", o.top_k, "Items per user")->check(CLI::PositiveNumber)->capture_default_str();
  predict->add_option("--out", o.out, "Output CSV (stdout when omitted)");
  predict->add_flag("--exclude-seen,!--no-exclude-seen", o.exclude_seen, "Skip items the user already has");

  auto* synth = app.add_subcommand("synth", "Write a synthetic interactions CSV");
  add_common(*synth, o);
  synth->add_option("--users", o.users)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--items", o.items)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--skew", o.skew, "Popularity power-law exponent")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--clusters", o.clusters)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--mean-interactions", o.mean_interactions)
      ->check(CLI::Range(1.0, 1e9))->capture_default_str();
  synth->add_option("--affinity", o.affinity, "Probability of an in-cluster draw")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  synth->add_option("--out", o.out, "Output CSV (stdout when omitted)");

  auto* split = app.add_subcommand("split", "Print expanding-window fold boundaries");
  add_common(*split, o);
  split->add_option("--data", o.data, "Interactions CSV")->required();
  split->add_option("--folds", o.folds)->check(CLI::PositiveNumber)->capture_default_str();

  try {
    const std::vector<std::string> args = expand_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));

    if (*bench) cmd_bench(o, out);
    else if (*train) cmd_train(o, out);
    else if (*predict) cmd_predict(o, out);
    else if (*synth) cmd_synth(o, out);
    else if (*split) cmd_split(o, out);
    return 0;
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace diagt::cli

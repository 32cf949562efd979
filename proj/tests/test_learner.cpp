#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "diagt/error.hpp"
#include "diagt/learner.hpp"
#include "test_util.hpp"

using namespace diagt;
using diagt::testing::random_sparse;

namespace {

SgdConfig plain_sgd(double rate, std::size_t epochs) {
  SgdConfig c;
  c.epochs = epochs;
  c.learning_rate = rate;
  c.lr_schedule = LrSchedule::constant;
  c.l2_lambda = 0.0;
  c.use_intercept = false;
  c.shuffle = false;
  return c;
}

// Straightforward in-order SGD with lazy L2, written independently of the
// library trainer.
LinearModel reference_sgd(const SparseMatrix& x, const std::vector<std::uint8_t>& y,
                          const SgdConfig& c) {
  std::vector<double> w(x.cols(), 0.0);
  double b = 0.0;
  std::size_t t = 0;
  for (std::size_t e = 0; e < c.epochs; ++e) {
    for (std::size_t r = 0; r < x.rows(); ++r, ++t) {
      const double eta = c.lr_schedule == LrSchedule::constant
                             ? c.learning_rate
                             : c.learning_rate / (1.0 + c.learning_rate * c.l2_lambda * t);
      const SparseRowRef row = x.row(r);
      double z = c.use_intercept ? b : 0.0;
      for (std::size_t i = 0; i < row.size(); ++i) z += w[row.col(i)] * row.value(i);
      const double g = 1.0 / (1.0 + std::exp(-z)) - y[r];
      for (std::size_t i = 0; i < row.size(); ++i) {
        double& wc = w[row.col(i)];
        wc -= eta * (g * row.value(i) + c.l2_lambda * wc);
      }
      if (c.use_intercept) b -= eta * g;
    }
  }
  return {w, b, c.use_intercept};
}

std::vector<std::uint8_t> random_labels(std::mt19937_64& rng, std::size_t n, double rate) {
  std::vector<std::uint8_t> y(n);
  std::bernoulli_distribution d(rate);
  for (auto& v : y) v = d(rng) ? 1 : 0;
  return y;
}

}  // namespace

TEST_CASE("single SGD step on one example") {
  const SparseMatrix x = SparseMatrix::from_triplets(1, 1, std::vector<Triplet>{{0, 0, 1.0}});
  const std::vector<std::uint8_t> y{1};
  const BinaryFit fit = fit_binary(MatrixRows(x), y, plain_sgd(0.5, 1));
  REQUIRE(fit.model.weights.size() == 1);
  CHECK(fit.model.weights[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(fit.stats.examples_seen == 1);
}

TEST_CASE("all-positive labels drive probabilities up") {
  std::mt19937_64 rng(4);
  const SparseMatrix x = random_sparse(rng, 50, 10, 0.3);
  const std::vector<std::uint8_t> y(50, 1);
  SgdConfig c;
  c.epochs = 20;
  const BinaryFit fit = fit_binary(MatrixRows(x), y, c);
  double mean = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) mean += predict_score(fit.model, x.row(r));
  CHECK(mean / 50.0 > 0.9);
}

TEST_CASE("fit_binary errors") {
  const SparseMatrix empty = SparseMatrix::from_triplets(0, 3, {});
  CHECK_THROWS_AS((void)fit_binary(MatrixRows(empty), {}, SgdConfig{}), EmptyDataError);

  const SparseMatrix x = SparseMatrix::from_triplets(2, 1, std::vector<Triplet>{{0, 0, 1.0}});
  const std::vector<std::uint8_t> one{1};
  CHECK_THROWS_AS((void)fit_binary(MatrixRows(x), one, SgdConfig{}), ShapeError);

  const SparseMatrix huge = SparseMatrix::from_triplets(2, 1, std::vector<Triplet>{{0, 0, 1e308}, {1, 0, -1e308}});
  const std::vector<std::uint8_t> y{1, 0};
  CHECK_THROWS_AS((void)fit_binary(MatrixRows(huge), y, plain_sgd(10.0, 3)), DivergenceError);

  SgdConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SgdConfig{};
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SgdConfig{};
  bad.l2_lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("predict_score examples") {
  const std::vector<Index> cols{0};
  const std::vector<double> vals{1.0};
  const SparseRowRef row{cols, vals, 0};
  CHECK(predict_score(LinearModel{{0.0}, 0.0, false}, row) == 0.5);
  CHECK(predict_score(LinearModel{{std::log(3.0)}, 0.0, false}, row) ==
        doctest::Approx(0.75).epsilon(1e-15));
  const std::vector<Index> bad_cols{1};
  const LinearModel tiny{{0.0}, 0.0, false};
  CHECK_THROWS_AS((void)tiny.margin(SparseRowRef{bad_cols, vals, 0}), IndexError);
}

TEST_CASE("logistic loss is stable at extreme margins") {
  CHECK(logistic_loss(0.0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(logistic_loss(800.0, 1) == doctest::Approx(0.0));
  CHECK(logistic_loss(-800.0, 1) == doctest::Approx(800.0));
  CHECK(logistic_loss(800.0, 0) == doctest::Approx(800.0));
  CHECK(std::isfinite(sigmoid(-1000.0)));
  CHECK(sigmoid(1000.0) == 1.0);
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 30; ++trial) {
    const SparseMatrix x = random_sparse(rng, 1, 8, 0.5, false);
    std::vector<double> w(8);
    for (auto& v : w) v = normal(rng);
    const double b = normal(rng);
    const std::uint8_t y = rng() % 2;
    const double lambda = 0.01 * (rng() % 10);
    const auto grad = regularized_gradient(w, b, x.row(0), y, lambda);
    for (std::size_t c = 0; c < w.size(); ++c) {
      auto plus = w;
      auto minus = w;
      plus[c] += h;
      minus[c] -= h;
      const double numeric = (regularized_loss(plus, b, x.row(0), y, lambda) -
                              regularized_loss(minus, b, x.row(0), y, lambda)) /
                             (2 * h);
      CHECK(std::abs(numeric - grad[c]) <= 1e-6 * std::max(1.0, std::abs(grad[c])));
    }
  }
}

TEST_CASE("trainer follows the reference update rule") {
  std::mt19937_64 rng(12);
  const SparseMatrix x = random_sparse(rng, 40, 12, 0.3, false);
  const auto y = random_labels(rng, 40, 0.4);
  for (bool intercept : {false, true}) {
    for (auto schedule : {LrSchedule::constant, LrSchedule::inverse_scaling}) {
      SgdConfig c = plain_sgd(0.2, 3);
      c.use_intercept = intercept;
      c.lr_schedule = schedule;
      c.l2_lambda = 0.05;
      const LinearModel expected = reference_sgd(x, y, c);
      const LinearModel got = fit_binary(MatrixRows(x), y, c).model;
      REQUIRE(got.weights.size() == expected.weights.size());
      for (std::size_t i = 0; i < got.weights.size(); ++i) {
        CHECK(got.weights[i] == doctest::Approx(expected.weights[i]).epsilon(1e-12));
      }
      CHECK(got.intercept == doctest::Approx(expected.intercept).epsilon(1e-12));
    }
  }
}

TEST_CASE("training is deterministic and seed dependent") {
  std::mt19937_64 rng(21);
  const SparseMatrix x = random_sparse(rng, 60, 15, 0.3);
  const auto y = random_labels(rng, 60, 0.3);
  SgdConfig c;
  c.seed = 5;
  const auto a = fit_binary(MatrixRows(x), y, c).model;
  const auto b = fit_binary(MatrixRows(x), y, c).model;
  CHECK(a == b);
  c.seed = 6;
  CHECK_FALSE(fit_binary(MatrixRows(x), y, c).model == a);
}

TEST_CASE("full-batch objective decreases over epochs") {
  std::mt19937_64 rng(31);
  const SparseMatrix x = random_sparse(rng, 200, 20, 0.2);
  const auto y = random_labels(rng, 200, 0.3);
  SgdConfig c;
  c.learning_rate = 0.05;
  double previous = std::log(2.0) + 1e-12;
  for (std::size_t epochs : {1, 3, 10, 30}) {
    c.epochs = epochs;
    const auto fit = fit_binary(MatrixRows(x), y, c);
    const double loss = mean_log_loss(fit.model, MatrixRows(x), y);
    CHECK(loss < previous);
    previous = loss;
    CHECK(fit.stats.epoch_mean_loss.size() == epochs);
    CHECK(fit.stats.examples_seen == epochs * 200);
  }
}

TEST_CASE("binary relevance with one label equals a single binary fit") {
  std::mt19937_64 rng(41);
  const SparseMatrix x = random_sparse(rng, 30, 8, 0.3);
  const SparseMatrix y = random_sparse(rng, 30, 1, 0.4);
  SgdConfig c;
  c.seed = 3;
  const BrFit br = fit_br(x, y, c);
  const BinaryFit single = fit_binary(MatrixRows(x), y.binary_column(0), c);
  REQUIRE(br.model.num_labels() == 1);
  CHECK(br.model.models[0] == single.model);
  CHECK(br.meta.nnz == x.nnz());
}

TEST_CASE("binary relevance is equivariant to label permutations") {
  std::mt19937_64 rng(42);
  const SparseMatrix x = random_sparse(rng, 30, 8, 0.3);
  const SparseMatrix y = random_sparse(rng, 30, 4, 0.4);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<Triplet> t;
  for (const auto& e : y.triplets()) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (perm[j] == e.col) t.push_back({e.row, j, e.value});
    }
  }
  const SparseMatrix permuted = SparseMatrix::from_triplets(30, 4, t);
  // Per-label seeds are seed + j, so turn off shuffling to isolate ordering.
  const SgdConfig c = plain_sgd(0.1, 3);
  const BrFit a = fit_br(x, y, c);
  const BrFit b = fit_br(x, permuted, c);
  for (std::size_t j = 0; j < 4; ++j) CHECK(b.model.models[j] == a.model.models[perm[j]]);
}

TEST_CASE("parallel binary relevance equals sequential") {
  std::mt19937_64 rng(43);
  const SparseMatrix x = random_sparse(rng, 50, 10, 0.3);
  const SparseMatrix y = random_sparse(rng, 50, 7, 0.3);
  SgdConfig c;
  c.seed = 8;
  const BrFit seq = fit_br(x, y, c, {false, 1});
  const BrFit par = fit_br(x, y, c, {false, 3});
  CHECK(seq.model == par.model);
  CHECK(seq.stats.examples_seen == par.stats.examples_seen);
}

TEST_CASE("without coupling terms the diagonal model decouples into binary relevance") {
  std::mt19937_64 rng(51);
  const std::size_t m = 40;
  const std::size_t n = 9;
  const std::size_t k = 5;
  const SparseMatrix x = random_sparse(rng, m, n, 0.3, false);
  const SparseMatrix y = random_sparse(rng, m, k, 0.3);
  const SgdConfig c = plain_sgd(0.3, 4);
  const DiagtFit diag = fit_diagt(x, y, c);
  const BrFit br = fit_br(x, y, c);
  REQUIRE(diag.model.linear.weights.size() == n * k);
  double max_diff = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t f = 0; f < n; ++f) {
      max_diff = std::max(max_diff, std::abs(diag.model.linear.weights[j * n + f] -
                                             br.model.models[j].weights[f]));
    }
  }
  CHECK(max_diff <= 1e-10);

  // A shared intercept couples the blocks.
  SgdConfig coupled = c;
  coupled.use_intercept = true;
  const DiagtFit d2 = fit_diagt(x, y, coupled);
  const BrFit b2 = fit_br(x, y, coupled);
  double diff2 = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t f = 0; f < n; ++f) {
      diff2 = std::max(diff2, std::abs(d2.model.linear.weights[j * n + f] -
                                       b2.model.models[j].weights[f]));
    }
  }
  CHECK(diff2 > 1e-6);
}

TEST_CASE("diagonal pipeline metadata and reductions") {
  std::mt19937_64 rng(61);
  const std::size_t m = 80;
  const std::size_t n = 10;
  const std::size_t k = 10;
  const SparseMatrix x = random_sparse(rng, m, n, 0.2);
  const SparseMatrix y = random_sparse(rng, m, k, 0.05);
  const std::size_t positives = y.nnz();
  REQUIRE(positives > 0);
  SgdConfig c;
  c.epochs = 2;

  const DiagtFit plain = fit_diagt(x, y, c);
  CHECK(plain.meta.rows == m * k);
  CHECK(plain.meta.cols == n * k);
  CHECK(plain.meta.nnz == k * x.nnz());
  CHECK(plain.stats.examples_seen == 2 * m * k);

  DiagtOptions rus;
  rus.undersampling = UndersampleConfig{1.0, 4};
  const DiagtFit under = fit_diagt(x, y, c, rus);
  CHECK(under.stats.examples_seen == 2 * 2 * positives);
  CHECK(under.meta.rows == 2 * positives);

  DiagtOptions hb;
  hb.hashing = HashingConfig{0.9, 2, true};
  const DiagtFit hashed = fit_diagt(x, y, c, hb);
  CHECK(hashed.model.linear.feature_dim() == 90);
  CHECK(hashed.meta.cols == 90);

  for (const DiagtFit* fit : {&plain, &under, &hashed}) {
    const ScoreMatrix s = score_matrix(fit->model, x);
    REQUIRE(s.rows() == m);
    REQUIRE(s.cols() == k);
    for (std::size_t i = 0; i < m; i += 7) {
      const auto row_scores = score_labels(fit->model, x.row(i));
      for (std::size_t j = 0; j < k; ++j) {
        CHECK(s(i, j) == doctest::Approx(row_scores[j]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("masking the target drops its own feature") {
  // X == Y: without masking label j can read feature j directly.
  std::mt19937_64 rng(71);
  const SparseMatrix xy = random_sparse(rng, 60, 4, 0.4);
  SgdConfig c = plain_sgd(0.3, 5);
  DiagtOptions masked;
  masked.mask_target = true;
  const DiagtFit fit = fit_diagt(xy, xy, c, masked);
  for (std::size_t j = 0; j < 4; ++j) CHECK(fit.model.linear.weights[j * 4 + j] == 0.0);

  const BrFit br = fit_br(xy, xy, c, {true, 1});
  for (std::size_t j = 0; j < 4; ++j) CHECK(br.model.models[j].weights[j] == 0.0);
  // Decoupling still holds with masking.
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t f = 0; f < 4; ++f) {
      CHECK(fit.model.linear.weights[j * 4 + f] ==
            doctest::Approx(br.model.models[j].weights[f]).epsilon(1e-12));
    }
  }
}

TEST_CASE("models survive a save/load round trip") {
  std::mt19937_64 rng(81);
  const SparseMatrix x = random_sparse(rng, 30, 6, 0.3, false);
  const SparseMatrix y = random_sparse(rng, 30, 3, 0.3);
  SgdConfig c;
  DiagtOptions hb;
  hb.hashing = HashingConfig{0.5, 11, false};
  hb.mask_target = true;
  const DiagtModel diag = fit_diagt(x, y, c, hb).model;
  const BrModel br = fit_br(x, y, c).model;

  for (const AnyModel& model : {AnyModel(diag), AnyModel(br)}) {
    std::stringstream buf;
    save_model(buf, {model, {"a", "b c", "d"}});
    const SavedModel back = load_model(buf);
    CHECK(back.model == model);
    CHECK(back.label_names == std::vector<std::string>{"a", "b c", "d"});
  }

  std::stringstream bad("NOTAMODEL\n");
  CHECK_THROWS_AS((void)load_model(bad), ParseError);
  std::stringstream truncated;
  save_model(truncated, {AnyModel(br), {}});
  std::string text = truncated.str();
  std::stringstream cut(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS((void)load_model(cut), ParseError);
  CHECK_THROWS_AS((void)load_model_file("/nonexistent/dir/model.txt"), IoError);
}

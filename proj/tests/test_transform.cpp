#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "diagt/error.hpp"
#include "diagt/transform.hpp"
#include "test_util.hpp"

using namespace diagt;
using diagt::testing::random_sparse;
using diagt::testing::to_dense;
using Pairs = std::vector<std::pair<Index, double>>;

namespace {

SparseMatrix make(std::size_t m, std::size_t n, const std::vector<Triplet>& t) {
  return SparseMatrix::from_triplets(m, n, t);
}

// Independent restatement of the documented mix, used as a reference.
std::uint64_t reference_mix(std::uint64_t seed, std::uint64_t col) {
  std::uint64_t z = seed ^ col;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

TEST_CASE("expand builds the block design and label-major stack") {
  const SparseMatrix x = make(2, 2, {{0, 0, 1}, {1, 0, 1}, {1, 1, 1}});
  const SparseMatrix y = make(2, 2, {{0, 0, 1}, {1, 1, 1}});
  const Expansion e = expand(x, y);
  CHECK(e.shape.num_instances == 2);
  CHECK(e.shape.num_features == 2);
  CHECK(e.shape.num_labels == 2);
  CHECK(e.design.rows() == 4);
  CHECK(e.design.cols() == 4);
  CHECK(e.design.view_row(0).to_pairs() == Pairs{{0, 1}});
  CHECK(e.design.view_row(1).to_pairs() == Pairs{{0, 1}, {1, 1}});
  CHECK(e.design.view_row(2).to_pairs() == Pairs{{2, 1}});
  CHECK(e.design.view_row(3).to_pairs() == Pairs{{2, 1}, {3, 1}});
  CHECK(std::vector<std::uint8_t>(e.labels.values().begin(), e.labels.values().end()) ==
        std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(e.shape.stacked_index(1, 1) == 3);
}

TEST_CASE("expand with one label is the identity") {
  std::mt19937_64 rng(3);
  const SparseMatrix x = random_sparse(rng, 6, 4, 0.4);
  const SparseMatrix y = random_sparse(rng, 6, 1, 0.5);
  const Expansion e = expand(x, y);
  for (std::size_t r = 0; r < 6; ++r) CHECK(e.design.view_row(r).to_pairs() == x.row(r).to_pairs());
  CHECK(e.labels.values().size() == 6);
  for (std::size_t r = 0; r < 6; ++r) CHECK(e.labels[r] == (y.at(r, 0) != 0 ? 1 : 0));
}

TEST_CASE("expand rejects bad shapes") {
  const SparseMatrix x = make(3, 2, {});
  const SparseMatrix y = make(2, 2, {});
  CHECK_THROWS_AS((void)expand(x, y), ShapeError);
  const SparseMatrix real_y = make(3, 1, {{0, 0, 0.5}});
  CHECK_THROWS_AS((void)expand(x, real_y), ShapeError);
  CHECK_THROWS_AS((void)expand(make(3, 2, {}), make(3, 0, {})), DegenerateShapeError);
}

TEST_CASE("fold_back inverts the stacking order") {
  const std::vector<double> scores{1, 2, 3, 4};
  const ScoreMatrix s = fold_back(scores, 2, 2);
  CHECK(s(0, 0) == 1);
  CHECK(s(0, 1) == 3);
  CHECK(s(1, 0) == 2);
  CHECK(s(1, 1) == 4);
  const std::vector<double> five(5, 0.0);
  CHECK_THROWS_AS((void)fold_back(five, 2, 2), ShapeError);
}

TEST_CASE("property: fold_back(stack(Y)) == Y") {
  std::mt19937_64 rng(17);
  for (std::size_t m = 1; m <= 16; m += 3) {
    for (std::size_t k = 1; k <= 16; k += 3) {
      const SparseMatrix y = random_sparse(rng, m, k, 0.3);
      const StackedLabels stacked = StackedLabels::stack(y);
      std::vector<double> as_real(stacked.values().begin(), stacked.values().end());
      const ScoreMatrix back = fold_back(as_real, m, k);
      const auto dense = to_dense(y);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          CHECK(back(i, j) == dense[i][j]);
          CHECK(stacked.at(i, j) == dense[i][j]);
        }
      }
    }
  }
}

TEST_CASE("property: transformed examples stay inside their block") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng() % 10;
    const std::size_t n = 1 + rng() % 10;
    const std::size_t k = 1 + rng() % 10;
    const SparseMatrix x = random_sparse(rng, m, n, 0.5);
    const SparseMatrix y = random_sparse(rng, m, k, 0.5);
    const Expansion e = expand(x, y);
    for (std::size_t r = 0; r < e.design.rows(); ++r) {
      const std::size_t j = r / m;
      const SparseRowRef row = e.design.view_row(r);
      for (std::size_t i = 0; i < row.size(); ++i) {
        CHECK(row.col(i) >= j * n);
        CHECK(row.col(i) < (j + 1) * n);
      }
      CHECK(e.labels[r] == (y.at(r % m, j) != 0 ? 1 : 0));
    }
  }
}

TEST_CASE("hash mix is the documented splitmix64 finalizer") {
  // First output of splitmix64 seeded with 0.
  CHECK(hash_mix(0, 0) == 0xE220A8397B1DCDAFULL);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t seed = rng();
    const std::uint64_t col = rng() % 100000;
    CHECK(hash_mix(seed, col) == reference_mix(seed, col));
  }

  const HashingConfig config{0.5, 42, true};
  const FeatureHasher hasher(config, 1000);
  const FeatureHasher lazy(config, 1000, /*tabulate=*/false);
  for (Index c = 0; c < 1000; ++c) {
    const std::uint64_t z = reference_mix(42, c);
    CHECK(hasher.bucket(c) == z % 500);
    CHECK(hasher.sign(c) == ((z >> 63) == 0 ? 1.0 : -1.0));
    CHECK(lazy.bucket(c) == hasher.bucket(c));
    CHECK(lazy.sign(c) == hasher.sign(c));
  }
}

TEST_CASE("bucket count") {
  CHECK(bucket_count(0.9, 100) == 90);
  CHECK(bucket_count(0.9, 10000) == 9000);
  CHECK(bucket_count(0.9, 11) == 10);  // ceil(9.9)
  CHECK(bucket_count(1.0, 7) == 7);
  CHECK(bucket_count(0.01, 5) == 1);
  CHECK_THROWS_AS((void)bucket_count(0.0, 100), ConfigError);
  CHECK_THROWS_AS((void)bucket_count(1.5, 100), ConfigError);
  CHECK_THROWS_AS((void)bucket_count(0.5, 0), ConfigError);
}

TEST_CASE("unsigned hashing without collisions permutes values") {
  const HashingConfig config{1.0, 9, false};
  const FeatureHasher hasher(config, 64);
  // Pick active columns with pairwise distinct buckets.
  std::vector<Index> cols;
  std::vector<std::size_t> used;
  for (Index c = 0; c < 64 && cols.size() < 6; ++c) {
    if (std::find(used.begin(), used.end(), hasher.bucket(c)) != used.end()) continue;
    used.push_back(hasher.bucket(c));
    cols.push_back(c);
  }
  REQUIRE(cols.size() == 6);
  const std::vector<double> vals{1.5, -2.0, 3.0, 0.25, 7.0, -1.0};
  const SparseRowRef row{cols, vals, 0};
  const SparseVector out = hasher.hash(row);
  REQUIRE(out.indices.size() == 6);
  CHECK(std::is_sorted(out.indices.begin(), out.indices.end()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const auto it = std::find(out.indices.begin(), out.indices.end(), hasher.bucket(cols[i]));
    REQUIRE(it != out.indices.end());
    CHECK(out.values[static_cast<std::size_t>(it - out.indices.begin())] == vals[i]);
  }
}

TEST_CASE("colliding columns with opposite signs cancel") {
  const HashingConfig config{0.5, 123, true};
  const FeatureHasher hasher(config, 40);
  std::optional<std::pair<Index, Index>> pair;
  for (Index a = 0; a < 40 && !pair; ++a) {
    for (Index b = a + 1; b < 40; ++b) {
      if (hasher.bucket(a) == hasher.bucket(b) && hasher.sign(a) != hasher.sign(b)) {
        pair = {a, b};
        break;
      }
    }
  }
  REQUIRE(pair.has_value());
  const std::vector<Index> cols{pair->first, pair->second};
  const std::vector<double> vals{1.0, 1.0};
  CHECK(hasher.hash(SparseRowRef{cols, vals, 0}).indices.empty());

  const std::vector<Index> bad{40};
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS((void)hasher.hash(SparseRowRef{bad, one, 0}), IndexError);
}

TEST_CASE("hashing in place and through HashedRows") {
  std::mt19937_64 rng(8);
  const SparseMatrix x = random_sparse(rng, 5, 6, 0.6, false);
  const BlockDiagView view(x, 3);
  const FeatureHasher hasher({0.9, 4, true}, view.cols());
  const HashedRows hashed(view, hasher);
  CHECK(hashed.cols() == 17);  // ceil(0.9 * 18) = ceil(16.2)
  SparseVector scratch;
  for (std::size_t r = 0; r < view.rows(); ++r) {
    const SparseVector expected = hash_row(view.view_row(r), {0.9, 4, true}, view.cols());
    const SparseRowRef got = hashed.row(r, scratch);
    CHECK(got.to_pairs() == expected.ref().to_pairs());

    SparseVector inplace;
    inplace.indices.assign(view.view_row(r).indices.begin(), view.view_row(r).indices.end());
    inplace.values.assign(view.view_row(r).values.begin(), view.view_row(r).values.end());
    for (auto& c : inplace.indices) c += view.view_row(r).offset;
    hasher.hash(inplace.ref(), inplace);
    CHECK(inplace.ref().to_pairs() == expected.ref().to_pairs());
  }
}

TEST_CASE("signed hashing preserves inner products in expectation") {
  const std::size_t dim = 200;
  const std::vector<Index> u_cols{3, 17, 42, 99, 150, 151};
  const std::vector<double> u_vals{1.0, -2.0, 0.5, 1.5, 3.0, -1.0};
  const std::vector<Index> v_cols{17, 42, 77, 150, 199};
  const std::vector<double> v_vals{2.0, 4.0, -1.0, 1.0, 2.5};
  const double truth = (-2.0 * 2.0) + (0.5 * 4.0) + (3.0 * 1.0);

  std::mt19937_64 seeds(2024);
  const int trials = 10000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    const HashingConfig config{0.1, seeds(), true};
    const FeatureHasher hasher(config, dim, false);
    const SparseVector hu = hasher.hash(SparseRowRef{u_cols, u_vals, 0});
    const SparseVector hv = hasher.hash(SparseRowRef{v_cols, v_vals, 0});
    const auto dv = diagt::testing::densify(hv.ref(), hasher.output_dim());
    double dot = 0.0;
    for (std::size_t i = 0; i < hu.indices.size(); ++i) dot += hu.values[i] * dv[hu.indices[i]];
    sum += dot;
    sum_sq += dot * dot;
  }
  const double mean = sum / trials;
  const double var = (sum_sq - trials * mean * mean) / (trials - 1);
  const double se = std::sqrt(var / trials);
  CHECK(std::abs(mean - truth) <= 3.0 * se);
}

TEST_CASE("undersample keeps positives and a capped negative sample") {
  const std::vector<std::uint8_t> labels{0, 1, 0, 0, 1, 0, 0, 0};
  const auto kept = undersample(labels, {1.0, 5});
  CHECK(kept.size() == 4);
  CHECK(std::count(kept.begin(), kept.end(), 1) == 1);
  CHECK(std::count(kept.begin(), kept.end(), 4) == 1);
  CHECK(std::is_sorted(kept.begin(), kept.end()));

  CHECK(undersample(labels, {10.0, 5}).size() == 8);
  CHECK(undersample(labels, {1.0, 5}) == undersample(labels, {1.0, 5}));

  const std::vector<std::uint8_t> none(6, 0);
  CHECK_THROWS_AS((void)undersample(none, {1.0, 0}), DegenerateLabelsError);
  CHECK_THROWS_AS((void)undersample(labels, {0.0, 0}), ConfigError);
  CHECK_THROWS_AS((void)undersample(labels, {-1.0, 0}), ConfigError);
}

TEST_CASE("property: undersampling contract over random instances") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t size = 1 + rng() % 300;
    std::vector<std::uint8_t> labels(size);
    const double rate = 0.02 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
    for (auto& y : labels) y = std::bernoulli_distribution(rate)(rng) ? 1 : 0;
    labels[rng() % size] = 1;
    const double ratio = 0.1 + static_cast<double>(rng() % 50) / 10.0;
    const std::uint64_t seed = rng();

    const auto kept = undersample(labels, {ratio, seed});
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t neg = size - pos;
    std::size_t kept_pos = 0;
    for (auto r : kept) kept_pos += labels[r];
    CHECK(kept_pos == pos);
    CHECK(kept.size() - kept_pos ==
          std::min(neg, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pos)))));
    CHECK(std::adjacent_find(kept.begin(), kept.end(), std::greater_equal<>()) == kept.end());
    CHECK(kept == undersample(labels, {ratio, seed}));
  }
}

TEST_CASE("undersampling picks negatives uniformly") {
  // 1 positive, 10 negatives, keep 2 negatives: each negative has p = 0.2.
  std::vector<std::uint8_t> labels(11, 0);
  labels[5] = 1;
  std::vector<int> hits(11, 0);
  const int trials = 20000;
  for (int s = 0; s < trials; ++s) {
    for (auto r : undersample(labels, {2.0, static_cast<std::uint64_t>(s)})) ++hits[r];
  }
  CHECK(hits[5] == trials);
  const double expected = 0.2 * trials;
  const double sd = std::sqrt(trials * 0.2 * 0.8);
  for (std::size_t r = 0; r < 11; ++r) {
    if (r == 5) continue;
    CHECK(std::abs(hits[r] - expected) < 5 * sd);
  }
}

TEST_CASE("SubsetRows selects rows in order") {
  std::mt19937_64 rng(2);
  const SparseMatrix x = random_sparse(rng, 4, 3, 0.5);
  const BlockDiagView view(x, 2);
  const std::vector<std::size_t> kept{1, 6, 7};
  const SubsetRows subset(view, kept);
  SparseVector scratch;
  CHECK(subset.rows() == 3);
  CHECK(subset.cols() == 6);
  CHECK(subset.row(1, scratch).to_pairs() == view.view_row(6).to_pairs());
  CHECK_THROWS_AS((void)subset.row(3, scratch), IndexError);
}

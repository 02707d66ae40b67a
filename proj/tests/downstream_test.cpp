/*
 * Copyright 2026 The nearid Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "nearid/downstream.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace nearid;

namespace {

double brute_force_auroc(const Eigen::VectorXd& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (Index i = 0; i < s.size(); ++i)
    for (Index j = 0; j < s.size(); ++j)
      if (y[std::size_t(i)] == 1 && y[std::size_t(j)] == 0) {
        pairs += 1;
        wins += s(i) > s(j) ? 1.0 : s(i) == s(j) ? 0.5 : 0.0;
      }
  return wins / pairs;
}

/// Rows spread over batches; label and features filled by the caller.
EmbeddingTable blank_table(Index rows, Index dim, int batches) {
  EmbeddingTable t;
  t.features = Eigen::MatrixXd::Zero(rows, dim);
  t.label.assign(std::size_t(rows), 0);
  t.batch.resize(std::size_t(rows));
  for (Index i = 0; i < rows; ++i) t.batch[std::size_t(i)] = int(i % batches);
  return t;
}

std::vector<Index> all_rows(const EmbeddingTable& t) {
  std::vector<Index> r(std::size_t(t.rows()));
  std::iota(r.begin(), r.end(), Index(0));
  return r;
}

} // namespace

TEST_SUITE("downstream") {

TEST_CASE("auroc examples") {
  CHECK(auroc(Eigen::Vector4d(0.9, 0.8, 0.4, 0.3), {1, 1, 0, 0}) == 1.0);
  CHECK(auroc(Eigen::Vector4d(1, 1, 1, 1), {1, 0, 1, 0}) == 0.5);
  const Eigen::VectorXd six = (Eigen::VectorXd(6) << 0.3, 0.7, 0.7, 0.1, 0.5, 0.3).finished();
  const std::vector<int> y{1, 0, 1, 0, 1, 0};
  CHECK(auroc(six, y) == doctest::Approx(brute_force_auroc(six, y)).epsilon(1e-15));
  CHECK_THROWS_AS(auroc(Eigen::Vector2d(0.1, 0.2), {1, 1}), PreconditionError);
  CHECK_THROWS_AS(auroc(Eigen::Vector2d(0.1, 0.2), {1, 2}), PreconditionError);
}

TEST_CASE("auroc matches pair counting and ignores monotone transforms") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const Index n = 4 + t % 17;
    Eigen::VectorXd s(n);
    std::vector<int> y(static_cast<std::size_t>(n));
    std::uniform_int_distribution<int> coarse(0, 4); // many ties
    for (Index i = 0; i < n; ++i) {
      s(i) = coarse(rng) / 4.0;
      y[std::size_t(i)] = int(i % 2 == 0 || coarse(rng) == 0);
    }
    y[0] = 0;
    y[1] = 1;
    const double a = auroc(s, y);
    CHECK(a == doctest::Approx(brute_force_auroc(s, y)).epsilon(1e-15));
    Eigen::VectorXd u(n); // scalar loop: equal inputs must map to equal outputs
    for (Index i = 0; i < n; ++i) u(i) = std::exp(s(i)) * 3 - 7;
    CHECK(auroc(u, y) == a);
  }
}

TEST_CASE("hoyer sparsity") {
  CHECK(hoyer_sparsity(Eigen::VectorXd::Constant(5, 0.2)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(hoyer_sparsity(Eigen::Vector3d(0, 1, 0)) == doctest::Approx(1.0).epsilon(1e-15));
  const Eigen::Vector4d c(0.7, 0.1, 0.1, 0.1);
  CHECK(hoyer_sparsity(c) == doctest::Approx((2 - 1 / std::sqrt(0.52)) / (2 - 1)).epsilon(1e-14));
  CHECK(hoyer_sparsity(Eigen::Vector4d(0.1, 0.1, 0.7, 0.1)) == hoyer_sparsity(c));
  CHECK_THROWS_AS(hoyer_sparsity(Eigen::Vector2d(0.5, 0.6)), PreconditionError);
  CHECK_THROWS_AS(hoyer_sparsity(Eigen::VectorXd::Ones(1)), PreconditionError);
  CHECK_THROWS_AS(hoyer_sparsity(Eigen::Vector3d(1.2, -0.1, -0.1)), PreconditionError);

  // Moving mass from a smaller to a larger coordinate increases sparsity.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 1);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd v(6);
    for (Index i = 0; i < 6; ++i) v(i) = u(rng);
    v /= v.sum();
    Index hi, lo;
    v.maxCoeff(&hi);
    v.minCoeff(&lo);
    Eigen::VectorXd w = v;
    const double move = 0.5 * v(lo);
    w(lo) -= move;
    w(hi) += move;
    const double hw = hoyer_sparsity(w);
    CHECK(hw > hoyer_sparsity(v));
    std::shuffle(w.data(), w.data() + 6, rng);
    CHECK(hoyer_sparsity(w) == doctest::Approx(hw).epsilon(1e-14));
  }
}

TEST_CASE("batch split: disjoint sides, 20% held out") {
  auto t = blank_table(500, 2, 10);
  for (Index i = 0; i < 500; ++i) t.label[std::size_t(i)] = int(i % 3 == 0);
  const auto folds = split_by_batch(t, {}, 7);
  REQUIRE(folds.size() == 5);
  for (const auto& f : folds) {
    CHECK(f.test_batches.size() == 2);
    std::set<Index> train(f.train.begin(), f.train.end());
    for (Index i : f.test) CHECK(train.count(i) == 0);
    CHECK(f.train.size() + f.test.size() == 500);
    std::set<int> train_batches, test_batches;
    for (Index i : f.train) train_batches.insert(t.batch[std::size_t(i)]);
    for (Index i : f.test) test_batches.insert(t.batch[std::size_t(i)]);
    for (int b : test_batches) CHECK(train_batches.count(b) == 0);
  }
  CHECK(split_by_batch(t, {}, 7)[2].test == folds[2].test);
  CHECK_THROWS_AS(split_by_batch(blank_table(40, 1, 4), {}, 1), PreconditionError);
}

TEST_CASE("batch split: stratification matches exhaustive feasibility") {
  // Six batches, each holding label 0 only, label 1 only, or both.
  std::mt19937_64 rng(3);
  HoldoutPlan plan;
  plan.holdout_fraction = 1.0 / 3;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> kind(6);
    for (int& k : kind) k = std::uniform_int_distribution<int>(0, 2)(rng);
    auto t = blank_table(60, 1, 6);
    for (Index i = 0; i < 60; ++i) {
      const int k = kind[std::size_t(t.batch[std::size_t(i)])];
      t.label[std::size_t(i)] = k == 2 ? int(i % 12 < 6) : k;
    }
    auto has = [&](const std::vector<bool>& held, bool side, int label) {
      for (Index i = 0; i < 60; ++i)
        if (held[std::size_t(t.batch[std::size_t(i)])] == side && t.label[std::size_t(i)] == label) return true;
      return false;
    };
    // Oracle: does any 2-of-6 held-out choice give both labels on both sides?
    bool feasible = false, trainable = false;
    for (int a = 0; a < 6; ++a)
      for (int b = a + 1; b < 6; ++b) {
        std::vector<bool> held(6, false);
        held[std::size_t(a)] = held[std::size_t(b)] = true;
        const bool train_ok = has(held, false, 0) && has(held, false, 1);
        trainable = trainable || train_ok;
        feasible = feasible || (train_ok && has(held, true, 0) && has(held, true, 1));
      }
    CAPTURE(trial);
    if (!trainable) {
      CHECK_THROWS_AS(split_by_batch(t, plan, std::uint64_t(trial)), PreconditionError);
      continue;
    }
    std::vector<Fold> folds;
    try {
      folds = split_by_batch(t, plan, std::uint64_t(trial));
    } catch (const PreconditionError&) {
      FAIL("split rejected a trainable configuration");
      continue;
    }
    for (const auto& f : folds) {
      std::vector<bool> held(6, false);
      for (int b : f.test_batches) held[std::size_t(b)] = true;
      CHECK(has(held, false, 0));
      CHECK(has(held, false, 1));
      if (feasible) {
        CHECK(has(held, true, 0));
        CHECK(has(held, true, 1));
      }
    }
  }
}

TEST_CASE("boosting: separable data") {
  auto t = blank_table(200, 1, 5);
  for (Index i = 0; i < 200; ++i) {
    t.features(i, 0) = double(i);
    t.label[std::size_t(i)] = int(i >= 100);
  }
  BoostParams p;
  p.rounds = 10;
  const auto m = train_boosted(t, all_rows(t), p);
  CHECK(auroc(predict_margin(m, t.features), t.label) == 1.0);
  for (std::size_t r = 1; r < m.loss_history.size(); ++r) CHECK(m.loss_history[r] <= m.loss_history[r - 1] + 1e-12);
  long internal = 0;
  for (const auto& tree : m.trees)
    for (const auto& node : tree) internal += node.feature >= 0;
  CHECK(m.total_splits() == internal);
  CHECK(m.split_fractions().sum() == doctest::Approx(1.0));

  auto one = t;
  std::fill(one.label.begin(), one.label.end(), 1);
  CHECK_THROWS_AS(train_boosted(one, all_rows(one), p), PreconditionError);
}

TEST_CASE("boosting: loss decreases, deterministic") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01(0, 1);
  auto t = blank_table(600, 4, 6);
  for (Index i = 0; i < 600; ++i) {
    for (Index d = 0; d < 4; ++d) t.features(i, d) = n01(rng);
    t.label[std::size_t(i)] = int(t.features(i, 0) + 0.5 * t.features(i, 1) + n01(rng) > 0.8);
  }
  BoostParams p;
  p.seed = 5;
  const auto a = train_boosted(t, all_rows(t), p);
  const auto b = train_boosted(t, all_rows(t), p);
  CHECK(a.split_counts == b.split_counts);
  CHECK(predict_margin(a, t.features) == predict_margin(b, t.features));
  REQUIRE(a.loss_history.size() == std::size_t(p.rounds) + 1);
  for (std::size_t r = 1; r < a.loss_history.size(); ++r) CHECK(a.loss_history[r] <= a.loss_history[r - 1] + 1e-12);
}

TEST_CASE("boosting: permutation null") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0, 1);
    auto t = blank_table(2000, 3, 10);
    for (Index i = 0; i < 2000; ++i) {
      for (Index d = 0; d < 3; ++d) t.features(i, d) = n01(rng);
      t.label[std::size_t(i)] = int(i % 2);
    }
    std::shuffle(t.label.begin(), t.label.end(), rng);
    const auto folds = split_by_batch(t, {}, seed);
    BoostParams p;
    p.seed = seed;
    const auto m = train_boosted(t, folds[0].train, p);
    Eigen::MatrixXd test(Index(folds[0].test.size()), 3);
    std::vector<int> y;
    for (std::size_t k = 0; k < folds[0].test.size(); ++k) {
      test.row(Index(k)) = t.features.row(folds[0].test[k]);
      y.push_back(t.label[std::size_t(folds[0].test[k])]);
    }
    CAPTURE(seed);
    CHECK(std::abs(auroc(predict_margin(m, test), y) - 0.5) < 0.1);
  }
}

TEST_CASE("boosting: split fractions concentrate on the signal feature") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01(0, 1);
  auto t = blank_table(1000, 6, 5);
  for (Index i = 0; i < 1000; ++i) {
    for (Index d = 0; d < 6; ++d) t.features(i, d) = n01(rng);
    t.label[std::size_t(i)] = int(t.features(i, 3) > 0);
  }
  const auto m = train_boosted(t, all_rows(t), {});
  CHECK(m.split_fractions()(3) > 0.8);
}

TEST_CASE("concentration arithmetic") {
  auto t = blank_table(1000, 2, 10);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01(0, 1);
  for (Index i = 0; i < 1000; ++i) {
    t.label[std::size_t(i)] = int(i % 4 < 2);
    t.features(i, 0) = (t.label[std::size_t(i)] ? 1.0 : -1.0) + 0.3 * n01(rng);
  }
  const auto folds = split_by_batch(t, {}, 8);

  SUBCASE("equally predictive halves") {
    t.features.col(1) = t.features.col(0);
    const auto c = concentration(t, Eigen::Vector2d(0.6, 0.4), 50, folds, {});
    REQUIRE(c.value.has_value());
    CHECK(*c.value == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("perfect top, uninformative bottom") {
    for (Index i = 0; i < 1000; ++i) t.features(i, 0) = t.label[std::size_t(i)] ? 1.0 + n01(rng) * 0.01 : -1.0;
    t.features.col(1).setConstant(0.25);
    const auto c = concentration(t, Eigen::Vector2d(0.9, 0.1), 50, folds, {});
    CHECK(c.top_features == std::vector<int>{0});
    CHECK(c.top_auroc == doctest::Approx(1.0));
    CHECK(c.bottom_auroc == doctest::Approx(0.5));
    REQUIRE(c.value.has_value());
    CHECK(*c.value == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(concentration(t, Eigen::Vector2d(0.5, 0.5), 0, folds, {}), PreconditionError);
  CHECK_THROWS_AS(concentration(t, Eigen::Vector2d(0.5, 0.5), 100, folds, {}), PreconditionError);
}

TEST_CASE("confounded data and conditions") {
  ConfoundedSpec s;
  s.rows_per_batch = 50;
  s.seed = 3;
  const auto a = make_confounded(s);
  CHECK(a.table.rows() == 500);
  CHECK(a.table.dimension() == 8);
  CHECK(a.table.batches().size() == 10);
  CHECK(make_confounded(s).table.features == a.table.features);
  for (auto c : {Condition::Base, Condition::Pca, Condition::PcaIca, Condition::PcaRandomRotation}) {
    CHECK(condition_from_string(to_string(c)) == c);
    const Eigen::MatrixXd f = condition_features(a.table.features, c, 1);
    CHECK(f.rows() == 500);
    CHECK(f.cols() == 8);
  }
  CHECK_THROWS_AS(condition_from_string("raw"), PreconditionError);
}

TEST_CASE("embedding table validation") {
  auto t = blank_table(10, 2, 5);
  t.label[3] = 2;
  CHECK_THROWS_AS(t.validate(), PreconditionError);
  t.label[3] = 1;
  t.batch.pop_back();
  CHECK_THROWS_AS(t.validate(), DimensionError);
}

} // TEST_SUITE

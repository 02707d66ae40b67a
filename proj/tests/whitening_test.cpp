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

#include "nearid/whitening.hpp"

#include <doctest.h>

#include <random>

using namespace nearid;

namespace {

Eigen::MatrixXd gaussian(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0, 1);
  Eigen::MatrixXd x(n, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

Eigen::MatrixXd centered(const Eigen::MatrixXd& x) { return x.rowwise() - column_mean(x).transpose(); }

} // namespace

TEST_SUITE("whitening") {

TEST_CASE("white data gives identity") {
  // Exact identity covariance: orthonormal columns scaled by √N.
  std::mt19937_64 rng(1);
  const Index n = 400;
  Eigen::MatrixXd q = random_orthogonal<double>(n, 3, rng);
  Eigen::MatrixXd x = q.rowwise() - column_mean(q).transpose();
  x = polar_factor(x) * std::sqrt(double(n));
  const auto m = fit_whitening(x);
  CHECK((m.transform - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("diag(4, 1) covariance") {
  Eigen::MatrixXd x = centered(gaussian(1000, 2, 2));
  x = x * Eigen::MatrixXd(covariance(x)).llt().matrixU().solve(Eigen::MatrixXd::Identity(2, 2)); // exactly white
  x.col(0) *= 2;
  const auto m = fit_whitening(x);
  CHECK(m.transform(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(m.transform(1, 1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(m.transform(0, 1)) < 1e-6);
  CHECK(m.eigenvalues(0) == doctest::Approx(4.0));
}

TEST_CASE("whitened covariance is identity and W is SPD") {
  Eigen::MatrixXd a = gaussian(5, 5, 3);
  const Eigen::MatrixXd x = gaussian(10000, 5, 4) * a + Eigen::MatrixXd::Constant(10000, 5, 3.0);
  const auto m = fit_whitening(x);
  const Eigen::MatrixXd z = apply_whitening(m, x);
  CHECK((covariance(z) - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((m.transform - m.transform.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m.transform).eigenvalues().minCoeff() > 0);
  // W Σ W = I on the training covariance.
  CHECK((m.transform * covariance(x) * m.transform - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((unwhiten(m, z) - x).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(apply_whitening(m, Eigen::MatrixXd(m.mean.transpose())).norm() < 1e-12);

  auto pca = WhiteningOptions{};
  pca.form = WhiteningForm::Pca;
  const auto mp = fit_whitening(x, pca);
  CHECK((covariance(apply_whitening(mp, x)) - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("rank-deficient input drops dimensions") {
  Eigen::MatrixXd x(500, 3);
  x.leftCols(2) = gaussian(500, 2, 5);
  x.col(2) = x.col(0) - 2 * x.col(1);
  const auto m = fit_whitening(x);
  CHECK(m.retained == 2);
  REQUIRE(m.dropped.size() == 1);
  const Eigen::MatrixXd z = apply_whitening(m, x);
  CHECK(z.cols() == 2);
  CHECK((covariance(z) - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
  // Reconstruction through the retained block is exact for rank-2 data.
  CHECK((unwhiten(m, z) - x).cwiseAbs().maxCoeff() < 1e-8);
  CHECK_THROWS_AS(fit_whitening(Eigen::MatrixXd(gaussian(3, 3, 1))), PreconditionError);
  CHECK_THROWS_AS(fit_whitening(Eigen::MatrixXd(Eigen::MatrixXd::Ones(10, 2))), PreconditionError);
  CHECK_THROWS_AS(apply_whitening(m, Eigen::MatrixXd(gaussian(4, 2, 1))), DimensionError);
}

TEST_CASE("stability check") {
  const Eigen::MatrixXd x = centered(gaussian(300, 3, 6));
  const double a = x.rowwise().norm().maxCoeff();
  const double lambda = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(covariance(x)).eigenvalues().minCoeff();

  SUBCASE("identical sets") {
    const auto r = whitening_stability_check(x, x, a, lambda);
    CHECK(r.epsilon == 0.0);
    CHECK(r.max_deviation == doctest::Approx(0.0));
    CHECK_FALSE(r.violated);
  }
  SUBCASE("scaled whitened set") {
    const auto m = fit_whitening(x);
    const Eigen::MatrixXd z = apply_whitening(m, x);
    const Eigen::MatrixXd zp = 1.01 * z;
    const double az = zp.rowwise().norm().maxCoeff();
    const auto r = whitening_stability_check(z, zp, az, 0.999);
    // Direct computation: W = I, W' = I/1.01, so W'x' = x exactly.
    CHECK(r.max_deviation < 1e-9);
    CHECK(r.epsilon == doctest::Approx(0.01 * z.rowwise().norm().maxCoeff()));
    CHECK(r.constant == doctest::Approx(std::pow(0.999, -0.5) * (1 + az * az / 0.999)));
    CHECK_FALSE(r.violated);
  }
  SUBCASE("hypotheses outside the lemma are rejected") {
    CHECK_THROWS_AS(whitening_stability_check(x, x, a, 10 * lambda + 1), PreconditionError);
    CHECK_THROWS_AS(whitening_stability_check(x, x, a, 0.0), PreconditionError);
    CHECK_THROWS_AS(whitening_stability_check(x, x, 0.5 * a, lambda), PreconditionError);
    CHECK_THROWS_AS(whitening_stability_check(Eigen::MatrixXd(x.array() + 1.0), x, 2 * a + 3, lambda / 4),
                    PreconditionError);
  }
}

TEST_CASE("float instantiation") {
  const Eigen::MatrixXf x = gaussian(2000, 3, 7).cast<float>();
  const auto m = fit_whitening<float>(x);
  CHECK((covariance(apply_whitening(m, x)) - Eigen::MatrixXf::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-3f);
}

} // TEST_SUITE

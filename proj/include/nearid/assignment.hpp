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

#ifndef NEARID_ASSIGNMENT_HPP
#define NEARID_ASSIGNMENT_HPP

#include "nearid/linalg.hpp"
#include "nearid/types.hpp"

#include <limits>
#include <vector>

namespace nearid {

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method with
/// potentials, O(n^3)). Returns `assign` with row i matched to column assign[i].
template <typename Derived>
std::vector<Index> solve_assignment(const Eigen::MatrixBase<Derived>& cost) {
  using Scalar = typename Derived::Scalar;
  require_dims(cost.rows() == cost.cols(), "solve_assignment: cost matrix must be square");
  const Index n = cost.rows();
  const Scalar inf = std::numeric_limits<Scalar>::infinity();

  // 1-based arrays; column 0 is a sentinel.
  std::vector<Scalar> u(n + 1, 0), v(n + 1, 0);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<Scalar> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      Scalar delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const Scalar cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Index> assign(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= n; ++j)
    if (p[j] != 0) assign[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return assign;
}

/// Pearson correlation between every column of `a` and every column of `b`.
/// Throws when a column is constant.
template <typename Scalar>
Matrix<Scalar> cross_correlation(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  require_dims(a.rows() == b.rows(), "cross_correlation: row count mismatch");
  const Matrix<Scalar> ca = a.rowwise() - a.colwise().mean();
  const Matrix<Scalar> cb = b.rowwise() - b.colwise().mean();
  const Vector<Scalar> na = ca.colwise().norm().transpose();
  const Vector<Scalar> nb = cb.colwise().norm().transpose();
  for (Index j = 0; j < na.size(); ++j)
    if (!(na(j) > 0)) throw PreconditionError("correlation undefined: source column " + std::to_string(j) + " is constant");
  for (Index j = 0; j < nb.size(); ++j)
    if (!(nb(j) > 0)) throw PreconditionError("correlation undefined: target column " + std::to_string(j) + " is constant");
  return na.cwiseInverse().asDiagonal() * (ca.transpose() * cb) * nb.cwiseInverse().asDiagonal();
}

/// A signed permutation mapping source coordinates onto target coordinates:
/// target column j ≈ signs[j] * source column source_of[j].
struct SignedPermutation {
  std::vector<Index> source_of;
  std::vector<int> signs;

  template <typename Scalar = double>
  [[nodiscard]] Matrix<Scalar> matrix() const {
    const auto n = static_cast<Index>(source_of.size());
    Matrix<Scalar> p = Matrix<Scalar>::Zero(n, n);
    for (Index j = 0; j < n; ++j) p(j, source_of[static_cast<std::size_t>(j)]) = Scalar(signs[static_cast<std::size_t>(j)]);
    return p;
  }
};

/// Signed permutation maximising total absolute correlation; each sign follows
/// the sign of the matched correlation.
template <typename Scalar>
SignedPermutation match_by_correlation(const Matrix<Scalar>& source, const Matrix<Scalar>& target) {
  require_dims(source.cols() == target.cols(), "match_by_correlation: dimension mismatch");
  const Matrix<Scalar> corr = cross_correlation(source, target); // (source col, target col)
  const Matrix<Scalar> cost = -corr.cwiseAbs().transpose();      // rows: target columns
  const auto assign = solve_assignment(cost);
  SignedPermutation out;
  out.source_of = assign;
  out.signs.resize(assign.size());
  for (std::size_t j = 0; j < assign.size(); ++j)
    out.signs[j] = corr(assign[j], static_cast<Index>(j)) < 0 ? -1 : 1;
  return out;
}

} // namespace nearid

#endif // NEARID_ASSIGNMENT_HPP

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

#ifndef NEARID_LINALG_HPP
#define NEARID_LINALG_HPP

#include "nearid/types.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nearid {

/// Column means of a sample matrix (rows are samples).
template <typename Derived>
auto column_mean(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return Vector<Scalar>(x.colwise().mean().transpose());
}

/// Covariance with 1/N normalization.
template <typename Derived>
auto covariance(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Matrix<Scalar> centered = x.rowwise() - x.colwise().mean();
  return Matrix<Scalar>((centered.transpose() * centered) / Scalar(x.rows()));
}

/// Max-entry distance of AᵀA (tall/square) or AAᵀ (wide) from the identity.
template <typename Derived>
auto orthogonality_error(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() >= a.cols()) {
    const Matrix<Scalar> g = a.transpose() * a;
    return (g - Matrix<Scalar>::Identity(a.cols(), a.cols())).cwiseAbs().maxCoeff();
  }
  const Matrix<Scalar> g = a * a.transpose();
  return (g - Matrix<Scalar>::Identity(a.rows(), a.rows())).cwiseAbs().maxCoeff();
}

/// Haar-distributed matrix with orthonormal columns (rows x cols, rows >= cols),
/// or orthonormal rows when wide.
template <typename Scalar = double, typename Rng>
Matrix<Scalar> random_orthogonal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<Scalar> normal(0, 1);
  const bool wide = rows < cols;
  const Index tall_rows = wide ? cols : rows;
  const Index tall_cols = wide ? rows : cols;
  Matrix<Scalar> g(tall_rows, tall_cols);
  for (Index j = 0; j < tall_cols; ++j)
    for (Index i = 0; i < tall_rows; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix<Scalar>> qr(g);
  Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(tall_rows, tall_cols);
  const Matrix<Scalar> r = qr.matrixQR().topRows(tall_cols).template triangularView<Eigen::Upper>();
  for (Index j = 0; j < tall_cols; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  if (wide) return q.transpose();
  return q;
}

template <typename Scalar = double, typename Rng>
Matrix<Scalar> random_orthogonal(Index n, Rng& rng) {
  return random_orthogonal<Scalar>(n, n, rng);
}

/// Nearest matrix with orthonormal columns (or rows, when wide) in Frobenius
/// norm. Newton-Schulz from near-orthogonal starts, SVD otherwise.
template <typename Derived>
auto polar_factor(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  const bool wide = a.rows() < a.cols();
  Matrix<Scalar> x = wide ? Matrix<Scalar>(a.transpose()) : Matrix<Scalar>(a);
  const Index n = x.cols();
  const Matrix<Scalar> eye = Matrix<Scalar>::Identity(n, n);

  Scalar err = (x.transpose() * x - eye).norm();
  if (err < Scalar(0.5)) {
    for (int it = 0; it < 30 && err > std::numeric_limits<Scalar>::epsilon() * 8 * n; ++it) {
      const Matrix<Scalar> gram = x.transpose() * x;
      x = x * (Scalar(1.5) * eye - Scalar(0.5) * gram);
      err = (x.transpose() * x - eye).norm();
    }
  }
  if (!(err < Scalar(1e-10))) {
    Eigen::JacobiSVD<Matrix<Scalar>> svd(wide ? Matrix<Scalar>(a.transpose()) : Matrix<Scalar>(a),
                                         Eigen::ComputeThinU | Eigen::ComputeThinV);
    x = svd.matrixU() * svd.matrixV().transpose();
  }
  if (wide) return Matrix<Scalar>(x.transpose());
  return x;
}

/// Symmetric eigendecomposition with eigenvalues sorted descending and a
/// deterministic eigenvector sign (largest-magnitude entry positive).
template <typename Scalar>
struct SortedEigen {
  Vector<Scalar> values;
  Matrix<Scalar> vectors;
};

template <typename Derived>
auto sorted_symmetric_eigen(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es{Matrix<Scalar>(s)};
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
  const Index n = s.rows();
  SortedEigen<Scalar> out{Vector<Scalar>(n), Matrix<Scalar>(n, n)};
  for (Index k = 0; k < n; ++k) {
    out.values(k) = es.eigenvalues()(n - 1 - k);
    Vector<Scalar> v = es.eigenvectors().col(n - 1 - k);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.vectors.col(k) = v;
  }
  return out;
}

/// (W Wᵀ)^{-1/2} W: the nearest matrix with orthonormal rows.
template <typename Derived>
auto symmetric_decorrelation(const Eigen::MatrixBase<Derived>& w) {
  using Scalar = typename Derived::Scalar;
  // (W Wᵀ)^{-1/2} W equals the polar factor U Vᵀ; the SVD route stays
  // orthogonal to working precision even when W is nearly singular.
  Eigen::JacobiSVD<Matrix<Scalar>> svd(Matrix<Scalar>(w), Eigen::ComputeThinU | Eigen::ComputeThinV);
  return Matrix<Scalar>(svd.matrixU() * svd.matrixV().transpose());
}

/// Pairwise Euclidean diameter (max over all row pairs).
template <typename Derived>
auto diameter(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Scalar best2 = 0;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = i + 1; j < x.rows(); ++j)
      best2 = std::max(best2, (x.row(i) - x.row(j)).squaredNorm());
  return std::sqrt(best2);
}

/// 2-norm condition number via singular values; infinity when rank deficient.
template <typename Derived>
auto condition_number(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  Eigen::JacobiSVD<Matrix<Scalar>> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return std::numeric_limits<Scalar>::infinity();
  const Scalar lo = s(s.size() - 1);
  if (lo <= 0) return std::numeric_limits<Scalar>::infinity();
  return s(0) / lo;
}

} // namespace nearid

#endif // NEARID_LINALG_HPP

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

#ifndef NEARID_WHITENING_HPP
#define NEARID_WHITENING_HPP

#include "nearid/linalg.hpp"
#include "nearid/types.hpp"

#include <optional>
#include <vector>

namespace nearid {

enum class WhiteningForm {
  Symmetric, ///< W = Σ^{-1/2}, the unique SPD inverse square root
  Pca,       ///< W = Λ^{-1/2} Uᵀ, rows ordered by decreasing variance
};

/// Mean and whitening transform fitted on a representation set.
///
/// `transform` is d x D. With the symmetric form and no dropped dimensions it
/// is SPD. When dimensions are dropped the retained block is expressed in the
/// PCA basis (a D x D symmetric matrix of rank d has no d-dimensional output).
template <typename Scalar = double>
struct WhiteningModel {
  Vector<Scalar> mean;
  Matrix<Scalar> transform;
  Matrix<Scalar> inverse; ///< D x d, unwhitening map
  Vector<Scalar> eigenvalues; ///< covariance spectrum, descending, all D
  Index retained = 0;
  std::vector<Index> dropped; ///< indices into `eigenvalues`
  WhiteningForm form = WhiteningForm::Symmetric;

  [[nodiscard]] Index input_dimension() const { return mean.size(); }
};

struct WhiteningOptions {
  /// Relative floor: eigenvalues below floor * largest are dropped. The
  /// absolute floor, when set, overrides it.
  double relative_floor = 1e-10;
  std::optional<double> absolute_floor;
  WhiteningForm form = WhiteningForm::Symmetric;
};

template <typename Scalar>
WhiteningModel<Scalar> fit_whitening(const Matrix<Scalar>& x, const WhiteningOptions& options = {}) {
  const Index n = x.rows();
  const Index dim = x.cols();
  if (dim == 0) throw DimensionError("fit_whitening: zero-dimensional input");
  if (n <= dim) throw PreconditionError("fit_whitening: need more samples than dimensions");

  WhiteningModel<Scalar> model;
  model.form = options.form;
  model.mean = column_mean(x);
  const auto eig = sorted_symmetric_eigen(covariance(x));
  model.eigenvalues = eig.values;

  const Scalar largest = eig.values(0);
  const Scalar floor = options.absolute_floor ? Scalar(*options.absolute_floor)
                                              : Scalar(options.relative_floor) * std::max(largest, Scalar(0));
  std::vector<Index> keep;
  for (Index k = 0; k < dim; ++k) {
    if (eig.values(k) > floor && eig.values(k) > 0)
      keep.push_back(k);
    else
      model.dropped.push_back(k);
  }
  if (keep.empty()) throw PreconditionError("fit_whitening: all covariance eigenvalues are below the floor");

  const Index d = static_cast<Index>(keep.size());
  Matrix<Scalar> basis(dim, d);
  Vector<Scalar> lambda(d);
  for (Index k = 0; k < d; ++k) {
    basis.col(k) = eig.vectors.col(keep[k]);
    lambda(k) = eig.values(keep[k]);
  }
  model.retained = d;

  const Vector<Scalar> inv_sqrt = lambda.cwiseSqrt().cwiseInverse();
  const Vector<Scalar> sqrt_l = lambda.cwiseSqrt();
  if (options.form == WhiteningForm::Symmetric && d == dim) {
    model.transform = basis * inv_sqrt.asDiagonal() * basis.transpose();
    model.transform = Scalar(0.5) * (model.transform + model.transform.transpose()).eval();
    model.inverse = basis * sqrt_l.asDiagonal() * basis.transpose();
  } else {
    model.transform = inv_sqrt.asDiagonal() * basis.transpose();
    model.inverse = basis * sqrt_l.asDiagonal();
  }
  return model;
}

/// W(x - μ) per row.
template <typename Scalar>
Matrix<Scalar> apply_whitening(const WhiteningModel<Scalar>& model, const Matrix<Scalar>& x) {
  require_dims(x.cols() == model.input_dimension(), "apply_whitening: dimension mismatch");
  return (x.rowwise() - model.mean.transpose()) * model.transform.transpose();
}

template <typename Scalar>
Matrix<Scalar> unwhiten(const WhiteningModel<Scalar>& model, const Matrix<Scalar>& z) {
  require_dims(z.cols() == model.retained, "unwhiten: dimension mismatch");
  return (z * model.inverse.transpose()).rowwise() + model.mean.transpose();
}

template <typename Scalar>
RepresentationSet<Scalar> apply_whitening(const WhiteningModel<Scalar>& model, const RepresentationSet<Scalar>& reps) {
  RepresentationSet<Scalar> out(apply_whitening(model, reps.points));
  out.provenance = reps.provenance;
  out.provenance["whitened"] = model.form == WhiteningForm::Symmetric ? "symmetric" : "pca";
  return out;
}

/// Outcome of an empirical check of the whitening stability bound
/// ‖W'x' − Wx‖ ≤ λ^{-1/2}(1 + a²/λ) ε.
struct StabilityReport {
  double epsilon = 0;       ///< max row-wise ‖x − x'‖
  double max_deviation = 0; ///< max row-wise ‖W'x' − Wx‖
  double constant = 0;      ///< λ^{-1/2}(1 + a²/λ)
  double bound = 0;         ///< constant · epsilon
  bool violated = false;
};

/// Both inputs must be zero-mean (within 1e-9 per column), every row norm at
/// most `a`, and both covariances must have all eigenvalues >= lambda.
template <typename Scalar>
StabilityReport whitening_stability_check(const Matrix<Scalar>& x, const Matrix<Scalar>& x_prime, double a,
                                          double lambda) {
  require_dims(x.rows() == x_prime.rows() && x.cols() == x_prime.cols(),
               "whitening_stability_check: shape mismatch");
  if (!(lambda > 0)) throw PreconditionError("whitening_stability_check: lambda must be positive");
  const Scalar mean_tol = Scalar(1e-9) * std::max<Scalar>(1, Scalar(a));
  require(column_mean(x).cwiseAbs().maxCoeff() <= mean_tol && column_mean(x_prime).cwiseAbs().maxCoeff() <= mean_tol,
          "whitening_stability_check: inputs must be zero-mean");
  const Scalar norm_tol = Scalar(a) * (1 + Scalar(1e-12));
  require(x.rowwise().norm().maxCoeff() <= norm_tol && x_prime.rowwise().norm().maxCoeff() <= norm_tol,
          "whitening_stability_check: row norm exceeds a");

  const Matrix<Scalar> cov = covariance(x);
  const Matrix<Scalar> cov_p = covariance(x_prime);
  const auto eig = sorted_symmetric_eigen(cov);
  const auto eig_p = sorted_symmetric_eigen(cov_p);
  require(eig.values.minCoeff() >= Scalar(lambda) && eig_p.values.minCoeff() >= Scalar(lambda),
          "whitening_stability_check: covariance eigenvalue below lambda");

  auto inv_sqrt = [](const SortedEigen<Scalar>& e) {
    return Matrix<Scalar>(e.vectors * e.values.cwiseSqrt().cwiseInverse().asDiagonal() * e.vectors.transpose());
  };
  const Matrix<Scalar> w = inv_sqrt(eig);
  const Matrix<Scalar> w_p = inv_sqrt(eig_p);

  StabilityReport report;
  report.epsilon = double((x - x_prime).rowwise().norm().maxCoeff());
  report.max_deviation = double((x_prime * w_p.transpose() - x * w.transpose()).rowwise().norm().maxCoeff());
  report.constant = std::pow(lambda, -0.5) * (1.0 + a * a / lambda);
  report.bound = report.constant * report.epsilon;
  report.violated = report.max_deviation > report.bound * (1 + 1e-12) + 1e-14;
  return report;
}

} // namespace nearid

#endif // NEARID_WHITENING_HPP

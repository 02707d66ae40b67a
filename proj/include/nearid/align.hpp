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

#ifndef NEARID_ALIGN_HPP
#define NEARID_ALIGN_HPP

#include "nearid/assignment.hpp"
#include "nearid/ica.hpp"
#include "nearid/linalg.hpp"
#include "nearid/types.hpp"
#include "nearid/whitening.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace nearid {

enum class AlignmentKind { SignedPermutation, Rigid, Linear, IcaPermutation };

inline std::string to_string(AlignmentKind k) {
  switch (k) {
  case AlignmentKind::SignedPermutation: return "signed-permutation";
  case AlignmentKind::Rigid: return "rigid-with-scale";
  case AlignmentKind::Linear: return "linear";
  case AlignmentKind::IcaPermutation: return "ica-then-permutation";
  }
  return "unknown";
}

/// A fitted affine map y = A x + b from source coordinates to target
/// coordinates, plus the class-specific parameters it was built from.
template <typename Scalar = double>
struct AlignmentMap {
  AlignmentKind kind = AlignmentKind::Linear;
  Matrix<Scalar> linear; ///< A, target_dim x source_dim
  Vector<Scalar> offset; ///< b
  Index fitted_on = 0;

  // signed-permutation and ica-then-permutation
  std::optional<SignedPermutation> permutation;
  // rigid-with-scale: A = scale * rotation
  Matrix<Scalar> rotation;
  Scalar scale = 1;
  // linear
  double condition_number = 1;

  [[nodiscard]] Matrix<Scalar> apply(const Matrix<Scalar>& source) const {
    require_dims(source.cols() == linear.cols(), "AlignmentMap::apply: dimension mismatch");
    return (source * linear.transpose()).rowwise() + offset.transpose();
  }
};

/// Summed squared error of the mapped source against the target.
template <typename Scalar>
Scalar alignment_residual(const AlignmentMap<Scalar>& map, const Matrix<Scalar>& source, const Matrix<Scalar>& target) {
  require_dims(source.rows() == target.rows(), "alignment_residual: row count mismatch");
  return (map.apply(source) - target).squaredNorm();
}

template <typename Scalar>
AlignmentMap<Scalar> fit_signed_permutation(const Matrix<Scalar>& source, const Matrix<Scalar>& target) {
  require_dims(source.rows() == target.rows() && source.cols() == target.cols(),
               "fit_signed_permutation: source and target must have the same shape");
  AlignmentMap<Scalar> map;
  map.kind = AlignmentKind::SignedPermutation;
  map.permutation = match_by_correlation(source, target);
  map.linear = map.permutation->template matrix<Scalar>();
  map.offset = Vector<Scalar>::Zero(target.cols());
  map.fitted_on = source.rows();
  return map;
}

struct RigidOptions {
  bool with_scale = true;
  bool with_translation = true;
  bool allow_reflection = true;
};

/// Least-squares similarity transform (Umeyama/Procrustes).
template <typename Scalar>
AlignmentMap<Scalar> fit_rigid(const Matrix<Scalar>& source, const Matrix<Scalar>& target, const RigidOptions& options = {}) {
  require_dims(source.rows() == target.rows() && source.cols() == target.cols(),
               "fit_rigid: source and target must have the same shape");
  const Index n = source.rows();
  const Index dim = source.cols();
  if (n < dim) throw PreconditionError("fit_rigid: need at least as many samples as dimensions");

  const Vector<Scalar> mx = options.with_translation ? column_mean(source) : Vector<Scalar>(Vector<Scalar>::Zero(dim));
  const Vector<Scalar> my = options.with_translation ? column_mean(target) : Vector<Scalar>(Vector<Scalar>::Zero(dim));
  const Matrix<Scalar> xc = source.rowwise() - mx.transpose();
  const Matrix<Scalar> yc = target.rowwise() - my.transpose();
  const Scalar var_x = xc.squaredNorm() / Scalar(n);
  if (!(var_x > 0)) throw PreconditionError("fit_rigid: source has zero variance");

  const Matrix<Scalar> cross = (yc.transpose() * xc) / Scalar(n);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector<Scalar> signs = Vector<Scalar>::Ones(dim);
  if (!options.allow_reflection && (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) signs(dim - 1) = -1;

  AlignmentMap<Scalar> map;
  map.kind = AlignmentKind::Rigid;
  map.rotation = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
  map.scale = options.with_scale ? svd.singularValues().dot(signs) / var_x : Scalar(1);
  map.linear = map.scale * map.rotation;
  map.offset = my - map.linear * mx;
  map.fitted_on = n;
  return map;
}

/// Ordinary least squares y = A x + b.
template <typename Scalar>
AlignmentMap<Scalar> fit_linear(const Matrix<Scalar>& source, const Matrix<Scalar>& target) {
  require_dims(source.rows() == target.rows(), "fit_linear: row count mismatch");
  const Vector<Scalar> mx = column_mean(source);
  const Vector<Scalar> my = column_mean(target);
  const Matrix<Scalar> xc = source.rowwise() - mx.transpose();
  const Matrix<Scalar> yc = target.rowwise() - my.transpose();

  AlignmentMap<Scalar> map;
  map.kind = AlignmentKind::Linear;
  map.condition_number = double(condition_number(xc));
  if (!(map.condition_number <= 1e12)) throw PreconditionError("fit_linear: source is rank deficient (condition number > 1e12)");
  const Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(xc);
  map.linear = qr.solve(yc).transpose();
  map.offset = my - map.linear * mx;
  map.fitted_on = source.rows();
  return map;
}

/// Unsupervised alignment: whiten and unmix each side independently, match the
/// unmixed components by signed permutation, then map back into target
/// coordinates through the target's inverse unmixing and whitening.
template <typename Scalar>
AlignmentMap<Scalar> fit_ica_alignment(const Matrix<Scalar>& source, const Matrix<Scalar>& target,
                                       const IcaConfig& ica = {}, const WhiteningOptions& whitening = {}) {
  require_dims(source.rows() == target.rows() && source.cols() == target.cols(),
               "fit_ica_alignment: source and target must have the same shape");
  const auto ws = fit_whitening(source, whitening);
  const auto wt = fit_whitening(target, whitening);
  if (ws.retained != wt.retained) throw PreconditionError("fit_ica_alignment: sides retain different dimensions");
  const Matrix<Scalar> zs = apply_whitening(ws, source);
  const Matrix<Scalar> zt = apply_whitening(wt, target);
  IcaConfig cs = ica, ct = ica;
  ct.seed = ica.seed + 1;
  const auto qs = fit_ica(zs, cs);
  const auto qt = fit_ica(zt, ct);
  const Matrix<Scalar> ss = apply_ica(qs, zs);
  const Matrix<Scalar> st = apply_ica(qt, zt);

  AlignmentMap<Scalar> map;
  map.kind = AlignmentKind::IcaPermutation;
  map.permutation = match_by_correlation(ss, st);
  const Matrix<Scalar> p = map.permutation->template matrix<Scalar>();
  map.linear = wt.inverse * qt.rotation.transpose() * p * qs.rotation * ws.transform;
  map.offset = wt.mean - map.linear * ws.mean;
  map.fitted_on = source.rows();
  return map;
}

struct AlignmentReport {
  AlignmentKind kind = AlignmentKind::Linear;
  double mean_error = 0; ///< mean per-row ℓ2 error
  double diameter = 0;
  double normalized_error = 0;
  std::optional<double> ica_efficiency;
};

struct DiameterOptions {
  bool both_sides = false;      ///< use max(diam(mapped source), diam(target))
  Index exact_limit = 5000;     ///< above this, subsample this many rows
  std::uint64_t seed = 0;
};

/// Diameter, exact for small sets and over a seeded row subsample otherwise.
template <typename Scalar>
Scalar latent_diameter(const Matrix<Scalar>& x, Index exact_limit = 5000, std::uint64_t seed = 0) {
  if (x.rows() <= exact_limit) return diameter(x);
  std::vector<Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(exact_limit));
  std::sort(idx.begin(), idx.end());
  Matrix<Scalar> sub(exact_limit, x.cols());
  for (Index i = 0; i < exact_limit; ++i) sub.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
  return diameter(sub);
}

template <typename Scalar>
AlignmentReport normalized_error(const AlignmentMap<Scalar>& map, const Matrix<Scalar>& source, const Matrix<Scalar>& target,
                                 const DiameterOptions& options = {}) {
  require_dims(source.rows() == target.rows() && target.cols() == map.linear.rows(),
               "normalized_error: shape mismatch");
  const Matrix<Scalar> mapped = map.apply(source);
  AlignmentReport r;
  r.kind = map.kind;
  r.mean_error = double((mapped - target).rowwise().norm().mean());
  r.diameter = double(latent_diameter(target, options.exact_limit, options.seed));
  if (options.both_sides)
    r.diameter = std::max(r.diameter, double(latent_diameter(mapped, options.exact_limit, options.seed)));
  if (!(r.diameter > 0)) throw UndefinedMetricError("normalized_error: target diameter is zero");
  r.normalized_error = r.mean_error / r.diameter;
  return r;
}

/// (Permutation − ICA) / (Permutation − Rigid), reported raw.
inline double ica_efficiency(double perm_err, double rigid_err, double ica_err) {
  if (!(perm_err > rigid_err))
    throw UndefinedMetricError("ica_efficiency: permutation error must exceed rigid error");
  return (perm_err - ica_err) / (perm_err - rigid_err);
}

/// One row of the transform-class comparison: normalized errors per class.
struct AlignmentTableRow {
  double permutation = 0;
  double rigid = 0;
  double linear = 0;
  double ica = 0;
  std::optional<double> efficiency;
};

struct AlignmentTableOptions {
  RigidOptions rigid;
  IcaConfig ica;
  WhiteningOptions whitening;
  DiameterOptions diameter;
};

template <typename Scalar>
AlignmentTableRow alignment_table(const Matrix<Scalar>& source, const Matrix<Scalar>& target,
                                  const AlignmentTableOptions& options = {}) {
  AlignmentTableRow row;
  row.permutation = normalized_error(fit_signed_permutation(source, target), source, target, options.diameter).normalized_error;
  row.rigid = normalized_error(fit_rigid(source, target, options.rigid), source, target, options.diameter).normalized_error;
  row.linear = normalized_error(fit_linear(source, target), source, target, options.diameter).normalized_error;
  row.ica = normalized_error(fit_ica_alignment(source, target, options.ica, options.whitening), source, target,
                             options.diameter)
                .normalized_error;
  if (row.permutation > row.rigid) row.efficiency = ica_efficiency(row.permutation, row.rigid, row.ica);
  return row;
}

} // namespace nearid

#endif // NEARID_ALIGN_HPP

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

#ifndef NEARID_ICA_HPP
#define NEARID_ICA_HPP

#include "nearid/assignment.hpp"
#include "nearid/linalg.hpp"
#include "nearid/types.hpp"
#include "nearid/whitening.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace nearid {

enum class Contrast { LogCosh, Cubic };

inline std::string to_string(Contrast c) { return c == Contrast::LogCosh ? "logcosh" : "cubic"; }

inline Contrast contrast_from_string(const std::string& s) {
  if (s == "logcosh") return Contrast::LogCosh;
  if (s == "cubic") return Contrast::Cubic;
  throw PreconditionError("unknown contrast function '" + s + "'");
}

struct IcaConfig {
  int max_iterations = 500;
  double tolerance = 1e-6;
  int restarts = 5;
  Contrast contrast = Contrast::LogCosh;
  std::uint64_t seed = 0;

  void validate() const {
    require(tolerance > 0, "IcaConfig: tolerance must be positive");
    require(restarts >= 1, "IcaConfig: restarts must be >= 1");
    require(max_iterations >= 1, "IcaConfig: max_iterations must be >= 1");
  }
};

/// Orthogonal unmixing rotation; component d of a whitened row x is q_dᵀx.
template <typename Scalar = double>
struct IcaModel {
  Matrix<Scalar> rotation;
  Contrast contrast = Contrast::LogCosh;
  int iterations = 0;
  double convergence_delta = 0;
  bool converged = false;
  std::uint64_t seed = 0;
  /// Set when some recovered component is statistically indistinguishable
  /// from Gaussian under the contrast (the rotation is then not identifiable).
  bool weak_nongaussianity = false;
  double nongaussianity = 0; ///< Σ_d (E G(y_d) − E G(ν))², used to rank restarts
  int best_restart = 0;

  [[nodiscard]] Index dimension() const { return rotation.rows(); }
};

namespace detail {

/// E[G(ν)] for ν ~ N(0, 1).
inline double gaussian_contrast_mean(Contrast c) { return c == Contrast::LogCosh ? 0.374567207491438 : 0.75; }

template <typename Scalar>
inline Scalar contrast_g(Contrast c, Scalar y) {
  if (c == Contrast::LogCosh) {
    const Scalar a = std::abs(y);
    // log cosh a = a + log1p(exp(-2a)) - log 2, stable for large a
    return a + std::log1p(std::exp(-2 * a)) - Scalar(0.69314718055994530942);
  }
  const Scalar y2 = y * y;
  return y2 * y2 / 4;
}

template <typename Scalar>
Vector<Scalar> per_component_contrast(Contrast c, const Matrix<Scalar>& y) {
  Vector<Scalar> out(y.cols());
  for (Index d = 0; d < y.cols(); ++d) {
    Scalar s = 0;
    for (Index n = 0; n < y.rows(); ++n) s += contrast_g(c, y(n, d));
    out(d) = s / Scalar(y.rows());
  }
  return out;
}

template <typename Scalar>
Scalar sorted_sum(Vector<Scalar> v) {
  std::sort(v.data(), v.data() + v.size());
  Scalar s = 0;
  for (Index i = 0; i < v.size(); ++i) s += v(i);
  return s;
}

inline std::uint64_t restart_seed(std::uint64_t seed, int restart) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(restart), 0x1ca5eedu};
  std::uint64_t out = 0;
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out = (std::uint64_t(words[0]) << 32) | words[1];
  return out;
}

template <typename Scalar>
struct FixedPointResult {
  Matrix<Scalar> q;
  int iterations = 0;
  double delta = 0;
  bool converged = false;
};

/// Symmetric FastICA fixed point from a given orthogonal start.
template <typename Scalar>
FixedPointResult<Scalar> fixed_point(const Matrix<Scalar>& x, Matrix<Scalar> q, const IcaConfig& config) {
  const Index n = x.rows();
  const Index dim = x.cols();
  FixedPointResult<Scalar> res;
  for (int it = 1; it <= config.max_iterations; ++it) {
    const Matrix<Scalar> y = x * q.transpose();
    Matrix<Scalar> g(n, dim);
    Vector<Scalar> gprime_mean = Vector<Scalar>::Zero(dim);
    if (config.contrast == Contrast::LogCosh) {
      for (Index d = 0; d < dim; ++d)
        for (Index i = 0; i < n; ++i) {
          const Scalar t = std::tanh(y(i, d));
          g(i, d) = t;
          gprime_mean(d) += 1 - t * t;
        }
    } else {
      for (Index d = 0; d < dim; ++d)
        for (Index i = 0; i < n; ++i) {
          const Scalar v = y(i, d);
          g(i, d) = v * v * v;
          gprime_mean(d) += 3 * v * v;
        }
    }
    gprime_mean /= Scalar(n);
    Matrix<Scalar> q_new = (g.transpose() * x) / Scalar(n) - gprime_mean.asDiagonal() * q;
    q_new = symmetric_decorrelation(q_new);
    assert(orthogonality_error(q_new) < 1e-8);

    const Scalar delta = 1 - (q_new * q.transpose()).diagonal().cwiseAbs().minCoeff();
    q = std::move(q_new);
    res.iterations = it;
    res.delta = double(std::abs(delta));
    if (std::abs(delta) < Scalar(config.tolerance)) {
      res.converged = true;
      break;
    }
  }
  res.q = std::move(q);
  return res;
}

template <typename Scalar>
void check_whitened(const Matrix<Scalar>& x, const char* who) {
  const Vector<Scalar> mean = column_mean(x);
  const Matrix<Scalar> centered = x.rowwise() - mean.transpose();
  const Vector<Scalar> var = (centered.array().square().colwise().sum() / Scalar(x.rows())).transpose();
  if (mean.cwiseAbs().maxCoeff() > Scalar(1e-3) || (var.array() - 1).abs().maxCoeff() > Scalar(1e-3))
    throw PreconditionError(std::string(who) + ": input is not whitened (columns need zero mean, unit variance)");
}

} // namespace detail

/// Mean over samples of Σ_d G(q_dᵀx). Components are summed in sorted order so
/// the value is bit-identical under any signed permutation of the rotation rows.
template <typename Scalar>
Scalar contrast_value(const Matrix<Scalar>& rotation, Contrast contrast, const Matrix<Scalar>& whitened) {
  if (whitened.rows() == 0) throw PreconditionError("contrast_value: empty dataset");
  require_dims(whitened.cols() == rotation.cols(), "contrast_value: dimension mismatch");
  return detail::sorted_sum(detail::per_component_contrast(contrast, Matrix<Scalar>(whitened * rotation.transpose())));
}

template <typename Scalar>
Scalar contrast_value(const IcaModel<Scalar>& model, const Matrix<Scalar>& whitened) {
  return contrast_value(model.rotation, model.contrast, whitened);
}

/// Fits the unmixing rotation by symmetric fixed-point iteration from
/// `config.restarts` random orthogonal starts, keeping the most non-Gaussian.
template <typename Scalar>
IcaModel<Scalar> fit_ica(const Matrix<Scalar>& whitened, const IcaConfig& config = {}) {
  config.validate();
  const Index dim = whitened.cols();
  if (dim < 2) throw PreconditionError("fit_ica: need at least two dimensions");
  if (whitened.rows() <= 10 * dim) throw PreconditionError("fit_ica: need more than 10*D samples");
  detail::check_whitened(whitened, "fit_ica");

  const Scalar gauss = Scalar(detail::gaussian_contrast_mean(config.contrast));
  IcaModel<Scalar> best;
  best.nongaussianity = -1;
  for (int r = 0; r < config.restarts; ++r) {
    std::mt19937_64 rng(detail::restart_seed(config.seed, r));
    const auto fp = detail::fixed_point(whitened, random_orthogonal<Scalar>(dim, rng), config);
    const Vector<Scalar> per = detail::per_component_contrast(config.contrast, Matrix<Scalar>(whitened * fp.q.transpose()));
    const double score = double((per.array() - gauss).square().sum());
    if (score > best.nongaussianity) {
      best.rotation = fp.q;
      best.iterations = fp.iterations;
      best.convergence_delta = fp.delta;
      best.converged = fp.converged;
      best.nongaussianity = score;
      best.best_restart = r;
    }
  }
  best.contrast = config.contrast;
  best.seed = config.seed;

  // z-score of each component's contrast against the Gaussian value
  const Matrix<Scalar> y = whitened * best.rotation.transpose();
  const Index n = y.rows();
  for (Index d = 0; d < dim; ++d) {
    Scalar mean = 0, sq = 0;
    for (Index i = 0; i < n; ++i) {
      const Scalar g = detail::contrast_g(config.contrast, y(i, d));
      mean += g;
      sq += g * g;
    }
    mean /= Scalar(n);
    const Scalar sd = std::sqrt(std::max<Scalar>(sq / Scalar(n) - mean * mean, 0));
    const Scalar z = std::abs(mean - gauss) / (sd / std::sqrt(Scalar(n)) + std::numeric_limits<Scalar>::min());
    if (z < 3) best.weak_nongaussianity = true; // ~3 standard errors from the Gaussian value
  }
  return best;
}

template <typename Scalar>
Matrix<Scalar> apply_ica(const Matrix<Scalar>& rotation, const Matrix<Scalar>& whitened) {
  require_dims(whitened.cols() == rotation.cols(), "apply_ica: dimension mismatch");
  return whitened * rotation.transpose();
}

template <typename Scalar>
Matrix<Scalar> apply_ica(const IcaModel<Scalar>& model, const Matrix<Scalar>& whitened) {
  return apply_ica(model.rotation, whitened);
}

/// Riemannian Hessian of the mean contrast at `rotation`, in the orthonormal
/// basis {(e_i e_jᵀ − e_j e_iᵀ)/√2 : i < j} of skew-symmetric directions,
/// by central differences along Q ↦ exp(Ω) Q.
template <typename Scalar>
Matrix<Scalar> contrast_hessian(const Matrix<Scalar>& rotation, Contrast contrast, const Matrix<Scalar>& whitened,
                                Scalar step = Scalar(1e-3)) {
  const Index dim = rotation.rows();
  std::vector<Matrix<Scalar>> basis;
  for (Index i = 0; i < dim; ++i)
    for (Index j = i + 1; j < dim; ++j) {
      Matrix<Scalar> e = Matrix<Scalar>::Zero(dim, dim);
      e(i, j) = Scalar(1) / std::sqrt(Scalar(2));
      e(j, i) = -e(i, j);
      basis.push_back(e);
    }
  const auto m = static_cast<Index>(basis.size());
  auto value_at = [&](const Matrix<Scalar>& omega) {
    const Matrix<Scalar> rot = Matrix<Scalar>(omega.exp()) * rotation;
    return contrast_value(rot, contrast, whitened);
  };
  Matrix<Scalar> h(m, m);
  const Scalar f0 = value_at(Matrix<Scalar>::Zero(dim, dim));
  for (Index a = 0; a < m; ++a) {
    const Matrix<Scalar>& ea = basis[static_cast<std::size_t>(a)];
    h(a, a) = (value_at(step * ea) - 2 * f0 + value_at(-step * ea)) / (step * step);
    for (Index b = a + 1; b < m; ++b) {
      const Matrix<Scalar>& eb = basis[static_cast<std::size_t>(b)];
      const Scalar v = (value_at(step * (ea + eb)) - value_at(step * (ea - eb)) - value_at(step * (eb - ea)) +
                        value_at(-step * (ea + eb))) /
                       (4 * step * step);
      h(a, b) = v;
      h(b, a) = v;
    }
  }
  return h;
}

/// Curvature floor of the contrast at an extremum: the smallest eigenvalue of
/// the Hessian oriented so that a strict extremum (max or min) is positive.
/// Saddles yield a non-positive value.
template <typename Scalar>
Scalar hessian_floor(const Matrix<Scalar>& hessian) {
  if (hessian.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(hessian);
  const Vector<Scalar> ev = es.eigenvalues();
  const Scalar sign = ev.sum() <= 0 ? Scalar(-1) : Scalar(1);
  return (sign * ev).minCoeff();
}

struct PerturbationLevel {
  double scale = 0;
  double effective_b = 0;   ///< max ‖y_n − x_n‖ after re-whitening
  double max_deviation = 0; ///< max ‖Q⋆x − P·Q_b·y‖ after signed-permutation matching
  double bound = 0;         ///< (L₂(a+b) + √D L₁)ab/μ̂ + b; NaN when μ̂ <= 0
  bool bound_checked = false;
  bool bound_holds = true;
};

struct PerturbationReport {
  std::vector<PerturbationLevel> levels;
  double a = 0;            ///< max ‖x_n‖
  double hessian_floor = 0; ///< μ̂
  double lipschitz_g1 = 1; ///< L₁
  double lipschitz_g2 = 1; ///< L₂
  double spearman = 0;     ///< rank correlation of deviation against scale
};

inline double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * double(i + j) + 1;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const auto n = double(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0;
  return sxy / std::sqrt(sxx * syy);
}

/// Refits ICA on additively perturbed, re-whitened copies of `whitened` and
/// measures how far the unmixed samples move.
template <typename Scalar>
PerturbationReport ica_perturbation_probe(const Matrix<Scalar>& whitened, const std::vector<double>& noise_scales,
                                          const IcaConfig& config) {
  require(!noise_scales.empty(), "ica_perturbation_probe: no noise scales");
  for (std::size_t i = 0; i < noise_scales.size(); ++i) {
    require(noise_scales[i] >= 0, "ica_perturbation_probe: scales must be nonnegative");
    require(i == 0 || noise_scales[i] >= noise_scales[i - 1], "ica_perturbation_probe: scales must be ascending");
    require(noise_scales[i] < 1,
            "ica_perturbation_probe: scale >= 1 destroys the whitened structure the probe relies on");
  }
  const Index n = whitened.rows();
  const Index dim = whitened.cols();

  const IcaModel<Scalar> base = fit_ica(whitened, config);
  const Matrix<Scalar> ref = apply_ica(base, whitened);

  PerturbationReport report;
  report.a = double(whitened.rowwise().norm().maxCoeff());
  if (config.contrast == Contrast::Cubic) {
    // |y³| and |3y²| on the data radius
    report.lipschitz_g1 = std::pow(report.a, 3);
    report.lipschitz_g2 = 3 * report.a * report.a;
  }
  report.hessian_floor = double(hessian_floor(contrast_hessian(base.rotation, config.contrast, whitened)));

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<Scalar> normal(0, 1);
  std::uniform_real_distribution<Scalar> unif(0, 1);
  std::vector<double> scales, devs;
  for (double scale : noise_scales) {
    PerturbationLevel level;
    level.scale = scale;
    Matrix<Scalar> y = whitened;
    if (scale > 0) {
      Matrix<Scalar> eps(n, dim);
      for (Index i = 0; i < n; ++i) {
        for (Index d = 0; d < dim; ++d) eps(i, d) = normal(rng);
        eps.row(i) *= Scalar(scale) * unif(rng) / eps.row(i).norm();
      }
      WhiteningOptions wo;
      y = apply_whitening(fit_whitening<Scalar>(whitened + eps, wo), Matrix<Scalar>(whitened + eps));
    }
    level.effective_b = double((y - whitened).rowwise().norm().maxCoeff());
    const IcaModel<Scalar> pert = fit_ica(y, config);
    const Matrix<Scalar> out = apply_ica(pert, y);
    const SignedPermutation p = match_by_correlation(out, ref);
    const Matrix<Scalar> aligned = out * p.matrix<Scalar>().transpose();
    level.max_deviation = double((ref - aligned).rowwise().norm().maxCoeff());
    if (report.hessian_floor > 0) {
      const double a = report.a, b = level.effective_b;
      level.bound = (report.lipschitz_g2 * (a + b) + std::sqrt(double(dim)) * report.lipschitz_g1) * a * b /
                        report.hessian_floor +
                    b;
      level.bound_checked = true;
      level.bound_holds = level.max_deviation <= level.bound;
    } else {
      level.bound = std::numeric_limits<double>::quiet_NaN();
    }
    scales.push_back(scale);
    devs.push_back(level.max_deviation);
    report.levels.push_back(level);
  }
  report.spearman = spearman_correlation(scales, devs);
  return report;
}

} // namespace nearid

#endif // NEARID_ICA_HPP

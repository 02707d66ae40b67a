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

#include "nearid/synthdata.hpp"

#include "nearid/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nearid {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

double overlap(double lo, double hi, double a, double b) { return std::max(0.0, std::min(hi, b) - std::max(lo, a)); }

} // namespace

std::string to_string(SourceDistribution d) {
  switch (d) {
  case SourceDistribution::Uniform: return "uniform";
  case SourceDistribution::Laplace: return "laplace";
  case SourceDistribution::Gaussian: return "gaussian";
  }
  return "unknown";
}

SourceDistribution distribution_from_string(const std::string& s) {
  if (s == "uniform") return SourceDistribution::Uniform;
  if (s == "laplace") return SourceDistribution::Laplace;
  if (s == "gaussian") return SourceDistribution::Gaussian;
  throw PreconditionError("unsupported source distribution '" + s + "'");
}

SourceSpec SourceSpec::iid(Index dimension, SourceDistribution dist, std::uint64_t seed) {
  SourceSpec spec;
  spec.components.assign(static_cast<std::size_t>(std::max<Index>(dimension, 0)), dist);
  spec.seed = seed;
  return spec;
}

bool SourceSpec::ica_recoverable() const {
  return std::count(components.begin(), components.end(), SourceDistribution::Gaussian) <= 1;
}

nlohmann::json SourceSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = "sources";
  j["seed"] = seed;
  auto& c = j["components"] = nlohmann::json::array();
  for (auto d : components) c.push_back(to_string(d));
  return j;
}

LabeledDataset sample_sources(const SourceSpec& spec, Index n) {
  if (spec.dimension() == 0) throw PreconditionError("sample_sources: dimension must be positive");
  if (n < 1) throw PreconditionError("sample_sources: need at least one sample");
  const Index dim = spec.dimension();

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(-kSqrt3, kSqrt3);
  std::uniform_real_distribution<double> open01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double laplace_scale = 1.0 / std::sqrt(2.0);

  Eigen::MatrixXd u(n, dim);
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dim; ++d) {
      switch (spec.components[static_cast<std::size_t>(d)]) {
      case SourceDistribution::Uniform: u(i, d) = unif(rng); break;
      case SourceDistribution::Gaussian: u(i, d) = normal(rng); break;
      case SourceDistribution::Laplace: {
        double v = open01(rng) - 0.5;
        while (v == -0.5) v = open01(rng) - 0.5;
        u(i, d) = -laplace_scale * (v < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(v));
        break;
      }
      }
    }
  }
  LabeledDataset out;
  out.latents = u;
  out.observations = u;
  out.spec = spec.to_json();
  out.seed = spec.seed;
  return out;
}

std::string to_string(MixingKind k) {
  switch (k) {
  case MixingKind::Linear: return "linear";
  case MixingKind::Rotation: return "rotation";
  case MixingKind::BiLipschitz: return "bi-lipschitz-nonlinear";
  }
  return "unknown";
}

MixingKind mixing_kind_from_string(const std::string& s) {
  if (s == "linear") return MixingKind::Linear;
  if (s == "rotation") return MixingKind::Rotation;
  if (s == "bi-lipschitz-nonlinear" || s == "bilipschitz") return MixingKind::BiLipschitz;
  throw PreconditionError("unsupported mixing kind '" + s + "'");
}

MixingSpec MixingSpec::linear(Eigen::MatrixXd matrix) {
  MixingSpec s;
  s.kind = MixingKind::Linear;
  s.input_dim = matrix.cols();
  s.output_dim = matrix.rows();
  s.matrix = std::move(matrix);
  return s;
}

MixingSpec MixingSpec::rotation(Eigen::MatrixXd matrix) {
  MixingSpec s = linear(std::move(matrix));
  s.kind = MixingKind::Rotation;
  return s;
}

MixingSpec MixingSpec::random_rotation(Index dimension, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MixingSpec s = rotation(random_orthogonal(dimension, rng));
  s.seed = seed;
  return s;
}

MixingSpec MixingSpec::bilipschitz(Index input_dim, Index output_dim, double delta, std::uint64_t seed) {
  MixingSpec s;
  s.kind = MixingKind::BiLipschitz;
  s.input_dim = input_dim;
  s.output_dim = output_dim;
  s.delta = delta;
  s.seed = seed;
  return s;
}

nlohmann::json MixingSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  j["input_dim"] = input_dim;
  j["output_dim"] = output_dim;
  j["seed"] = seed;
  if (kind == MixingKind::BiLipschitz) {
    j["delta"] = delta;
  } else {
    auto& m = j["matrix"] = nlohmann::json::array();
    for (Index r = 0; r < matrix.rows(); ++r)
      for (Index c = 0; c < matrix.cols(); ++c) m.push_back(matrix(r, c));
  }
  return j;
}

BiLipschitzMap::BiLipschitzMap(Index input_dim, Index output_dim, double delta, std::uint64_t seed)
    : input_dim_(input_dim), output_dim_(output_dim), delta_(delta) {
  require(input_dim >= 1, "bi-Lipschitz map: input dimension must be positive");
  require(output_dim >= input_dim, "bi-Lipschitz map: output dimension must be >= input dimension");
  require(delta >= 0, "bi-Lipschitz map: delta must be nonnegative");
  std::mt19937_64 rng(seed);
  inner_ = random_orthogonal(output_dim, rng);
  outer_ = random_orthogonal(output_dim, rng);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  phases_.resize(output_dim);
  for (Index i = 0; i < output_dim; ++i) phases_(i) = phase(rng);
  frequency_ = 2.0;
  // φ'(x) = 1 + c cos(·) ∈ [1 − c, 1 + c] with c = δ/(1+δ), so 1 − c = 1/(1+δ)
  amplitude_ = (delta / (1.0 + delta)) / frequency_;
}

Eigen::MatrixXd BiLipschitzMap::apply(const Eigen::MatrixXd& u) const {
  require_dims(u.cols() == input_dim_, "bi-Lipschitz map: dimension mismatch");
  Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(u.rows(), output_dim_);
  padded.leftCols(input_dim_) = u;
  Eigen::MatrixXd v = padded * inner_.transpose();
  for (Index j = 0; j < v.cols(); ++j)
    for (Index i = 0; i < v.rows(); ++i) v(i, j) += amplitude_ * std::sin(frequency_ * v(i, j) + phases_(j));
  return v * outer_.transpose();
}

LabeledDataset mix(const LabeledDataset& dataset, const MixingSpec& spec) {
  LabeledDataset out = dataset;
  const Index in = dataset.latents.cols();
  nlohmann::json mixing = spec.to_json();
  switch (spec.kind) {
  case MixingKind::Linear:
  case MixingKind::Rotation: {
    require_dims(spec.matrix.cols() == in, "mix: mixing matrix input dimension does not match latents");
    require(spec.matrix.rows() >= spec.matrix.cols(), "mix: output dimension must be >= input dimension");
    if (spec.kind == MixingKind::Rotation) {
      if (orthogonality_error(spec.matrix) > 1e-10) throw PreconditionError("mix: rotation matrix is not orthogonal");
    } else if (!(condition_number(spec.matrix) <= 1e12)) {
      throw PreconditionError("mix: linear mixing matrix is singular (condition number > 1e12)");
    }
    out.observations = dataset.latents * spec.matrix.transpose();
    break;
  }
  case MixingKind::BiLipschitz: {
    require_dims(spec.input_dim == in, "mix: mixing input dimension does not match latents");
    const BiLipschitzMap map(spec.input_dim, spec.output_dim, spec.delta, spec.seed);
    out.observations = map.apply(dataset.latents);
    break;
  }
  }
  out.spec = nlohmann::json{{"kind", "mixed"}, {"sources", dataset.spec}, {"mixing", mixing}};
  return out;
}

void SquareManifoldSpec::validate() const {
  require(pixels >= 1, "square manifold: pixel count must be positive");
  require(position_min <= position_max, "square manifold: position range is empty");
  require(position_min > -1 && position_max < 1, "square manifold: position range must lie in (-1, 1)");
  require(radius_min > 0 && radius_min <= radius_max && radius_max < 1, "square manifold: need 0 < R0 <= R < 1");
  require(position_min - radius_max >= -1 && position_max + radius_max <= 1,
          "square manifold: squares would leave the frame");
}

nlohmann::json SquareManifoldSpec::to_json() const {
  return {{"kind", "squares"},
          {"position_min", position_min},
          {"position_max", position_max},
          {"radius_min", radius_min},
          {"radius_max", radius_max},
          {"pixels", pixels}};
}

Eigen::VectorXd render_square(const SquareManifoldSpec& spec, double p, double r) {
  const int n = spec.pixels;
  const double h = spec.pixel_width();
  const double area = h * h;
  Eigen::VectorXd cov_x(n), cov_y(n);
  for (int i = 0; i < n; ++i) {
    const double lo = -1.0 + i * h, hi = lo + h;
    cov_x(i) = overlap(lo, hi, p - r, p + r);
    cov_y(i) = overlap(lo, hi, -r, r);
  }
  Eigen::VectorXd img(static_cast<Index>(n) * n);
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col)
      img(static_cast<Index>(row) * n + col) = std::min(1.0, cov_y(row) * cov_x(col) / area);
  return img;
}

LabeledDataset render_squares(const SquareManifoldSpec& spec, const Eigen::MatrixXd& latents) {
  spec.validate();
  require_dims(latents.cols() == 2, "render_squares: latents must have two columns (p, r)");
  for (Index i = 0; i < latents.rows(); ++i) {
    const double p = latents(i, 0), r = latents(i, 1);
    if (!(p >= spec.position_min && p <= spec.position_max && r >= spec.radius_min && r <= spec.radius_max))
      throw PreconditionError("render_squares: latent row " + std::to_string(i) + " is outside the spec ranges");
  }
  LabeledDataset out;
  out.latents = latents;
  out.observations.resize(latents.rows(), static_cast<Index>(spec.pixels) * spec.pixels);
  for (Index i = 0; i < latents.rows(); ++i) out.observations.row(i) = render_square(spec, latents(i, 0), latents(i, 1)).transpose();
  out.spec = spec.to_json();
  return out;
}

LabeledDataset sample_squares(const SquareManifoldSpec& spec, Index n, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(spec.position_min, spec.position_max);
  std::uniform_real_distribution<double> rad(spec.radius_min, spec.radius_max);
  Eigen::MatrixXd latents(n, 2);
  for (Index i = 0; i < n; ++i) {
    latents(i, 0) = pos(rng);
    latents(i, 1) = rad(rng);
  }
  LabeledDataset out = render_squares(spec, latents);
  out.seed = seed;
  return out;
}

Eigen::MatrixXd reparameterize_square_latents(const Eigen::MatrixXd& latents) {
  require_dims(latents.cols() == 2, "reparameterize_square_latents: expected (p, r) columns");
  Eigen::MatrixXd out(latents.rows(), 2);
  out.col(0) = latents.col(0) / 4.0;
  out.col(1) = latents.col(1) * 2.0;
  return out;
}

double MetricReport::cosine() const { return cross / std::sqrt(dp_sq * dr_sq); }

MetricReport manifold_metric_check(const SquareManifoldSpec& spec, double p, double r, std::optional<double> step) {
  spec.validate();
  const double h0 = step.value_or(spec.pixel_width() / 64.0);
  require(h0 > 0, "manifold_metric_check: step must be positive");
  if (p - h0 < spec.position_min || p + h0 > spec.position_max || r - h0 < spec.radius_min || r + h0 > spec.radius_max)
    throw PreconditionError("manifold_metric_check: finite-difference step exceeds distance to the range boundary");

  // Coverage is piecewise linear in (p, r), so one-sided differences are exact
  // within a piece. A central difference at an edge sitting on a pixel boundary
  // splits the rate across two pixels and halves that edge's squared norm.
  // Instead, each quadratic form Q(v) = |df.v|^2 averages its forward and
  // backward one-sided estimates, and the cross term follows by polarization.
  const Eigen::VectorXd f0 = render_square(spec, p, r);
  auto estimate = [&](double h) {
    auto q = [&](double vp, double vr) {
      const double fwd = (render_square(spec, p + h * vp, r + h * vr) - f0).squaredNorm();
      const double bwd = (f0 - render_square(spec, p - h * vp, r - h * vr)).squaredNorm();
      return 0.5 * (fwd + bwd) / (h * h);
    };
    return Eigen::Vector3d(q(1, 0), q(0, 1), 0.25 * (q(1, 1) - q(1, -1)));
  };

  MetricReport report;
  double h = h0;
  Eigen::Vector3d prev = estimate(h);
  Eigen::Vector3d cur = estimate(h / 2);
  double prev_change = (cur - prev).cwiseAbs().maxCoeff();
  h /= 2;
  report.halvings = 1;
  for (int k = 0; k < 8; ++k) {
    const Eigen::Vector3d next = estimate(h / 2);
    const double change = (next - cur).cwiseAbs().maxCoeff();
    h /= 2;
    ++report.halvings;
    cur = next;
    if (change <= prev_change + 1e-12 * cur.cwiseAbs().maxCoeff()) {
      report.converged = true;
      break;
    }
    prev_change = change;
  }
  report.dp_sq = cur(0);
  report.dr_sq = cur(1);
  report.cross = cur(2);
  report.step = h;
  return report;
}

} // namespace nearid

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

#ifndef NEARID_SYNTHDATA_HPP
#define NEARID_SYNTHDATA_HPP

#include "nearid/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nearid {

enum class SourceDistribution {
  Uniform,  ///< uniform on [−√3, √3]
  Laplace,  ///< Laplace with unit variance
  Gaussian, ///< standard normal
};

std::string to_string(SourceDistribution d);
SourceDistribution distribution_from_string(const std::string& s);

struct SourceSpec {
  std::vector<SourceDistribution> components;
  std::uint64_t seed = 0;

  static SourceSpec iid(Index dimension, SourceDistribution dist, std::uint64_t seed);
  [[nodiscard]] Index dimension() const { return static_cast<Index>(components.size()); }
  /// At most one Gaussian component: the mixture is recoverable by ICA.
  [[nodiscard]] bool ica_recoverable() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Ground-truth latents U (N x K) with observations X (N x M).
struct LabeledDataset {
  Eigen::MatrixXd latents;
  Eigen::MatrixXd observations;
  nlohmann::json spec;
  std::uint64_t seed = 0;
};

/// Independent unit-variance sources; the observations equal the latents.
LabeledDataset sample_sources(const SourceSpec& spec, Index n);

enum class MixingKind { Linear, Rotation, BiLipschitz };

std::string to_string(MixingKind k);
MixingKind mixing_kind_from_string(const std::string& s);

struct MixingSpec {
  MixingKind kind = MixingKind::Linear;
  Eigen::MatrixXd matrix; ///< output x input, for linear and rotation kinds
  double delta = 0;       ///< bi-Lipschitz slack: distortion within [1/(1+δ), 1+δ]
  Index input_dim = 0;
  Index output_dim = 0;
  std::uint64_t seed = 0;

  static MixingSpec linear(Eigen::MatrixXd matrix);
  static MixingSpec rotation(Eigen::MatrixXd matrix);
  static MixingSpec random_rotation(Index dimension, std::uint64_t seed);
  static MixingSpec bilipschitz(Index input_dim, Index output_dim, double delta, std::uint64_t seed);

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Rotation ∘ componentwise monotone map ∘ rotation, with each componentwise
/// derivative confined to [1/(1+δ), 1 + δ/(1+δ)]. Inputs are zero-padded to
/// the output dimension before the first rotation.
class BiLipschitzMap {
public:
  BiLipschitzMap(Index input_dim, Index output_dim, double delta, std::uint64_t seed);

  [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& u) const;
  [[nodiscard]] double delta() const { return delta_; }

private:
  Index input_dim_;
  Index output_dim_;
  double delta_;
  double amplitude_; ///< c/ω in φ(x) = x + (c/ω) sin(ωx + θ)
  double frequency_;
  Eigen::VectorXd phases_;
  Eigen::MatrixXd inner_;
  Eigen::MatrixXd outer_;
};

LabeledDataset mix(const LabeledDataset& dataset, const MixingSpec& spec);

/// White square of half-side r centred at (p, 0) in the frame [−1, 1]².
struct SquareManifoldSpec {
  double position_min = -0.5;
  double position_max = 0.5;
  double radius_min = 0.1;
  double radius_max = 0.4;
  int pixels = 64;

  void validate() const;
  [[nodiscard]] double pixel_width() const { return 2.0 / pixels; }
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Area-coverage rendering: each pixel holds the fraction of its cell covered
/// by the square. Pixels are row-major with rows along y.
Eigen::VectorXd render_square(const SquareManifoldSpec& spec, double p, double r);

/// Renders one image per latent row (p, r); rejects out-of-range rows.
LabeledDataset render_squares(const SquareManifoldSpec& spec, const Eigen::MatrixXd& latents);

/// Uniform latents over the spec's ranges, rendered.
LabeledDataset sample_squares(const SquareManifoldSpec& spec, Index n, std::uint64_t seed);

/// (p/4, 2r): the parameterization under which the square manifold's metric is
/// isotropic.
Eigen::MatrixXd reparameterize_square_latents(const Eigen::MatrixXd& latents);

struct MetricReport {
  double dp_sq = 0; ///< ‖∂_p f‖²
  double dr_sq = 0; ///< ‖∂_r f‖²
  double cross = 0; ///< ⟨∂_p f, ∂_r f⟩
  double step = 0;  ///< finest step used
  int halvings = 0;
  bool converged = false;

  [[nodiscard]] double ratio() const { return dr_sq / dp_sq; }
  [[nodiscard]] double cosine() const;
};

/// Central-difference estimates of the image-space metric at (p, r). The step
/// is halved until successive changes stop growing. Default initial step is
/// 1/64 of a pixel.
MetricReport manifold_metric_check(const SquareManifoldSpec& spec, double p, double r,
                                   std::optional<double> step = std::nullopt);

} // namespace nearid

#endif // NEARID_SYNTHDATA_HPP

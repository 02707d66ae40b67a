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

#ifndef NEARID_LIPSCHITZ_HPP
#define NEARID_LIPSCHITZ_HPP

#include "nearid/autoenc.hpp"
#include "nearid/types.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace nearid {

enum class Aggregation { Mean, Max };

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

/// Local bi-Lipschitz estimates B(z) ≥ 1 of a decoder over latent samples.
struct LipschitzEstimate {
  std::vector<double> per_sample;         ///< max_v max(‖Jv‖, 1/‖Jv‖)
  std::vector<double> per_sample_literal; ///< max(max_v ‖Jv‖, 1/‖J‖₂)
  std::vector<double> per_sample_svd;     ///< max(σ_max, 1/σ_min)
  Aggregation aggregation = Aggregation::Mean;
  int probes = 10;
  std::uint64_t seed = 0;
  double L = 0; ///< aggregate(per_sample) − 1

  [[nodiscard]] double aggregate(const std::vector<double>& b) const;
  [[nodiscard]] double L_mean() const;
  [[nodiscard]] double L_max() const;
};

/// Probe unit vectors are drawn per sample from a generator seeded by (seed,
/// sample index), so the estimate is independent of evaluation order and the
/// first k probes of a larger probe set coincide with a k-probe run.
LipschitzEstimate estimate_bilipschitz(const AutoencoderModel& model, const Eigen::MatrixXd& latents, int probes = 10,
                                       Aggregation aggregation = Aggregation::Mean, std::uint64_t seed = 0);

/// ℓ2 error = a·√(L + L²) + b by least squares in the transformed feature.
struct CurveFit {
  double a = 0;
  double b = 0;
  double residual = 0; ///< sum of squared residuals
  double r_squared = 0;
  std::size_t samples = 0;
  std::vector<std::pair<double, double>> points;

  [[nodiscard]] double predict(double L) const;
};

CurveFit fit_identifiability_curve(const std::vector<std::pair<double, double>>& points);

enum class RecursionReading {
  Literal,   ///< γ_{n+1}(t) = min_λ max{γ_n(λ), β_{n+1}(λ, t)}
  Alternate, ///< γ_{n+1}(t) = min_λ max{γ_n(t), β_{n+1}(λ, t)}
};

struct LambdaGrid {
  double lo = 1e-2;
  double hi = 1e3;
  int points = 200;
  double rel_tolerance = 1e-6; ///< golden-section stopping width in log λ
};

struct VaisalaConstants {
  int dimension = 0;
  double value = 0; ///< c_D = γ_D(0)
  RecursionReading reading = RecursionReading::Literal;
  LambdaGrid grid;
  double argmin_lambda = 0; ///< minimising λ at the outermost level (D ≥ 2)
  bool at_grid_edge = false; ///< outermost minimiser sits on the grid boundary
};

/// c_D from the isometric-approximation recursion, with the min over λ taken by
/// a log-spaced grid followed by golden-section refinement.
VaisalaConstants vaisala_constant(int dimension, const LambdaGrid& grid = {},
                                  RecursionReading reading = RecursionReading::Literal);

/// γ_1(t) = √(0.1 + (t + √(t² + 6.2))²).
double vaisala_gamma1(double t);

/// c_D · √(2L + L²) · Δ.
double identifiability_bound(double c_d, double L, double diameter);

} // namespace nearid

#endif // NEARID_LIPSCHITZ_HPP

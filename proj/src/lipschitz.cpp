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

#include "nearid/lipschitz.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

namespace nearid {

std::string to_string(Aggregation a) { return a == Aggregation::Mean ? "mean" : "max"; }

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "max") return Aggregation::Max;
  throw PreconditionError("unknown aggregation '" + s + "'");
}

double LipschitzEstimate::aggregate(const std::vector<double>& b) const {
  if (b.empty()) return 0;
  if (aggregation == Aggregation::Max) return *std::max_element(b.begin(), b.end());
  double s = 0;
  for (double v : b) s += v;
  return s / double(b.size());
}

double LipschitzEstimate::L_mean() const {
  double s = 0;
  for (double v : per_sample) s += v;
  return per_sample.empty() ? 0 : s / double(per_sample.size()) - 1;
}

double LipschitzEstimate::L_max() const {
  return per_sample.empty() ? 0 : *std::max_element(per_sample.begin(), per_sample.end()) - 1;
}

LipschitzEstimate estimate_bilipschitz(const AutoencoderModel& model, const Eigen::MatrixXd& latents, int probes,
                                       Aggregation aggregation, std::uint64_t seed) {
  require(probes >= 1, "estimate_bilipschitz: need at least one probe");
  require(latents.rows() >= 1, "estimate_bilipschitz: no latent samples");
  require_dims(latents.cols() == model.latent_dim(), "estimate_bilipschitz: latent dimension mismatch");

  LipschitzEstimate est;
  est.aggregation = aggregation;
  est.probes = probes;
  est.seed = seed;
  const Index dim = latents.cols();
  for (Index i = 0; i < latents.rows(); ++i) {
    const Eigen::MatrixXd jac = decoder_jacobian(model, latents.row(i).transpose());
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    double b = 0, stretch = 0;
    for (int k = 0; k < probes; ++k) {
      Eigen::VectorXd v(dim);
      for (Index d = 0; d < dim; ++d) v(d) = normal(rng);
      v.normalize();
      const double len = (jac * v).norm();
      stretch = std::max(stretch, len);
      b = std::max(b, std::max(len, 1.0 / len));
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
    const auto& s = svd.singularValues();
    est.per_sample.push_back(b);
    est.per_sample_literal.push_back(std::max(stretch, 1.0 / s(0)));
    est.per_sample_svd.push_back(std::max(s(0), 1.0 / s(s.size() - 1)));
  }
  est.L = est.aggregate(est.per_sample) - 1;
  return est;
}

double CurveFit::predict(double L) const { return a * std::sqrt(L + L * L) + b; }

CurveFit fit_identifiability_curve(const std::vector<std::pair<double, double>>& points) {
  require(points.size() >= 3, "fit_identifiability_curve: need at least three points");
  for (const auto& [L, e] : points) require(L >= 0, "fit_identifiability_curve: L must be nonnegative");
  const auto n = double(points.size());
  double sx = 0, sy = 0;
  for (const auto& [L, e] : points) {
    sx += std::sqrt(L + L * L);
    sy += e;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [L, e] : points) {
    const double x = std::sqrt(L + L * L) - mx;
    sxx += x * x;
    sxy += x * (e - my);
    syy += (e - my) * (e - my);
  }
  if (!(sxx > 1e-300)) throw PreconditionError("fit_identifiability_curve: all L values identical (degenerate design)");
  CurveFit fit;
  fit.a = sxy / sxx;
  fit.b = my - fit.a * mx;
  for (const auto& [L, e] : points) {
    const double r = e - fit.predict(L);
    fit.residual += r * r;
  }
  fit.r_squared = syy > 0 ? 1.0 - fit.residual / syy : 1.0;
  fit.samples = points.size();
  fit.points = points;
  return fit;
}

double vaisala_gamma1(double t) {
  const double s = t + std::sqrt(t * t + 6.2);
  return std::sqrt(0.1 + s * s);
}

namespace {

/// Evaluates the recursion with per-level caches of γ_n on the λ grid.
class VaisalaRecursion {
public:
  VaisalaRecursion(const LambdaGrid& grid, RecursionReading reading) : grid_(grid), reading_(reading) {
    require(grid.points >= 3, "vaisala_constant: grid needs at least three points");
    require(grid.lo > 0 && grid.hi > grid.lo, "vaisala_constant: invalid lambda range");
    require(grid.rel_tolerance > 0, "vaisala_constant: tolerance must be positive");
    log_lo_ = std::log(grid.lo);
    log_step_ = (std::log(grid.hi) - log_lo_) / double(grid.points - 1);
  }

  double lambda_at(int i) const { return std::exp(log_lo_ + log_step_ * i); }

  /// β_n(λ, t) for n ≥ 2.
  static double beta(int n, double lambda, double t) {
    const double inv2 = 1.0 / (lambda * lambda);
    std::vector<double> rho{3.3};
    double tau = 6.2;
    for (int m = 1; m < n; ++m) {
      double r = 3.02 + tau * std::sqrt(1.0 + tau * inv2);
      for (double rk : rho) r += rk * (2.0 + rk * inv2);
      rho.push_back(r);
      tau += r * (2.0 + r * inv2);
    }
    double tail = 0;
    for (std::size_t k = 1; k < rho.size(); ++k) tail += rho[k] * rho[k];
    const double s = t + std::sqrt(t * t + tau);
    return std::sqrt(0.1 + s * s + inv2 * tail);
  }

  struct Minimum {
    double value;
    double lambda;
    bool at_edge;
  };

  double gamma(int n, double t) { return minimize(n, t).value; }

  Minimum minimize(int n, double t) {
    if (n == 1) return {vaisala_gamma1(t), 0.0, false};
    auto objective = [&](double log_lambda, std::optional<int> grid_index) {
      const double lambda = std::exp(log_lambda);
      double inner;
      if (reading_ == RecursionReading::Literal)
        inner = grid_index ? cached_gamma(n - 1, *grid_index) : gamma(n - 1, lambda);
      else
        inner = gamma(n - 1, t);
      return std::max(inner, beta(n, lambda, t));
    };

    int best_i = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid_.points; ++i) {
      const double v = objective(log_lo_ + log_step_ * i, i);
      if (v < best) {
        best = v;
        best_i = i;
      }
    }
    double a = log_lo_ + log_step_ * std::max(best_i - 1, 0);
    double b = log_lo_ + log_step_ * std::min(best_i + 1, grid_.points - 1);
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = objective(c, std::nullopt), fd = objective(d, std::nullopt);
    double width = b - a;
    int iterations = 0;
    while (width > grid_.rel_tolerance) {
      if (++iterations > 500) {
        std::ostringstream msg;
        msg << "vaisala_constant: golden-section refinement did not converge at level " << n << " (t=" << t
            << ", interval [" << std::exp(a) << ", " << std::exp(b) << "])";
        throw NumericalError(msg.str());
      }
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - invphi * (b - a);
        fc = objective(c, std::nullopt);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + invphi * (b - a);
        fd = objective(d, std::nullopt);
      }
      const double next = b - a;
      if (!(next < width)) throw NumericalError("vaisala_constant: refinement interval is not shrinking");
      width = next;
    }
    Minimum m{best, lambda_at(best_i), best_i == 0 || best_i == grid_.points - 1};
    const double refined = std::min(fc, fd);
    if (refined < best) {
      m.value = refined;
      m.lambda = std::exp(fc < fd ? c : d);
    }
    return m;
  }

private:
  double cached_gamma(int n, int i) {
    if (cache_.size() <= static_cast<std::size_t>(n)) cache_.resize(static_cast<std::size_t>(n) + 1);
    auto& level = cache_[static_cast<std::size_t>(n)];
    if (level.empty()) level.assign(static_cast<std::size_t>(grid_.points), std::numeric_limits<double>::quiet_NaN());
    double& slot = level[static_cast<std::size_t>(i)];
    if (std::isnan(slot)) slot = gamma(n, lambda_at(i));
    return slot;
  }

  LambdaGrid grid_;
  RecursionReading reading_;
  double log_lo_ = 0;
  double log_step_ = 0;
  std::vector<std::vector<double>> cache_;
};

} // namespace

VaisalaConstants vaisala_constant(int dimension, const LambdaGrid& grid, RecursionReading reading) {
  require(dimension >= 1, "vaisala_constant: dimension must be positive");
  VaisalaRecursion rec(grid, reading);
  VaisalaConstants out;
  out.dimension = dimension;
  out.reading = reading;
  out.grid = grid;
  const auto m = rec.minimize(dimension, 0.0);
  out.value = m.value;
  out.argmin_lambda = m.lambda;
  out.at_grid_edge = m.at_edge;
  return out;
}

double identifiability_bound(double c_d, double L, double diameter) {
  require(c_d >= 0 && L >= 0, "identifiability_bound: inputs must be nonnegative");
  require(diameter > 0, "identifiability_bound: diameter must be positive");
  return c_d * std::sqrt(2 * L + L * L) * diameter;
}

} // namespace nearid

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

#ifndef NEARID_AUTOENC_HPP
#define NEARID_AUTOENC_HPP

#include "nearid/types.hpp"

#include <cstdint>
#include <vector>

namespace nearid {

/// Layer widths from input to output of each half. The encoder ends at the
/// latent dimension, the decoder starts there.
struct AutoencoderArch {
  std::vector<Index> encoder_widths;
  std::vector<Index> decoder_widths;

  /// input -> input (x hidden) -> latent, mirrored for the decoder. With the
  /// default three hidden maps each half has four matrices and three
  /// activations.
  static AutoencoderArch mirrored(Index input_dim, Index latent_dim, int hidden = 3);
  void validate() const;
};

struct TrainConfig {
  double leak = 0.5;
  double learning_rate = 5e-4;
  int max_epochs = 2000;
  int patience = 50;
  double min_improvement = 1e-6;
  double clip_norm = 1.0;
  Index batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Stacked bias-free orthogonal linear maps with a shared LeakyReLU leak.
/// Every matrix has orthonormal columns (tall/square) or rows (wide).
struct AutoencoderModel {
  std::vector<Eigen::MatrixXd> encoder; ///< out x in, applied in order
  std::vector<Eigen::MatrixXd> decoder;
  double leak = 1.0;
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  bool stopped_early = false;
  double final_loss = 0;
  std::vector<double> history; ///< full-data MSE after each epoch

  [[nodiscard]] Index input_dim() const { return encoder.front().cols(); }
  [[nodiscard]] Index latent_dim() const { return encoder.back().rows(); }
  [[nodiscard]] Index output_dim() const { return decoder.back().rows(); }
  /// LeakyReLU count per half; the final map of each half is linear.
  [[nodiscard]] int decoder_activations() const { return static_cast<int>(decoder.size()) - 1; }
  [[nodiscard]] int encoder_activations() const { return static_cast<int>(encoder.size()) - 1; }
  /// At α = 0 the decoder is not injective.
  [[nodiscard]] bool outside_injectivity_hypothesis() const { return leak <= 0; }
  [[nodiscard]] double max_orthogonality_error() const;
};

AutoencoderModel initialize_autoencoder(const AutoencoderArch& arch, double leak, std::uint64_t seed);

/// Adam on the mean squared reconstruction error with global gradient-norm
/// clipping, a polar retraction after every step and early stopping. The
/// returned model carries the best-epoch weights.
AutoencoderModel train_autoencoder(const Eigen::MatrixXd& data, const AutoencoderArch& arch, const TrainConfig& config);

Eigen::MatrixXd encode(const AutoencoderModel& model, const Eigen::MatrixXd& x);
Eigen::MatrixXd decode(const AutoencoderModel& model, const Eigen::MatrixXd& z);
double reconstruction_mse(const AutoencoderModel& model, const Eigen::MatrixXd& x);

/// Analytic Jacobian of the decoder at z (output_dim x latent_dim). A
/// pre-activation of exactly zero takes slope α.
Eigen::MatrixXd decoder_jacobian(const AutoencoderModel& model, const Eigen::VectorXd& z);

struct LossGradients {
  double loss = 0;
  std::vector<Eigen::MatrixXd> encoder;
  std::vector<Eigen::MatrixXd> decoder;
};

/// Loss and its gradient with respect to every weight matrix, treated as
/// unconstrained.
LossGradients loss_gradients(const AutoencoderModel& model, const Eigen::MatrixXd& batch);

/// One trained pair at a leak value, with the reconstruction error of each.
struct PairedRun {
  double leak = 0;
  std::uint64_t seed = 0;
  double recon_first = 0;
  double recon_second = 0;
};

struct RunFilter {
  double reference_leak = 0.9;
  double percentile = 95;
};

struct FilterResult {
  std::vector<std::size_t> kept; ///< indices into the input list
  std::size_t removed = 0;
  double threshold = 0;
};

/// Linear-interpolation percentile (the usual "linear" definition).
double percentile(std::vector<double> values, double q);

/// Drops pairs where either member's reconstruction error strictly exceeds the
/// percentile of errors observed at the reference leak.
FilterResult filter_runs(const std::vector<PairedRun>& runs, const RunFilter& filter = {});

} // namespace nearid

#endif // NEARID_AUTOENC_HPP

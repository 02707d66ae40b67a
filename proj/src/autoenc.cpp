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

#include "nearid/autoenc.hpp"

#include "nearid/linalg.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace nearid {

namespace {

using Eigen::MatrixXd;

struct Tape {
  std::vector<MatrixXd> inputs; ///< input to each layer
  std::vector<MatrixXd> pre;    ///< pre-activation of each layer
};

MatrixXd leaky(const MatrixXd& a, double alpha) {
  return a.unaryExpr([alpha](double v) { return v > 0 ? v : alpha * v; });
}

MatrixXd leaky_slope(const MatrixXd& a, double alpha) {
  return a.unaryExpr([alpha](double v) { return v > 0 ? 1.0 : alpha; });
}

/// Rows are samples. Activation after every layer but the last.
MatrixXd run_half(const std::vector<MatrixXd>& layers, double alpha, const MatrixXd& x, Tape* tape) {
  MatrixXd h = x;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    MatrixXd a = h * layers[k].transpose();
    if (tape) {
      tape->inputs.push_back(h);
      tape->pre.push_back(a);
    }
    h = (k + 1 < layers.size()) ? leaky(a, alpha) : std::move(a);
  }
  return h;
}

/// Back-propagates `grad_out` (d loss / d output of this half) and writes each
/// layer's weight gradient; returns d loss / d input.
MatrixXd back_half(const std::vector<MatrixXd>& layers, double alpha, const Tape& tape, MatrixXd grad_out,
                   std::vector<MatrixXd>& grads) {
  grads.resize(layers.size());
  for (std::size_t k = layers.size(); k-- > 0;) {
    if (k + 1 < layers.size()) grad_out = grad_out.cwiseProduct(leaky_slope(tape.pre[k], alpha));
    grads[k] = grad_out.transpose() * tape.inputs[k];
    grad_out = grad_out * layers[k];
  }
  return grad_out;
}

struct AdamState {
  MatrixXd m, v;
};

} // namespace

AutoencoderArch AutoencoderArch::mirrored(Index input_dim, Index latent_dim, int hidden) {
  AutoencoderArch arch;
  for (int i = 0; i <= hidden; ++i) arch.encoder_widths.push_back(input_dim);
  arch.encoder_widths.push_back(latent_dim);
  arch.decoder_widths.push_back(latent_dim);
  for (int i = 0; i <= hidden; ++i) arch.decoder_widths.push_back(input_dim);
  return arch;
}

void AutoencoderArch::validate() const {
  if (encoder_widths.size() < 2 || decoder_widths.size() < 2)
    throw PreconditionError("autoencoder: each half needs at least one layer");
  if (encoder_widths.back() != decoder_widths.front())
    throw PreconditionError("autoencoder: encoder must end at the decoder's latent width");
  if (encoder_widths.front() != decoder_widths.back())
    throw PreconditionError("autoencoder: decoder must end at the input width");
  for (Index w : encoder_widths)
    if (w < 1) throw PreconditionError("autoencoder: widths must be positive");
  for (Index w : decoder_widths)
    if (w < 1) throw PreconditionError("autoencoder: widths must be positive");
}

void TrainConfig::validate() const {
  require(leak >= 0 && leak <= 1, "train: leak must lie in [0, 1]");
  require(learning_rate > 0, "train: learning rate must be positive");
  require(max_epochs >= 1, "train: max_epochs must be positive");
  require(patience >= 1, "train: patience must be positive");
  require(min_improvement >= 0, "train: min_improvement must be nonnegative");
  require(clip_norm > 0, "train: clip norm must be positive");
  require(batch_size >= 1, "train: batch size must be positive");
}

double AutoencoderModel::max_orthogonality_error() const {
  double worst = 0;
  for (const auto& w : encoder) worst = std::max(worst, orthogonality_error(w));
  for (const auto& w : decoder) worst = std::max(worst, orthogonality_error(w));
  return worst;
}

AutoencoderModel initialize_autoencoder(const AutoencoderArch& arch, double leak, std::uint64_t seed) {
  arch.validate();
  require(leak >= 0 && leak <= 1, "autoencoder: leak must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  AutoencoderModel model;
  model.leak = leak;
  model.seed = seed;
  for (std::size_t k = 1; k < arch.encoder_widths.size(); ++k)
    model.encoder.push_back(random_orthogonal(arch.encoder_widths[k], arch.encoder_widths[k - 1], rng));
  for (std::size_t k = 1; k < arch.decoder_widths.size(); ++k)
    model.decoder.push_back(random_orthogonal(arch.decoder_widths[k], arch.decoder_widths[k - 1], rng));
  return model;
}

Eigen::MatrixXd encode(const AutoencoderModel& model, const Eigen::MatrixXd& x) {
  require_dims(x.cols() == model.input_dim(), "encode: dimension mismatch");
  return run_half(model.encoder, model.leak, x, nullptr);
}

Eigen::MatrixXd decode(const AutoencoderModel& model, const Eigen::MatrixXd& z) {
  require_dims(z.cols() == model.latent_dim(), "decode: dimension mismatch");
  return run_half(model.decoder, model.leak, z, nullptr);
}

double reconstruction_mse(const AutoencoderModel& model, const Eigen::MatrixXd& x) {
  const MatrixXd xhat = decode(model, encode(model, x));
  return (xhat - x).squaredNorm() / double(x.size());
}

Eigen::MatrixXd decoder_jacobian(const AutoencoderModel& model, const Eigen::VectorXd& z) {
  require_dims(z.size() == model.latent_dim(), "decoder_jacobian: dimension mismatch");
  Eigen::VectorXd h = z;
  MatrixXd jac = MatrixXd::Identity(z.size(), z.size());
  for (std::size_t k = 0; k < model.decoder.size(); ++k) {
    Eigen::VectorXd a = model.decoder[k] * h;
    jac = model.decoder[k] * jac;
    if (k + 1 < model.decoder.size()) {
      for (Index i = 0; i < a.size(); ++i) {
        const double s = a(i) > 0 ? 1.0 : model.leak;
        jac.row(i) *= s;
        a(i) *= s;
      }
    }
    h = std::move(a);
  }
  return jac;
}

LossGradients loss_gradients(const AutoencoderModel& model, const Eigen::MatrixXd& batch) {
  require_dims(batch.cols() == model.input_dim(), "loss_gradients: dimension mismatch");
  Tape enc_tape, dec_tape;
  const MatrixXd z = run_half(model.encoder, model.leak, batch, &enc_tape);
  const MatrixXd xhat = run_half(model.decoder, model.leak, z, &dec_tape);
  const MatrixXd diff = xhat - batch;
  LossGradients out;
  out.loss = diff.squaredNorm() / double(batch.size());
  MatrixXd grad = (2.0 / double(batch.size())) * diff;
  grad = back_half(model.decoder, model.leak, dec_tape, std::move(grad), out.decoder);
  back_half(model.encoder, model.leak, enc_tape, std::move(grad), out.encoder);
  return out;
}

AutoencoderModel train_autoencoder(const Eigen::MatrixXd& data, const AutoencoderArch& arch, const TrainConfig& config) {
  config.validate();
  arch.validate();
  require_dims(data.cols() == arch.encoder_widths.front(), "train: data width does not match the architecture");
  if (data.rows() < config.batch_size) throw PreconditionError("train: fewer rows than the batch size");

  AutoencoderModel model = initialize_autoencoder(arch, config.leak, config.seed);
  std::mt19937_64 rng(config.seed ^ 0x5eed5eed5eedULL);

  auto all_params = [](AutoencoderModel& m) {
    std::vector<MatrixXd*> ps;
    for (auto& w : m.encoder) ps.push_back(&w);
    for (auto& w : m.decoder) ps.push_back(&w);
    return ps;
  };
  std::vector<AdamState> adam;
  for (MatrixXd* p : all_params(model)) adam.push_back({MatrixXd::Zero(p->rows(), p->cols()), MatrixXd::Zero(p->rows(), p->cols())});

  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  const Index n = data.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));

  AutoencoderModel best = model;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += config.batch_size) {
      const Index len = std::min(config.batch_size, n - start);
      MatrixXd batch(len, data.cols());
      for (Index i = 0; i < len; ++i) batch.row(i) = data.row(order[static_cast<std::size_t>(start + i)]);

      LossGradients g = loss_gradients(model, batch);
      if (!std::isfinite(g.loss))
        throw NumericalError("train: loss diverged (non-finite) at epoch " + std::to_string(epoch));
      std::vector<MatrixXd*> grads;
      for (auto& m : g.encoder) grads.push_back(&m);
      for (auto& m : g.decoder) grads.push_back(&m);
      double norm2 = 0;
      for (auto* m : grads) norm2 += m->squaredNorm();
      const double norm = std::sqrt(norm2);
      if (norm > config.clip_norm)
        for (auto* m : grads) *m *= config.clip_norm / norm;

      ++step;
      const double c1 = 1.0 - std::pow(beta1, double(step));
      const double c2 = 1.0 - std::pow(beta2, double(step));
      auto params = all_params(model);
      for (std::size_t k = 0; k < params.size(); ++k) {
        AdamState& s = adam[k];
        const MatrixXd& gk = *grads[k];
        s.m = beta1 * s.m + (1 - beta1) * gk;
        s.v = beta2 * s.v + (1 - beta2) * gk.cwiseProduct(gk);
        const MatrixXd update =
            ((s.m / c1).array() / ((s.v / c2).array().sqrt() + eps)).matrix();
        *params[k] -= config.learning_rate * update;
        *params[k] = polar_factor(*params[k]);
      }
      assert(model.max_orthogonality_error() < 1e-6);
    }

    const double loss = reconstruction_mse(model, data);
    if (!std::isfinite(loss)) throw NumericalError("train: loss diverged (non-finite) at epoch " + std::to_string(epoch));
    model.history.push_back(loss);
    model.epochs_run = epoch;
    if (loss < best_loss - config.min_improvement) {
      best_loss = loss;
      best = model;
      best.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      model.stopped_early = true;
      break;
    }
  }

  AutoencoderModel out = std::move(best);
  out.history = model.history;
  out.epochs_run = model.epochs_run;
  out.stopped_early = model.stopped_early;
  out.final_loss = reconstruction_mse(out, data);
  if (out.max_orthogonality_error() >= 1e-6)
    throw NumericalError("train: weight matrices drifted from orthogonality");
  return out;
}

double percentile(std::vector<double> values, double q) {
  require(!values.empty(), "percentile: empty input");
  require(q >= 0 && q <= 100, "percentile: q must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * double(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

FilterResult filter_runs(const std::vector<PairedRun>& runs, const RunFilter& filter) {
  require(filter.percentile > 0 && filter.percentile < 100, "filter_runs: percentile must lie in (0, 100)");
  std::vector<double> ref;
  for (const auto& r : runs)
    if (std::abs(r.leak - filter.reference_leak) < 1e-12) {
      ref.push_back(r.recon_first);
      ref.push_back(r.recon_second);
    }
  if (ref.empty()) throw PreconditionError("filter_runs: no runs at the reference leak");
  FilterResult out;
  out.threshold = percentile(ref, filter.percentile);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].recon_first > out.threshold || runs[i].recon_second > out.threshold)
      ++out.removed;
    else
      out.kept.push_back(i);
  }
  return out;
}

} // namespace nearid

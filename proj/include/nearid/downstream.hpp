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

#ifndef NEARID_DOWNSTREAM_HPP
#define NEARID_DOWNSTREAM_HPP

#include "nearid/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nearid {

/// Rows of features with a binary label and a batch id (plate analogue).
struct EmbeddingTable {
  Eigen::MatrixXd features;
  std::vector<int> label;
  std::vector<int> batch;

  [[nodiscard]] Index rows() const { return features.rows(); }
  [[nodiscard]] Index dimension() const { return features.cols(); }
  [[nodiscard]] std::vector<int> batches() const; ///< sorted unique ids
  void validate() const;
  /// Same rows and labels, selected feature columns.
  [[nodiscard]] EmbeddingTable with_features(const Eigen::MatrixXd& f) const;
};

struct HoldoutPlan {
  double holdout_fraction = 0.2;
  int folds = 5;
  bool stratify = true;

  void validate() const;
};

struct Fold {
  std::vector<Index> train;
  std::vector<Index> test;
  std::vector<int> test_batches;
};

/// Batch-level k-fold: batches are shuffled once and each fold holds out a
/// contiguous (cyclic) block of them. With stratification a held-out side
/// missing a label is repaired by swapping batches when that is possible.
std::vector<Fold> split_by_batch(const EmbeddingTable& table, const HoldoutPlan& plan, std::uint64_t seed);

struct BoostParams {
  int rounds = 100;
  double learning_rate = 0.05;
  int max_depth = 3;
  int num_leaves = 31;
  double feature_fraction = 0.6;
  double reg_alpha = 5.0;
  double reg_lambda = 1.0;
  double min_gain = 0.8;
  int min_data_in_leaf = 30;
  bool is_unbalance = true;
  int bins = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TreeNode {
  int feature = -1; ///< -1 for a leaf
  double threshold = 0; ///< go left when x <= threshold
  int left = -1;
  int right = -1;
  double value = 0;
};

struct BoostedTrees {
  std::vector<std::vector<TreeNode>> trees;
  double base_margin = 0;
  double learning_rate = 0.05;
  std::vector<int> feature_map; ///< model column -> table column
  std::vector<long> split_counts; ///< per table column
  std::vector<double> loss_history; ///< weighted training log-loss, index 0 = before round 1

  [[nodiscard]] long total_splits() const;
  /// split_counts / total_splits; throws UndefinedMetricError without splits.
  [[nodiscard]] Eigen::VectorXd split_fractions() const;
};

BoostedTrees train_boosted(const EmbeddingTable& table, const std::vector<Index>& train, const BoostParams& params,
                           const std::vector<int>& features = {});

Eigen::VectorXd predict_margin(const BoostedTrees& model, const Eigen::MatrixXd& features);

/// Mann-Whitney AUROC with ties counted one half.
double auroc(const Eigen::VectorXd& scores, const std::vector<int>& labels);

/// (√D − 1/‖c‖₂)/(√D − 1) for nonnegative, ℓ1-normalized c.
double hoyer_sparsity(const Eigen::VectorXd& c);

struct ConcentrationResult {
  double k_percent = 25;
  std::vector<int> top_features;
  double top_auroc = 0;    ///< mean over folds
  double bottom_auroc = 0; ///< mean over folds
  std::optional<double> value; ///< empty when a fold's complement AUROC is 0
};

/// Top-k% features by importance versus the rest, each retrained per fold.
ConcentrationResult concentration(const EmbeddingTable& table, const Eigen::VectorXd& importance, double k_percent,
                                  const std::vector<Fold>& folds, const BoostParams& params);

/// Held-out AUROC per fold plus split counts pooled over the fold models.
struct CrossValidation {
  std::vector<double> fold_auroc;
  double mean_auroc = 0;
  Eigen::VectorXd importance; ///< pooled split fractions
};

CrossValidation cross_validate(const EmbeddingTable& table, const std::vector<Fold>& folds, const BoostParams& params,
                               int jobs = 1);

/// Independent non-Gaussian biological latents (label-shifted) and
/// batch-shifted technical latents, pushed through a bi-Lipschitz mixer.
struct ConfoundedSpec {
  int signal_dims = 2;
  int technical_dims = 6;
  int batches = 10;
  int rows_per_batch = 200;
  double label_shift = 1.0;
  double batch_shift = 1.5;
  double delta = 0.1;
  std::uint64_t seed = 0;

  [[nodiscard]] int dimension() const { return signal_dims + technical_dims; }
  void validate() const;
};

struct ConfoundedDataset {
  EmbeddingTable table;
  Eigen::MatrixXd latents;
};

ConfoundedDataset make_confounded(const ConfoundedSpec& spec);

enum class Condition { Base, Pca, PcaIca, PcaRandomRotation };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

/// Representation used for one condition; ICA and the random rotation are seeded.
Eigen::MatrixXd condition_features(const Eigen::MatrixXd& observed, Condition c, std::uint64_t seed);

struct ConditionResult {
  Condition condition = Condition::Base;
  double mean_auroc = 0;
  double sparsity = 0;
  std::map<int, ConcentrationResult> concentration; ///< keyed by k%
};

struct DownstreamOptions {
  HoldoutPlan plan;
  BoostParams boost;
  std::vector<int> k_percents{25, 33, 50};
  std::vector<Condition> conditions{Condition::Base, Condition::Pca, Condition::PcaIca, Condition::PcaRandomRotation};
  int jobs = 1;
};

std::vector<ConditionResult> evaluate_conditions(const EmbeddingTable& table, const DownstreamOptions& options,
                                                 std::uint64_t seed);

} // namespace nearid

#endif // NEARID_DOWNSTREAM_HPP

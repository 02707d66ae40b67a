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

#include "nearid/downstream.hpp"

#include "nearid/ica.hpp"
#include "nearid/linalg.hpp"
#include "nearid/parallel.hpp"
#include "nearid/synthdata.hpp"
#include "nearid/whitening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace nearid {

std::vector<int> EmbeddingTable::batches() const {
  std::set<int> s(batch.begin(), batch.end());
  return {s.begin(), s.end()};
}

void EmbeddingTable::validate() const {
  require_dims(static_cast<Index>(label.size()) == rows() && static_cast<Index>(batch.size()) == rows(),
               "EmbeddingTable: label/batch length must match the feature rows");
  for (int y : label) require(y == 0 || y == 1, "EmbeddingTable: labels must be 0 or 1");
  require(features.allFinite(), "EmbeddingTable: non-finite feature");
}

EmbeddingTable EmbeddingTable::with_features(const Eigen::MatrixXd& f) const {
  require_dims(f.rows() == rows(), "EmbeddingTable: replacement features have the wrong row count");
  return {f, label, batch};
}

void HoldoutPlan::validate() const {
  require(holdout_fraction > 0 && holdout_fraction < 1, "HoldoutPlan: holdout fraction must lie in (0, 1)");
  require(folds >= 1, "HoldoutPlan: need at least one fold");
}

namespace {

struct Presence {
  bool neg = false;
  bool pos = false;
  void add(int y) { (y ? pos : neg) = true; }
  void add(const Presence& o) {
    neg = neg || o.neg;
    pos = pos || o.pos;
  }
  [[nodiscard]] bool both() const { return neg && pos; }
};

Presence side_presence(const std::vector<Presence>& per_batch, const std::vector<bool>& held, bool side) {
  Presence p;
  for (std::size_t b = 0; b < per_batch.size(); ++b)
    if (held[b] == side) p.add(per_batch[b]);
  return p;
}

} // namespace

std::vector<Fold> split_by_batch(const EmbeddingTable& table, const HoldoutPlan& plan, std::uint64_t seed) {
  table.validate();
  plan.validate();
  const auto ids = table.batches();
  const auto nb = ids.size();
  require(nb >= 5, "split_by_batch: need at least 5 batches");
  std::map<int, std::size_t> slot;
  for (std::size_t b = 0; b < nb; ++b) slot[ids[b]] = b;
  std::vector<Presence> presence(nb);
  for (Index i = 0; i < table.rows(); ++i) presence[slot[table.batch[static_cast<std::size_t>(i)]]].add(table.label[static_cast<std::size_t>(i)]);

  const auto held_count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(plan.holdout_fraction * double(nb))), 1, nb - 1);
  std::vector<std::size_t> order(nb);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Fold> folds;
  for (int f = 0; f < plan.folds; ++f) {
    std::vector<bool> held(nb, false);
    for (std::size_t k = 0; k < held_count; ++k) held[order[(std::size_t(f) * held_count + k) % nb]] = true;

    if (plan.stratify) {
      // Single-swap repair, repeated while it helps.
      for (std::size_t attempt = 0; attempt < nb; ++attempt) {
        const auto test = side_presence(presence, held, true);
        const auto train = side_presence(presence, held, false);
        if (test.both() && train.both()) break;
        bool swapped = false;
        for (std::size_t a = 0; a < nb && !swapped; ++a) {
          if (!held[order[a]]) continue;
          for (std::size_t c = 0; c < nb && !swapped; ++c) {
            if (held[order[c]]) continue;
            auto trial = held;
            trial[order[a]] = false;
            trial[order[c]] = true;
            const auto t2 = side_presence(presence, trial, true);
            const auto r2 = side_presence(presence, trial, false);
            const int before = int(test.neg) + int(test.pos) + 2 * (int(train.neg) + int(train.pos));
            const int after = int(t2.neg) + int(t2.pos) + 2 * (int(r2.neg) + int(r2.pos));
            if (after > before) {
              held = trial;
              swapped = true;
            }
          }
        }
        if (!swapped) break;
      }
    }
    if (!side_presence(presence, held, false).both())
      throw PreconditionError("split_by_batch: fold " + std::to_string(f) + " has a label absent from all training batches");

    Fold fold;
    for (std::size_t b = 0; b < nb; ++b)
      if (held[b]) fold.test_batches.push_back(ids[b]);
    for (Index i = 0; i < table.rows(); ++i)
      (held[slot[table.batch[static_cast<std::size_t>(i)]]] ? fold.test : fold.train).push_back(i);
    folds.push_back(std::move(fold));
  }
  return folds;
}

void BoostParams::validate() const {
  require(rounds >= 1, "BoostParams: rounds must be positive");
  require(learning_rate > 0, "BoostParams: learning rate must be positive");
  require(max_depth >= 1 && max_depth <= 3, "BoostParams: max depth must be in [1, 3]");
  require(num_leaves >= 2, "BoostParams: need at least two leaves");
  require(feature_fraction > 0 && feature_fraction <= 1, "BoostParams: feature fraction must lie in (0, 1]");
  require(reg_alpha >= 0 && reg_lambda >= 0 && min_gain >= 0, "BoostParams: regularizers must be nonnegative");
  require(min_data_in_leaf >= 1, "BoostParams: min data in leaf must be positive");
  require(bins >= 2, "BoostParams: need at least two bins");
}

long BoostedTrees::total_splits() const { return std::accumulate(split_counts.begin(), split_counts.end(), 0L); }

Eigen::VectorXd BoostedTrees::split_fractions() const {
  const long total = total_splits();
  if (total == 0) throw UndefinedMetricError("split fractions undefined: the model has no splits");
  Eigen::VectorXd c(static_cast<Index>(split_counts.size()));
  for (std::size_t d = 0; d < split_counts.size(); ++d) c(static_cast<Index>(d)) = double(split_counts[d]) / double(total);
  return c;
}

namespace {

double soft_threshold(double g, double alpha) { return g > alpha ? g - alpha : (g < -alpha ? g + alpha : 0.0); }

double leaf_score(double g, double h, const BoostParams& p) {
  const double t = soft_threshold(g, p.reg_alpha);
  return t * t / (h + p.reg_lambda);
}

double leaf_value(double g, double h, const BoostParams& p) { return -soft_threshold(g, p.reg_alpha) / (h + p.reg_lambda); }

double sigmoid(double m) { return m >= 0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m)); }

double log_loss(double m, int y) {
  // log(1 + e^{-s m}) with s = ±1, stable.
  const double z = y ? m : -m;
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

struct Binned {
  std::vector<std::vector<double>> thresholds; ///< per model feature, ascending
  std::vector<std::vector<std::uint8_t>> bins; ///< per model feature, per training row
};

Binned bin_features(const Eigen::MatrixXd& x, const std::vector<Index>& rows, const std::vector<int>& features, int nbins) {
  Binned out;
  std::vector<double> v(rows.size());
  for (int f : features) {
    for (std::size_t i = 0; i < rows.size(); ++i) v[i] = x(rows[i], f);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> th;
    for (int q = 1; q < nbins; ++q) {
      // Upper edge of the lowest q/nbins fraction of the rows.
      const auto cut = static_cast<std::size_t>(double(q) / nbins * double(sorted.size()));
      const double t = sorted[std::clamp<std::size_t>(cut, 1, sorted.size()) - 1];
      if (t < sorted.back() && (th.empty() || t > th.back())) th.push_back(t);
    }
    std::vector<std::uint8_t> b(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      b[i] = static_cast<std::uint8_t>(std::lower_bound(th.begin(), th.end(), v[i]) - th.begin());
    out.thresholds.push_back(std::move(th));
    out.bins.push_back(std::move(b));
  }
  return out;
}

struct Grower {
  const Binned& binned;
  const std::vector<double>& grad;
  const std::vector<double>& hess;
  const BoostParams& params;
  std::vector<int> allowed; ///< model-feature indices usable in this tree
  std::vector<TreeNode> nodes;
  std::vector<long>& split_counts;
  const std::vector<int>& feature_map;
  int leaves = 1;

  int grow(const std::vector<std::size_t>& rows, int depth) {
    double g = 0, h = 0;
    for (auto i : rows) {
      g += grad[i];
      h += hess[i];
    }
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{-1, 0, -1, -1, leaf_value(g, h, params)});
    if (depth >= params.max_depth || leaves >= params.num_leaves) return id;
    if (static_cast<long>(rows.size()) < 2L * params.min_data_in_leaf) return id;

    const double parent = leaf_score(g, h, params);
    double best_gain = params.min_gain;
    int best_f = -1;
    int best_bin = -1;
    for (int f : allowed) {
      const auto& th = binned.thresholds[static_cast<std::size_t>(f)];
      if (th.empty()) continue;
      const auto nbin = th.size() + 1;
      std::vector<double> hg(nbin, 0.0), hh(nbin, 0.0);
      std::vector<long> hc(nbin, 0);
      const auto& bf = binned.bins[static_cast<std::size_t>(f)];
      for (auto i : rows) {
        hg[bf[i]] += grad[i];
        hh[bf[i]] += hess[i];
        ++hc[bf[i]];
      }
      double gl = 0, hl = 0;
      long cl = 0;
      for (std::size_t b = 0; b + 1 < nbin; ++b) {
        gl += hg[b];
        hl += hh[b];
        cl += hc[b];
        const long cr = static_cast<long>(rows.size()) - cl;
        if (cl < params.min_data_in_leaf || cr < params.min_data_in_leaf) continue;
        const double gain = leaf_score(gl, hl, params) + leaf_score(g - gl, h - hl, params) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = f;
          best_bin = static_cast<int>(b);
        }
      }
    }
    if (best_f < 0) return id;

    std::vector<std::size_t> left, right;
    const auto& bf = binned.bins[static_cast<std::size_t>(best_f)];
    for (auto i : rows) (bf[i] <= best_bin ? left : right).push_back(i);
    ++leaves;
    ++split_counts[static_cast<std::size_t>(feature_map[static_cast<std::size_t>(best_f)])];
    nodes[static_cast<std::size_t>(id)].feature = best_f;
    nodes[static_cast<std::size_t>(id)].threshold = binned.thresholds[static_cast<std::size_t>(best_f)][static_cast<std::size_t>(best_bin)];
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = l;
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }
};

double tree_value(const std::vector<TreeNode>& tree, const Eigen::MatrixXd& x, Index row, const std::vector<int>& fmap) {
  int n = 0;
  while (tree[static_cast<std::size_t>(n)].feature >= 0) {
    const auto& node = tree[static_cast<std::size_t>(n)];
    n = x(row, fmap[static_cast<std::size_t>(node.feature)]) <= node.threshold ? node.left : node.right;
  }
  return tree[static_cast<std::size_t>(n)].value;
}

} // namespace

BoostedTrees train_boosted(const EmbeddingTable& table, const std::vector<Index>& train, const BoostParams& params,
                           const std::vector<int>& features) {
  params.validate();
  require(!train.empty(), "train_boosted: empty training set");
  std::vector<int> fmap = features;
  if (fmap.empty()) {
    fmap.resize(static_cast<std::size_t>(table.dimension()));
    std::iota(fmap.begin(), fmap.end(), 0);
  }
  for (int f : fmap) require(f >= 0 && f < table.dimension(), "train_boosted: feature index out of range");

  const auto n = train.size();
  std::vector<int> y(n);
  double npos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = table.label[static_cast<std::size_t>(train[i])];
    npos += y[i];
  }
  const double nneg = double(n) - npos;
  if (npos == 0 || nneg == 0) throw PreconditionError("train_boosted: training rows contain a single label");
  const double wpos = params.is_unbalance ? nneg / npos : 1.0;
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = y[i] ? wpos : 1.0;
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);

  BoostedTrees model;
  model.learning_rate = params.learning_rate;
  model.feature_map = fmap;
  model.split_counts.assign(static_cast<std::size_t>(table.dimension()), 0);
  model.base_margin = std::log(wpos * npos / nneg);

  const Binned binned = bin_features(table.features, train, fmap, params.bins);
  std::vector<double> margin(n, model.base_margin), grad(n), hess(n);
  auto loss = [&] {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * log_loss(margin[i], y[i]);
    return s / wsum;
  };
  model.loss_history.push_back(loss());

  std::mt19937_64 rng(params.seed);
  const auto nf = fmap.size();
  const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(params.feature_fraction * double(nf))));
  std::vector<int> all(nf);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);

  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = w[i] * (p - y[i]);
      hess[i] = std::max(w[i] * p * (1 - p), 1e-16);
    }
    std::vector<int> allowed = all;
    std::shuffle(allowed.begin(), allowed.end(), rng);
    allowed.resize(take);
    std::sort(allowed.begin(), allowed.end());

    Grower grower{binned, grad, hess, params, allowed, {}, model.split_counts, fmap};
    grower.grow(rows, 0);
    for (auto& node : grower.nodes) node.value *= params.learning_rate;
    // x <= threshold agrees with the bin comparison used while growing.
    for (std::size_t i = 0; i < n; ++i) {
      int k = 0;
      while (grower.nodes[static_cast<std::size_t>(k)].feature >= 0) {
        const auto& node = grower.nodes[static_cast<std::size_t>(k)];
        k = table.features(train[i], fmap[static_cast<std::size_t>(node.feature)]) <= node.threshold ? node.left : node.right;
      }
      margin[i] += grower.nodes[static_cast<std::size_t>(k)].value;
    }
    model.trees.push_back(std::move(grower.nodes));
    model.loss_history.push_back(loss());
  }
  return model;
}

Eigen::VectorXd predict_margin(const BoostedTrees& model, const Eigen::MatrixXd& features) {
  for (int f : model.feature_map) require_dims(f < features.cols(), "predict_margin: too few feature columns");
  Eigen::VectorXd m = Eigen::VectorXd::Constant(features.rows(), model.base_margin);
  for (const auto& tree : model.trees)
    for (Index i = 0; i < features.rows(); ++i) m(i) += tree_value(tree, features, i, model.feature_map);
  return m;
}

double auroc(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
  require_dims(static_cast<Index>(labels.size()) == scores.size(), "auroc: score/label length mismatch");
  const auto n = labels.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores(Index(a)) < scores(Index(b)); });
  double rank_sum = 0, npos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores(Index(idx[j])) == scores(Index(idx[i]))) ++j;
    const double avg = 0.5 * double(i + 1 + j); // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[idx[k]];
      require(y == 0 || y == 1, "auroc: labels must be 0 or 1");
      if (y) {
        rank_sum += avg;
        ++npos;
      }
    }
    i = j;
  }
  const double nneg = double(n) - npos;
  if (npos == 0 || nneg == 0) throw PreconditionError("auroc: both classes must be present");
  return (rank_sum - npos * (npos + 1) / 2) / (npos * nneg);
}

double hoyer_sparsity(const Eigen::VectorXd& c) {
  require(c.size() >= 2, "hoyer_sparsity: need D >= 2");
  require((c.array() >= 0).all(), "hoyer_sparsity: entries must be nonnegative");
  require(std::abs(c.sum() - 1.0) <= 1e-9, "hoyer_sparsity: vector must be l1-normalized");
  const double sd = std::sqrt(double(c.size()));
  return (sd - 1.0 / c.norm()) / (sd - 1.0);
}

namespace {

std::vector<int> labels_of(const EmbeddingTable& t, const std::vector<Index>& rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (auto i : rows) y.push_back(t.label[static_cast<std::size_t>(i)]);
  return y;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, const std::vector<Index>& rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

double fold_auroc(const EmbeddingTable& t, const Fold& fold, const BoostParams& params, const std::vector<int>& features) {
  const auto model = train_boosted(t, fold.train, params, features);
  return auroc(predict_margin(model, rows_of(t.features, fold.test)), labels_of(t, fold.test));
}

} // namespace

ConcentrationResult concentration(const EmbeddingTable& table, const Eigen::VectorXd& importance, double k_percent,
                                  const std::vector<Fold>& folds, const BoostParams& params) {
  require(k_percent > 0 && k_percent < 100, "concentration: k must lie in (0, 100)");
  require_dims(importance.size() == table.dimension(), "concentration: importance length mismatch");
  require(!folds.empty(), "concentration: no folds");
  const auto d = static_cast<std::size_t>(table.dimension());
  const auto top = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(k_percent / 100.0 * double(d))), 1, d - 1);
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return importance(a) > importance(b); });

  ConcentrationResult out;
  out.k_percent = k_percent;
  out.top_features.assign(order.begin(), order.begin() + static_cast<long>(top));
  std::vector<int> rest(order.begin() + static_cast<long>(top), order.end());
  std::sort(out.top_features.begin(), out.top_features.end());
  std::sort(rest.begin(), rest.end());

  double ratio = 0;
  bool defined = true;
  for (const auto& fold : folds) {
    const double a_top = fold_auroc(table, fold, params, out.top_features);
    const double a_rest = fold_auroc(table, fold, params, rest);
    out.top_auroc += a_top / double(folds.size());
    out.bottom_auroc += a_rest / double(folds.size());
    if (a_rest <= 0) defined = false;
    else ratio += (a_top / a_rest - 1.0) / double(folds.size());
  }
  if (defined) out.value = ratio;
  return out;
}

CrossValidation cross_validate(const EmbeddingTable& table, const std::vector<Fold>& folds, const BoostParams& params,
                               int jobs) {
  require(!folds.empty(), "cross_validate: no folds");
  std::vector<double> aucs(folds.size());
  std::vector<std::vector<long>> counts(folds.size());
  parallel_for(folds.size(), jobs, [&](std::size_t f) {
    const auto model = train_boosted(table, folds[f].train, params);
    aucs[f] = auroc(predict_margin(model, rows_of(table.features, folds[f].test)), labels_of(table, folds[f].test));
    counts[f] = model.split_counts;
  });
  CrossValidation cv;
  cv.fold_auroc = aucs;
  cv.mean_auroc = std::accumulate(aucs.begin(), aucs.end(), 0.0) / double(aucs.size());
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(table.dimension());
  for (const auto& c : counts)
    for (std::size_t d = 0; d < c.size(); ++d) pooled(static_cast<Index>(d)) += double(c[d]);
  if (pooled.sum() == 0) throw UndefinedMetricError("cross_validate: no fold model made any split");
  cv.importance = pooled / pooled.sum();
  return cv;
}

void ConfoundedSpec::validate() const {
  require(signal_dims >= 1 && technical_dims >= 1, "ConfoundedSpec: need signal and technical dimensions");
  require(batches >= 5, "ConfoundedSpec: need at least 5 batches");
  require(rows_per_batch >= 2, "ConfoundedSpec: need at least two rows per batch");
  require(delta >= 0, "ConfoundedSpec: delta must be nonnegative");
}

ConfoundedDataset make_confounded(const ConfoundedSpec& spec) {
  spec.validate();
  const Index d = spec.dimension();
  const Index n = Index(spec.batches) * spec.rows_per_batch;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-std::sqrt(3.0), std::sqrt(3.0));
  std::exponential_distribution<double> expo(std::sqrt(2.0));

  ConfoundedDataset out;
  out.latents.resize(n, d);
  out.table.label.resize(static_cast<std::size_t>(n));
  out.table.batch.resize(static_cast<std::size_t>(n));
  for (int b = 0; b < spec.batches; ++b) {
    Eigen::VectorXd offset(spec.technical_dims);
    for (Index k = 0; k < offset.size(); ++k) offset(k) = spec.batch_shift * normal(rng);
    for (int r = 0; r < spec.rows_per_batch; ++r) {
      const Index i = Index(b) * spec.rows_per_batch + r;
      const int y = r % 2;
      out.table.label[static_cast<std::size_t>(i)] = y;
      out.table.batch[static_cast<std::size_t>(i)] = b;
      for (int k = 0; k < spec.signal_dims; ++k) {
        const double laplace = (rng() & 1 ? 1.0 : -1.0) * expo(rng);
        out.latents(i, k) = laplace + (y ? spec.label_shift : 0.0);
      }
      for (int k = 0; k < spec.technical_dims; ++k) out.latents(i, spec.signal_dims + k) = unif(rng) + offset(k);
    }
  }
  const BiLipschitzMap mixer(d, d, spec.delta, spec.seed ^ 0x9e3779b97f4a7c15ULL);
  out.table.features = mixer.apply(out.latents);
  return out;
}

std::string to_string(Condition c) {
  switch (c) {
  case Condition::Base: return "base";
  case Condition::Pca: return "pca";
  case Condition::PcaIca: return "pca+ica";
  case Condition::PcaRandomRotation: return "pca+random-rotation";
  }
  return "?";
}

Condition condition_from_string(const std::string& s) {
  for (auto c : {Condition::Base, Condition::Pca, Condition::PcaIca, Condition::PcaRandomRotation})
    if (to_string(c) == s) return c;
  throw PreconditionError("unknown condition '" + s + "'");
}

Eigen::MatrixXd condition_features(const Eigen::MatrixXd& observed, Condition c, std::uint64_t seed) {
  if (c == Condition::Base) return observed;
  WhiteningOptions wo;
  wo.form = WhiteningForm::Pca;
  const Eigen::MatrixXd white = apply_whitening(fit_whitening(observed, wo), observed);
  if (c == Condition::Pca) return white;
  if (c == Condition::PcaIca) {
    IcaConfig cfg;
    cfg.seed = seed;
    return apply_ica(fit_ica(white, cfg), white);
  }
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd q = random_orthogonal<double>(white.cols(), rng);
  return white * q.transpose();
}

std::vector<ConditionResult> evaluate_conditions(const EmbeddingTable& table, const DownstreamOptions& options,
                                                 std::uint64_t seed) {
  table.validate();
  options.boost.validate();
  const auto folds = split_by_batch(table, options.plan, seed);
  std::vector<ConditionResult> out(options.conditions.size());
  for (std::size_t ci = 0; ci < options.conditions.size(); ++ci) {
    const auto cond = options.conditions[ci];
    const auto t = table.with_features(condition_features(table.features, cond, seed));
    const auto cv = cross_validate(t, folds, options.boost, options.jobs);
    auto& res = out[ci];
    res.condition = cond;
    res.mean_auroc = cv.mean_auroc;
    res.sparsity = hoyer_sparsity(cv.importance);
    std::vector<ConcentrationResult> conc(options.k_percents.size());
    parallel_for(conc.size(), options.jobs, [&](std::size_t k) {
      conc[k] = concentration(t, cv.importance, options.k_percents[k], folds, options.boost);
    });
    for (std::size_t k = 0; k < conc.size(); ++k) res.concentration[options.k_percents[k]] = conc[k];
  }
  return out;
}

} // namespace nearid

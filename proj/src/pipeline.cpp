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

#include "nearid/pipeline.hpp"

#include "nearid/assignment.hpp"
#include "nearid/linalg.hpp"
#include "nearid/parallel.hpp"
#include "nearid/whitening.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <set>

namespace nearid {

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32)};
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t(out[0]) << 32) | out[1];
}

// ---- config parsing -------------------------------------------------------

namespace {

using nlohmann::json;

/// Strict object reader: every key must be consumed, type errors name the path.
class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() == 0) finish();
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type (" + std::string(j_.at(key).type_name()) + ")");
    }
  }

  template <typename T, typename Fn>
  void get_with(const char* key, T& out, Fn&& convert) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = convert(j_.at(key));
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    } catch (const PreconditionError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  [[nodiscard]] std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where(k) + ": unknown key");
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void validated(const std::string& what, Fn&& fn) {
  try {
    fn();
  } catch (const PreconditionError& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

std::string to_string(RecursionReading r) { return r == RecursionReading::Literal ? "literal" : "alternate"; }

RecursionReading reading_from_string(const std::string& s) {
  if (s == "literal") return RecursionReading::Literal;
  if (s == "alternate") return RecursionReading::Alternate;
  throw PreconditionError("unknown recursion reading '" + s + "'");
}

void parse_train(const json& j, const std::string& path, TrainConfig& t) {
  Section s(j, path);
  s.get("learning_rate", t.learning_rate);
  s.get("max_epochs", t.max_epochs);
  s.get("patience", t.patience);
  s.get("min_improvement", t.min_improvement);
  s.get("clip_norm", t.clip_norm);
  s.get("batch_size", t.batch_size);
}

json train_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"max_epochs", t.max_epochs},   {"patience", t.patience},
          {"min_improvement", t.min_improvement}, {"clip_norm", t.clip_norm}, {"batch_size", t.batch_size}};
}

void parse_ica(const json& j, const std::string& path, IcaConfig& c) {
  Section s(j, path);
  s.get("max_iterations", c.max_iterations);
  s.get("tolerance", c.tolerance);
  s.get("restarts", c.restarts);
  s.get_with("contrast", c.contrast, [](const json& v) { return contrast_from_string(v.get<std::string>()); });
}

json ica_json(const IcaConfig& c) {
  return {{"max_iterations", c.max_iterations}, {"tolerance", c.tolerance}, {"restarts", c.restarts},
          {"contrast", to_string(c.contrast)}};
}

void parse_warmup(const json& j, WarmupConfig& c) {
  Section s(j, "warmup");
  s.get("samples", c.samples);
  s.get("input_dim", c.input_dim);
  s.get("latent_dim", c.latent_dim);
  s.get("delta", c.delta);
  s.get("leaks", c.leaks);
  s.get("seeds", c.seeds);
  s.get("hidden", c.hidden);
  s.get("probes", c.probes);
  s.get("probe_samples", c.probe_samples);
  s.get("vaisala_grid_points", c.vaisala_grid_points);
  if (const auto* t = s.sub("train")) parse_train(*t, "warmup.train", c.train);
  if (const auto* f = s.sub("filter")) {
    Section fs(*f, "warmup.filter");
    fs.get("reference_leak", c.filter.reference_leak);
    fs.get("percentile", c.filter.percentile);
  }
}

void parse_alignment(const json& j, AlignmentConfig& c) {
  Section s(j, "alignment");
  s.get("samples", c.samples);
  s.get("latent_dim", c.latent_dim);
  s.get("delta", c.delta);
  s.get_with("distribution", c.distribution, [](const json& v) { return distribution_from_string(v.get<std::string>()); });
  s.get("anisotropy", c.anisotropy);
  s.get("repeats", c.repeats);
  if (const auto* i = s.sub("ica")) parse_ica(*i, "alignment.ica", c.ica);
}

void parse_ica_recovery(const json& j, IcaRecoveryConfig& c) {
  Section s(j, "ica_recovery");
  s.get("dimensions", c.dimensions);
  s.get_with("distributions", c.distributions, [](const json& v) {
    std::vector<SourceDistribution> out;
    for (const auto& e : v) out.push_back(distribution_from_string(e.get<std::string>()));
    return out;
  });
  s.get("samples", c.samples);
  s.get("seeds", c.seeds);
  s.get("mixing", c.mixing);
  if (const auto* i = s.sub("ica")) parse_ica(*i, "ica_recovery.ica", c.ica);
}

void parse_square(const json& j, SquareConfig& c) {
  Section s(j, "square");
  s.get("position_min", c.spec.position_min);
  s.get("position_max", c.spec.position_max);
  s.get("radius_min", c.spec.radius_min);
  s.get("radius_max", c.spec.radius_max);
  s.get("pixels", c.spec.pixels);
  s.get("positions", c.positions);
  s.get("radii", c.radii);
  s.get_with("step", c.step, [](const json& v) { return std::optional<double>(v.get<double>()); });
}

void parse_downstream(const json& j, DownstreamConfig& c) {
  Section s(j, "downstream");
  s.get("seeds", c.seeds);
  if (const auto* d = s.sub("data")) {
    Section ds(*d, "downstream.data");
    ds.get("signal_dims", c.data.signal_dims);
    ds.get("technical_dims", c.data.technical_dims);
    ds.get("batches", c.data.batches);
    ds.get("rows_per_batch", c.data.rows_per_batch);
    ds.get("label_shift", c.data.label_shift);
    ds.get("batch_shift", c.data.batch_shift);
    ds.get("delta", c.data.delta);
  }
  if (const auto* h = s.sub("holdout")) {
    Section hs(*h, "downstream.holdout");
    hs.get("fraction", c.options.plan.holdout_fraction);
    hs.get("folds", c.options.plan.folds);
    hs.get("stratify", c.options.plan.stratify);
  }
  if (const auto* b = s.sub("boost")) {
    Section bs(*b, "downstream.boost");
    auto& p = c.options.boost;
    bs.get("rounds", p.rounds);
    bs.get("learning_rate", p.learning_rate);
    bs.get("max_depth", p.max_depth);
    bs.get("num_leaves", p.num_leaves);
    bs.get("feature_fraction", p.feature_fraction);
    bs.get("reg_alpha", p.reg_alpha);
    bs.get("reg_lambda", p.reg_lambda);
    bs.get("min_gain", p.min_gain);
    bs.get("min_data_in_leaf", p.min_data_in_leaf);
    bs.get("is_unbalance", p.is_unbalance);
    bs.get("bins", p.bins);
  }
  s.get("k_percents", c.options.k_percents);
  s.get_with("conditions", c.options.conditions, [](const json& v) {
    std::vector<Condition> out;
    for (const auto& e : v) out.push_back(condition_from_string(e.get<std::string>()));
    return out;
  });
}

void parse_vaisala(const json& j, VaisalaConfig& c) {
  Section s(j, "vaisala");
  s.get("dimensions", c.dimensions);
  s.get_with("readings", c.readings, [](const json& v) {
    std::vector<RecursionReading> out;
    for (const auto& e : v) out.push_back(reading_from_string(e.get<std::string>()));
    return out;
  });
  if (const auto* g = s.sub("grid")) {
    Section gs(*g, "vaisala.grid");
    gs.get("lo", c.grid.lo);
    gs.get("hi", c.grid.hi);
    gs.get("points", c.grid.points);
    gs.get("tolerance", c.grid.rel_tolerance);
  }
}

} // namespace

void WarmupConfig::validate() const {
  require(samples >= 2 && latent_dim >= 1 && input_dim >= latent_dim, "warmup: need samples >= 2 and input_dim >= latent_dim >= 1");
  require(delta >= 0, "warmup: delta must be nonnegative");
  require(!leaks.empty(), "warmup: no leaks");
  for (double a : leaks) require(a >= 0 && a <= 1, "warmup: leaks must lie in [0, 1]");
  require(std::any_of(leaks.begin(), leaks.end(), [&](double a) { return std::abs(a - filter.reference_leak) < 1e-12; }),
          "warmup: the filter's reference leak must be one of the leaks");
  require(filter.percentile > 0 && filter.percentile < 100, "warmup: filter percentile must lie in (0, 100)");
  require(seeds >= 1, "warmup: seeds must be positive");
  require(probes >= 1 && probe_samples >= 1, "warmup: probes and probe_samples must be positive");
  require(vaisala_grid_points >= 3, "warmup: vaisala_grid_points must be at least 3");
  train.validate();
  require(samples >= train.batch_size, "warmup: samples must be at least the batch size");
  AutoencoderArch::mirrored(input_dim, latent_dim, hidden).validate();
}

void AlignmentConfig::validate() const {
  require(latent_dim >= 2, "alignment: latent_dim must be at least 2");
  require(samples > 10 * latent_dim, "alignment: need samples > 10 * latent_dim for ICA");
  require(delta >= 0, "alignment: delta must be nonnegative");
  require(anisotropy >= 1, "alignment: anisotropy must be >= 1");
  require(repeats >= 1, "alignment: repeats must be positive");
  require(distribution != SourceDistribution::Gaussian, "alignment: Gaussian sources are not ICA-recoverable");
  ica.validate();
}

void IcaRecoveryConfig::validate() const {
  require(!dimensions.empty() && !distributions.empty(), "ica_recovery: need dimensions and distributions");
  for (int d : dimensions) {
    require(d >= 2, "ica_recovery: dimensions must be at least 2");
    require(samples > 10 * d, "ica_recovery: need samples > 10 * dimension");
  }
  for (auto d : distributions) require(d != SourceDistribution::Gaussian, "ica_recovery: Gaussian sources are not recoverable");
  require(seeds >= 1, "ica_recovery: seeds must be positive");
  require(mixing == "identity" || mixing == "random-rotation" || mixing == "linear",
          "ica_recovery: mixing must be identity, random-rotation or linear");
  ica.validate();
}

void SquareConfig::validate() const {
  spec.validate();
  require(!positions.empty() && !radii.empty(), "square: need positions and radii");
  for (double p : positions) require(p > spec.position_min && p < spec.position_max, "square: position outside the range");
  for (double r : radii) require(r > spec.radius_min && r < spec.radius_max, "square: radius outside the range");
  if (step) require(*step > 0, "square: step must be positive");
}

void DownstreamConfig::validate() const {
  data.validate();
  options.plan.validate();
  options.boost.validate();
  require(seeds >= 1, "downstream: seeds must be positive");
  require(!options.conditions.empty(), "downstream: no conditions");
  for (int k : options.k_percents) require(k > 0 && k < 100, "downstream: k_percents must lie in (0, 100)");
  require(data.batches >= 5, "downstream: need at least 5 batches");
}

void VaisalaConfig::validate() const {
  require(!dimensions.empty() && !readings.empty(), "vaisala: need dimensions and readings");
  for (int d : dimensions) require(d >= 1 && d <= 8, "vaisala: dimensions must lie in [1, 8]");
  require(grid.points >= 3 && grid.lo > 0 && grid.hi > grid.lo && grid.rel_tolerance > 0, "vaisala: invalid grid");
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  {
    Section s(j, "");
    s.get("pipeline", c.pipeline);
    s.get("seed", c.seed);
    std::string out = c.output.string();
    s.get("output", out);
    c.output = out;
    s.get("jobs", c.jobs);
    if (const auto* w = s.sub("warmup")) parse_warmup(*w, c.warmup);
    if (const auto* a = s.sub("alignment")) parse_alignment(*a, c.alignment);
    if (const auto* i = s.sub("ica_recovery")) parse_ica_recovery(*i, c.ica_recovery);
    if (const auto* q = s.sub("square")) parse_square(*q, c.square);
    if (const auto* d = s.sub("downstream")) parse_downstream(*d, c.downstream);
    if (const auto* v = s.sub("vaisala")) parse_vaisala(*v, c.vaisala);
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  const auto& names = pipeline_names();
  if (std::find(names.begin(), names.end(), pipeline) == names.end())
    throw ConfigError("pipeline: unknown pipeline '" + pipeline + "'");
  if (jobs < 1) throw ConfigError("jobs: must be positive");
  validated("warmup", [&] { warmup.validate(); });
  validated("alignment", [&] { alignment.validate(); });
  validated("ica_recovery", [&] { ica_recovery.validate(); });
  validated("square", [&] { square.validate(); });
  validated("downstream", [&] { downstream.validate(); });
  validated("vaisala", [&] { vaisala.validate(); });
}

nlohmann::json ExperimentConfig::to_json() const {
  json j;
  j["pipeline"] = pipeline;
  j["seed"] = seed;
  j["output"] = output.string();
  j["warmup"] = {{"samples", warmup.samples},
                 {"input_dim", warmup.input_dim},
                 {"latent_dim", warmup.latent_dim},
                 {"delta", warmup.delta},
                 {"leaks", warmup.leaks},
                 {"seeds", warmup.seeds},
                 {"hidden", warmup.hidden},
                 {"probes", warmup.probes},
                 {"probe_samples", warmup.probe_samples},
                 {"vaisala_grid_points", warmup.vaisala_grid_points},
                 {"train", train_json(warmup.train)},
                 {"filter", {{"reference_leak", warmup.filter.reference_leak}, {"percentile", warmup.filter.percentile}}}};
  j["alignment"] = {{"samples", alignment.samples},
                    {"latent_dim", alignment.latent_dim},
                    {"delta", alignment.delta},
                    {"distribution", nearid::to_string(alignment.distribution)},
                    {"anisotropy", alignment.anisotropy},
                    {"repeats", alignment.repeats},
                    {"ica", ica_json(alignment.ica)}};
  std::vector<std::string> dists;
  for (auto d : ica_recovery.distributions) dists.push_back(nearid::to_string(d));
  j["ica_recovery"] = {{"dimensions", ica_recovery.dimensions}, {"distributions", dists},
                       {"samples", ica_recovery.samples},       {"seeds", ica_recovery.seeds},
                       {"mixing", ica_recovery.mixing},         {"ica", ica_json(ica_recovery.ica)}};
  j["square"] = {{"position_min", square.spec.position_min},
                 {"position_max", square.spec.position_max},
                 {"radius_min", square.spec.radius_min},
                 {"radius_max", square.spec.radius_max},
                 {"pixels", square.spec.pixels},
                 {"positions", square.positions},
                 {"radii", square.radii}};
  if (square.step) j["square"]["step"] = *square.step;
  const auto& d = downstream;
  std::vector<std::string> conds;
  for (auto c : d.options.conditions) conds.push_back(nearid::to_string(c));
  j["downstream"] = {
      {"seeds", d.seeds},
      {"data",
       {{"signal_dims", d.data.signal_dims},
        {"technical_dims", d.data.technical_dims},
        {"batches", d.data.batches},
        {"rows_per_batch", d.data.rows_per_batch},
        {"label_shift", d.data.label_shift},
        {"batch_shift", d.data.batch_shift},
        {"delta", d.data.delta}}},
      {"holdout",
       {{"fraction", d.options.plan.holdout_fraction}, {"folds", d.options.plan.folds}, {"stratify", d.options.plan.stratify}}},
      {"boost",
       {{"rounds", d.options.boost.rounds},
        {"learning_rate", d.options.boost.learning_rate},
        {"max_depth", d.options.boost.max_depth},
        {"num_leaves", d.options.boost.num_leaves},
        {"feature_fraction", d.options.boost.feature_fraction},
        {"reg_alpha", d.options.boost.reg_alpha},
        {"reg_lambda", d.options.boost.reg_lambda},
        {"min_gain", d.options.boost.min_gain},
        {"min_data_in_leaf", d.options.boost.min_data_in_leaf},
        {"is_unbalance", d.options.boost.is_unbalance},
        {"bins", d.options.boost.bins}}},
      {"k_percents", d.options.k_percents},
      {"conditions", conds}};
  std::vector<std::string> readings;
  for (auto r : vaisala.readings) readings.push_back(to_string(r));
  j["vaisala"] = {{"dimensions", vaisala.dimensions},
                  {"readings", readings},
                  {"grid",
                   {{"lo", vaisala.grid.lo},
                    {"hi", vaisala.grid.hi},
                    {"points", vaisala.grid.points},
                    {"tolerance", vaisala.grid.rel_tolerance}}}};
  return j;
}

// Output directory and job count do not change results, so they stay out of the hash.
std::string ExperimentConfig::hash() const {
  auto j = to_json();
  j.erase("output");
  return sha256_hex(j.dump());
}

// ---- computations ----------------------------------------------------------

namespace {

LabeledDataset warmup_data(const WarmupConfig& c, std::uint64_t seed) {
  const auto src = sample_sources(SourceSpec::iid(c.latent_dim, SourceDistribution::Uniform, derive_seed(seed, {1})), c.samples);
  return mix(src, MixingSpec::bilipschitz(c.latent_dim, c.input_dim, c.delta, derive_seed(seed, {2})));
}

struct WarmupRun {
  WarmupResult result;
  std::vector<AutoencoderModel> models; ///< pair-major: 2k, 2k+1
};

WarmupRun warmup_sweep(const WarmupConfig& c, const LabeledDataset& data, std::uint64_t seed, int jobs) {
  const auto arch = AutoencoderArch::mirrored(c.input_dim, c.latent_dim, c.hidden);
  const auto npairs = c.leaks.size() * static_cast<std::size_t>(c.seeds);
  WarmupRun run;
  run.models.resize(2 * npairs);
  parallel_for(2 * npairs, jobs, [&](std::size_t t) {
    const auto pair = t / 2;
    TrainConfig tc = c.train;
    tc.leak = c.leaks[pair / static_cast<std::size_t>(c.seeds)];
    tc.seed = derive_seed(seed, {3, pair % static_cast<std::size_t>(c.seeds), t % 2});
    run.models[t] = train_autoencoder(data.observations, arch, tc);
  });

  auto& res = run.result;
  LambdaGrid grid;
  grid.points = c.vaisala_grid_points;
  res.c_d = vaisala_constant(static_cast<int>(c.latent_dim), grid).value;
  const Index probe_rows = std::min(c.probe_samples, data.observations.rows());
  res.pairs.resize(npairs);
  parallel_for(npairs, jobs, [&](std::size_t p) {
    const auto& m1 = run.models[2 * p];
    const auto& m2 = run.models[2 * p + 1];
    const Eigen::MatrixXd z1 = encode(m1, data.observations);
    const Eigen::MatrixXd z2 = encode(m2, data.observations);
    RigidOptions iso;
    iso.with_scale = false;
    const auto map = fit_rigid<double>(z1, z2, iso);
    auto& w = res.pairs[p];
    w.leak = m1.leak;
    w.seed_index = static_cast<int>(p % static_cast<std::size_t>(c.seeds));
    w.error = (map.apply(z1) - z2).rowwise().norm().mean();
    w.diameter = latent_diameter<double>(z2, 5000, derive_seed(seed, {4, p}));
    const auto l1 = estimate_bilipschitz(m1, z1.topRows(probe_rows), c.probes, Aggregation::Mean, derive_seed(seed, {5, p, 0}));
    const auto l2 = estimate_bilipschitz(m2, z2.topRows(probe_rows), c.probes, Aggregation::Mean, derive_seed(seed, {5, p, 1}));
    w.L_mean = 0.5 * (l1.L_mean() + l2.L_mean());
    w.L_max = std::max(l1.L_max(), l2.L_max());
    // Rounding can push B a hair below 1 for an exactly isometric decoder.
    w.bound_max = identifiability_bound(res.c_d, std::max(w.L_max, 0.0), w.diameter);
    w.bound_mean = identifiability_bound(res.c_d, std::max(w.L_mean, 0.0), w.diameter);
    w.recon_first = reconstruction_mse(m1, data.observations);
    w.recon_second = reconstruction_mse(m2, data.observations);
    w.outside_hypothesis = m1.outside_injectivity_hypothesis();
  });

  std::vector<PairedRun> runs;
  for (const auto& w : res.pairs) runs.push_back({w.leak, std::uint64_t(w.seed_index), w.recon_first, w.recon_second});
  res.filter = filter_runs(runs, c.filter);
  for (auto& w : res.pairs) w.kept = false;
  for (auto i : res.filter.kept) res.pairs[i].kept = true;

  std::vector<double> leaks = c.leaks;
  std::sort(leaks.begin(), leaks.end());
  leaks.erase(std::unique(leaks.begin(), leaks.end()), leaks.end());
  std::vector<std::pair<double, double>> points;
  for (double a : leaks) {
    WarmupLevel lvl;
    lvl.leak = a;
    for (const auto& w : res.pairs)
      if (w.kept && w.leak == a) {
        lvl.L_mean += w.L_mean;
        lvl.error += w.error;
        ++lvl.pairs;
      }
    if (lvl.pairs == 0) continue;
    lvl.L_mean /= lvl.pairs;
    lvl.error /= lvl.pairs;
    res.levels.push_back(lvl);
  }
  for (const auto& w : res.pairs)
    if (w.kept) points.emplace_back(std::max(w.L_mean, 0.0), w.error);
  try {
    res.fit = fit_identifiability_curve(points);
  } catch (const PreconditionError&) {
    res.fit.reset(); // fewer than three kept pairs or a degenerate design
  }
  return run;
}

Eigen::MatrixXd anisotropic_linear(Index d, double anisotropy, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd u = random_orthogonal<double>(d, rng);
  const Eigen::MatrixXd v = random_orthogonal<double>(d, rng);
  std::uniform_real_distribution<double> logs(-std::log(anisotropy), std::log(anisotropy));
  Eigen::VectorXd s(d);
  for (Index k = 0; k < d; ++k) s(k) = std::exp(logs(rng));
  return u * s.asDiagonal() * v.transpose();
}

} // namespace

WarmupResult run_warmup(const WarmupConfig& config, std::uint64_t seed, int jobs) {
  validated("warmup", [&] { config.validate(); });
  return warmup_sweep(config, warmup_data(config, seed), seed, jobs).result;
}

std::vector<AlignmentTableRow> run_alignment(const AlignmentConfig& config, std::uint64_t seed) {
  validated("alignment", [&] { config.validate(); });
  std::vector<AlignmentTableRow> rows;
  for (int r = 0; r < config.repeats; ++r) {
    const std::uint64_t rr = static_cast<std::uint64_t>(r);
    const auto u = sample_sources(SourceSpec::iid(config.latent_dim, config.distribution, derive_seed(seed, {10, rr})),
                                  config.samples)
                       .latents;
    Eigen::MatrixXd reps[2];
    for (std::uint64_t k = 0; k < 2; ++k) {
      const BiLipschitzMap phi(config.latent_dim, config.latent_dim, config.delta, derive_seed(seed, {11, rr, k}));
      reps[k] = phi.apply(u) * anisotropic_linear(config.latent_dim, config.anisotropy, derive_seed(seed, {12, rr, k})).transpose();
    }
    AlignmentTableOptions opts;
    opts.ica = config.ica;
    opts.ica.seed = derive_seed(seed, {13, rr});
    opts.diameter.seed = derive_seed(seed, {14, rr});
    rows.push_back(alignment_table(reps[0], reps[1], opts));
  }
  return rows;
}

std::vector<IcaRecoveryRow> run_ica_recovery(const IcaRecoveryConfig& config, std::uint64_t seed, int jobs) {
  validated("ica_recovery", [&] { config.validate(); });
  struct Task {
    int dim;
    SourceDistribution dist;
    int s;
  };
  std::vector<Task> tasks;
  for (int d : config.dimensions)
    for (auto dist : config.distributions)
      for (int s = 0; s < config.seeds; ++s) tasks.push_back({d, dist, s});
  std::vector<IcaRecoveryRow> rows(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t t) {
    const auto& task = tasks[t];
    const std::uint64_t tag[3] = {std::uint64_t(task.dim), std::uint64_t(task.dist), std::uint64_t(task.s)};
    const auto src = sample_sources(SourceSpec::iid(task.dim, task.dist, derive_seed(seed, {20, tag[0], tag[1], tag[2]})),
                                    config.samples);
    Eigen::MatrixXd x = src.latents;
    if (config.mixing == "random-rotation") {
      x = mix(src, MixingSpec::random_rotation(task.dim, derive_seed(seed, {21, tag[0], tag[1], tag[2]}))).observations;
    } else if (config.mixing == "linear") {
      std::mt19937_64 rng(derive_seed(seed, {22, tag[0], tag[1], tag[2]}));
      std::normal_distribution<double> normal(0, 1);
      Eigen::MatrixXd a(task.dim, task.dim);
      for (Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
      x = mix(src, MixingSpec::linear(a)).observations;
    }
    const Eigen::MatrixXd white = apply_whitening(fit_whitening(x, {}), x);
    IcaConfig ic = config.ica;
    ic.seed = derive_seed(seed, {23, tag[0], tag[1], tag[2]});
    const auto model = fit_ica(white, ic);
    const Eigen::MatrixXd y = apply_ica(model, white);
    const Eigen::MatrixXd corr = cross_correlation<double>(y, src.latents);
    const auto perm = match_by_correlation<double>(y, src.latents);
    auto& row = rows[t];
    row.dimension = task.dim;
    row.distribution = task.dist;
    row.seed_index = task.s;
    row.converged = model.converged;
    row.min_abs_corr = 1;
    for (Index k = 0; k < task.dim; ++k) {
      const double c = std::abs(corr(perm.source_of[static_cast<std::size_t>(k)], k));
      row.mean_abs_corr += c / task.dim;
      row.min_abs_corr = std::min(row.min_abs_corr, c);
    }
    DiameterOptions dopt;
    dopt.seed = derive_seed(seed, {24, tag[0], tag[1], tag[2]});
    row.normalized_error = normalized_error(fit_signed_permutation<double>(y, src.latents), y, src.latents, dopt).normalized_error;
  });
  return rows;
}

SquareSummary run_square(const SquareConfig& config) {
  validated("square", [&] { config.validate(); });
  SquareSummary out;
  double ratio_sum = 0;
  for (double r : config.radii) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0, sum = 0;
    for (double p : config.positions) {
      SquareRow row{p, r, manifold_metric_check(config.spec, p, r, config.step)};
      ratio_sum += row.metric.ratio();
      out.max_abs_cosine = std::max(out.max_abs_cosine, std::abs(row.metric.cosine()));
      lo = std::min(lo, row.metric.dp_sq);
      hi = std::max(hi, row.metric.dp_sq);
      sum += row.metric.dp_sq;
      out.rows.push_back(row);
    }
    out.max_dp_spread = std::max(out.max_dp_spread, (hi - lo) / (sum / double(config.positions.size())));
  }
  out.mean_ratio = ratio_sum / double(out.rows.size());
  return out;
}

std::vector<DownstreamSeed> run_downstream(const DownstreamConfig& config, std::uint64_t seed, int jobs) {
  validated("downstream", [&] { config.validate(); });
  std::vector<DownstreamSeed> out(static_cast<std::size_t>(config.seeds));
  parallel_for(out.size(), jobs, [&](std::size_t s) {
    ConfoundedSpec spec = config.data;
    spec.seed = derive_seed(seed, {30, s});
    const auto ds = make_confounded(spec);
    DownstreamOptions opts = config.options;
    opts.jobs = 1;
    out[s] = {static_cast<int>(s), evaluate_conditions(ds.table, opts, derive_seed(seed, {31, s}))};
  });
  return out;
}

std::vector<VaisalaConstants> run_vaisala(const VaisalaConfig& config) {
  validated("vaisala", [&] { config.validate(); });
  std::vector<VaisalaConstants> out;
  for (int d : config.dimensions)
    for (auto r : config.readings) out.push_back(vaisala_constant(d, config.grid, r));
  return out;
}

// ---- manifest --------------------------------------------------------------

nlohmann::json RunManifest::to_json() const {
  json stages_json = json::array();
  for (const auto& s : stages)
    stages_json.push_back({{"name", s.name}, {"inputs", s.inputs}, {"outputs", s.outputs}, {"wall_seconds", s.wall_seconds}});
  return {{"config_hash", config_hash}, {"version", version},         {"pipeline", pipeline},
          {"seed", seed},               {"stages", stages_json},      {"report_tables", report_tables},
          {"complete", complete},       {"failed_stage", failed_stage}, {"error", error}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.config_hash = j.at("config_hash").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.pipeline = j.at("pipeline").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("stages"))
      m.stages.push_back({s.at("name").get<std::string>(), s.at("inputs").get<std::map<std::string, std::string>>(),
                          s.at("outputs").get<std::map<std::string, std::string>>(), s.at("wall_seconds").get<double>()});
    m.report_tables = j.at("report_tables").get<std::vector<std::string>>();
    m.complete = j.at("complete").get<bool>();
    m.failed_stage = j.value("failed_stage", "");
    m.error = j.value("error", "");
  } catch (const json::exception& e) {
    throw PreconditionError(std::string("manifest: malformed (") + e.what() + ")");
  }
  return m;
}

namespace {

class Runner {
public:
  explicit Runner(const ExperimentConfig& c) : config_(c), out_(c.output) {
    manifest_.config_hash = c.hash();
    manifest_.pipeline = c.pipeline;
    manifest_.seed = c.seed;
  }

  /// Artifacts are written through `write`, which records digests for the
  /// current stage.
  void stage(const std::string& name, const std::function<void()>& body) {
    current_ = StageRecord{name, {}, {}, 0};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      manifest_.failed_stage = name;
      manifest_.error = e.what();
      manifest_.stages.push_back(current_);
      save_manifest();
      throw StageError(name, e.what());
    }
    current_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest_.stages.push_back(current_);
  }

  void write(const std::string& rel, const std::string& content) {
    write_file_atomic(out_ / rel, content);
    current_.outputs[rel] = sha256_hex(content);
  }

  void input(const std::string& rel) { current_.inputs[rel] = sha256_file(out_ / rel); }

  void report_table(const std::string& rel) { manifest_.report_tables.push_back(rel); }

  RunManifest finish() {
    manifest_.complete = true;
    save_manifest();
    return manifest_;
  }

  const ExperimentConfig& config() const { return config_; }

private:
  void save_manifest() { write_file_atomic(out_ / "manifest.json", manifest_.to_json().dump(2) + "\n"); }

  const ExperimentConfig& config_;
  fs::path out_;
  RunManifest manifest_;
  StageRecord current_;
};

std::string fmt(double v) { return format_double(v); }

void run_warmup_pipeline(Runner& run) {
  const auto& c = run.config().warmup;
  const auto seed = run.config().seed;
  LabeledDataset data;
  run.stage("generate", [&] {
    data = warmup_data(c, seed);
    run.write("dataset.csv", dataset_csv(data));
    run.write("dataset.json", dataset_sidecar(data).dump(2) + "\n");
  });
  WarmupRun sweep;
  run.stage("train", [&] {
    run.input("dataset.csv");
    sweep = warmup_sweep(c, data, seed, run.config().jobs);
    for (std::size_t t = 0; t < sweep.models.size(); ++t) {
      const auto& w = sweep.result.pairs[t / 2];
      run.write("curves/leak" + fmt(w.leak) + "_seed" + std::to_string(w.seed_index) + (t % 2 ? "_b" : "_a") + ".csv",
                training_curve_csv(sweep.models[t]));
    }
  });
  run.stage("measure", [&] {
    const auto& r = sweep.result;
    CsvTable pairs{{"leak", "seed", "L_mean", "L_max", "error", "diameter", "bound_max", "bound_mean", "recon_a", "recon_b",
                    "kept", "outside_hypothesis"},
                   {}};
    CsvTable points{{"leak", "seed", "L", "error"}, {}};
    for (const auto& w : r.pairs) {
      pairs.rows.push_back({fmt(w.leak), std::to_string(w.seed_index), fmt(w.L_mean), fmt(w.L_max), fmt(w.error),
                            fmt(w.diameter), fmt(w.bound_max), fmt(w.bound_mean), fmt(w.recon_first), fmt(w.recon_second),
                            w.kept ? "1" : "0", w.outside_hypothesis ? "1" : "0"});
      if (w.kept) points.rows.push_back({fmt(w.leak), std::to_string(w.seed_index), fmt(w.L_mean), fmt(w.error)});
    }
    CsvTable levels{{"leak", "L", "error", "pairs"}, {}};
    for (const auto& l : r.levels) levels.rows.push_back({fmt(l.leak), fmt(l.L_mean), fmt(l.error), std::to_string(l.pairs)});
    run.write("warmup_pairs.csv", render_csv(pairs));
    run.write("warmup_points.csv", render_csv(points));
    run.write("warmup_levels.csv", render_csv(levels));
    json fit = r.fit ? to_json(*r.fit) : json(nullptr);
    run.write("curve_fit.json", json{{"fit", fit},
                                     {"c_d", r.c_d},
                                     {"filter", {{"threshold", r.filter.threshold}, {"removed", r.filter.removed}}}}
                                    .dump(2) +
                                    "\n");
    run.report_table("warmup_points.csv");
    run.report_table("warmup_levels.csv");
  });
}

void run_alignment_pipeline(Runner& run) {
  run.stage("align", [&] {
    const auto rows = run_alignment(run.config().alignment, run.config().seed);
    run.write("alignment_table.csv", alignment_table_csv(rows));
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(to_json(r));
    run.write("alignment.json", arr.dump(2) + "\n");
    run.report_table("alignment_table.csv");
  });
}

void run_ica_pipeline(Runner& run) {
  run.stage("ica", [&] {
    const auto& c = run.config().ica_recovery;
    const auto rows = run_ica_recovery(c, run.config().seed, run.config().jobs);
    CsvTable all{{"dimension", "distribution", "seed", "mean_abs_corr", "min_abs_corr", "normalized_error", "converged"}, {}};
    for (const auto& r : rows)
      all.rows.push_back({std::to_string(r.dimension), to_string(r.distribution), std::to_string(r.seed_index),
                          fmt(r.mean_abs_corr), fmt(r.min_abs_corr), fmt(r.normalized_error), r.converged ? "1" : "0"});
    CsvTable summary{{"dimension", "distribution", "seeds", "mean_abs_corr", "min_abs_corr", "mean_normalized_error"}, {}};
    for (int d : c.dimensions)
      for (auto dist : c.distributions) {
        double mean = 0, mn = 1, err = 0;
        int n = 0;
        for (const auto& r : rows)
          if (r.dimension == d && r.distribution == dist) {
            mean += r.mean_abs_corr;
            mn = std::min(mn, r.min_abs_corr);
            err += r.normalized_error;
            ++n;
          }
        summary.rows.push_back({std::to_string(d), to_string(dist), std::to_string(n), fmt(mean / n), fmt(mn), fmt(err / n)});
      }
    run.write("ica_recovery.csv", render_csv(all));
    run.write("ica_summary.csv", render_csv(summary));
    run.report_table("ica_summary.csv");
  });
}

void run_square_pipeline(Runner& run) {
  run.stage("metric", [&] {
    const auto s = run_square(run.config().square);
    CsvTable t{{"p", "r", "dp_sq", "dr_sq", "cross", "ratio", "cosine", "step", "converged"}, {}};
    for (const auto& r : s.rows)
      t.rows.push_back({fmt(r.p), fmt(r.r), fmt(r.metric.dp_sq), fmt(r.metric.dr_sq), fmt(r.metric.cross),
                        fmt(r.metric.ratio()), fmt(r.metric.cosine()), fmt(r.metric.step), r.metric.converged ? "1" : "0"});
    run.write("square_metric.csv", render_csv(t));
    run.write("square_summary.json", json{{"mean_ratio", s.mean_ratio},
                                          {"max_abs_cosine", s.max_abs_cosine},
                                          {"max_dp_spread", s.max_dp_spread},
                                          {"spec", run.config().square.spec.to_json()}}
                                         .dump(2) +
                                         "\n");
    run.report_table("square_metric.csv");
  });
}

void run_downstream_pipeline(Runner& run) {
  run.stage("downstream", [&] {
    const auto seeds = run_downstream(run.config().downstream, run.config().seed, run.config().jobs);
    json per_seed = json::array();
    for (const auto& s : seeds) {
      per_seed.push_back({{"seed_index", s.seed_index}, {"conditions", to_json(s.results)}});
      run.write("seeds/table2_" + std::to_string(s.seed_index) + ".csv", table2_csv(s.results));
      run.write("seeds/table3_" + std::to_string(s.seed_index) + ".csv", table3_csv(s.results));
    }
    // Seed-averaged tables; an undefined concentration in any seed leaves the cell empty.
    std::vector<ConditionResult> mean = seeds.front().results;
    for (std::size_t c = 0; c < mean.size(); ++c) {
      double auc = 0, sp = 0;
      for (const auto& s : seeds) {
        auc += s.results[c].mean_auroc;
        sp += s.results[c].sparsity;
      }
      mean[c].mean_auroc = auc / double(seeds.size());
      mean[c].sparsity = sp / double(seeds.size());
      for (auto& [k, cr] : mean[c].concentration) {
        double v = 0;
        bool defined = true;
        for (const auto& s : seeds) {
          const auto& other = s.results[c].concentration.at(k);
          if (other.value) v += *other.value;
          else defined = false;
        }
        cr.value = defined ? std::optional<double>(v / double(seeds.size())) : std::nullopt;
      }
    }
    run.write("table2.csv", table2_csv(mean));
    run.write("table3.csv", table3_csv(mean));
    run.write("downstream.json", json{{"mean", to_json(mean)}, {"seeds", per_seed}}.dump(2) + "\n");
    run.report_table("table2.csv");
    run.report_table("table3.csv");
  });
}

void run_vaisala_pipeline(Runner& run) {
  run.stage("constants", [&] {
    const auto cs = run_vaisala(run.config().vaisala);
    CsvTable t{{"dimension", "reading", "c_d", "argmin_lambda", "at_grid_edge"}, {}};
    json arr = json::array();
    for (const auto& c : cs) {
      t.rows.push_back({std::to_string(c.dimension), to_string(c.reading), fmt(c.value), fmt(c.argmin_lambda),
                        c.at_grid_edge ? "1" : "0"});
      arr.push_back(to_json(c));
    }
    run.write("constants.csv", render_csv(t));
    run.write("constants.json", arr.dump(2) + "\n");
    run.report_table("constants.csv");
  });
}

} // namespace

RunManifest run(const ExperimentConfig& config) {
  config.validate();
  fs::create_directories(config.output);
  Runner runner(config);
  runner.stage("config", [&] { runner.write("config.json", config.to_json().dump(2) + "\n"); });
  const auto& p = config.pipeline;
  if (p == "warmup-sweep") run_warmup_pipeline(runner);
  else if (p == "alignment-table") run_alignment_pipeline(runner);
  else if (p == "ica-recovery") run_ica_pipeline(runner);
  else if (p == "square-manifold") run_square_pipeline(runner);
  else if (p == "downstream-synthetic") run_downstream_pipeline(runner);
  else if (p == "vaisala") run_vaisala_pipeline(runner);
  return runner.finish();
}

// ---- reports ---------------------------------------------------------------

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  if (s == "markdown") return ReportFormat::Markdown;
  throw PreconditionError("unknown report format '" + s + "'");
}

std::string extension(ReportFormat f) {
  switch (f) {
  case ReportFormat::Csv: return "csv";
  case ReportFormat::Json: return "json";
  case ReportFormat::Markdown: return "md";
  }
  return "txt";
}

namespace {

json cell_json(const std::string& s) {
  if (s.empty()) return nullptr;
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec == std::errc() && res.ptr == s.data() + s.size()) return v;
  return s;
}

} // namespace

std::string render_report(const fs::path& manifest_path, ReportFormat format) {
  const auto manifest = RunManifest::from_json(json::parse(read_file(manifest_path)));
  if (!manifest.complete)
    throw PreconditionError("report: manifest is incomplete" +
                            (manifest.failed_stage.empty() ? std::string() : " (failed stage: " + manifest.failed_stage + ")"));
  const auto dir = manifest_path.parent_path();
  std::vector<std::pair<std::string, CsvTable>> tables;
  for (const auto& name : manifest.report_tables) {
    const auto text = read_file(dir / name);
    bool recorded = false;
    for (const auto& s : manifest.stages) {
      const auto it = s.outputs.find(name);
      if (it == s.outputs.end()) continue;
      recorded = true;
      if (it->second != sha256_hex(text)) throw PreconditionError("report: " + name + " does not match its recorded digest");
    }
    if (!recorded) throw PreconditionError("report: " + name + " is not a recorded output");
    tables.emplace_back(name, parse_csv(text));
  }

  return render_tables(tables, format, {{"pipeline", manifest.pipeline}, {"config_hash", manifest.config_hash}});
}

std::string render_tables(const std::vector<std::pair<std::string, CsvTable>>& tables, ReportFormat format,
                          const nlohmann::json& meta) {
  std::string out;
  if (format == ReportFormat::Json) {
    json j = meta.is_object() ? meta : json::object();
    j["tables"] = json::object();
    for (const auto& [name, t] : tables) {
      json rows = json::array();
      for (const auto& r : t.rows) {
        json row = json::object();
        for (std::size_t k = 0; k < t.header.size(); ++k) row[t.header[k]] = cell_json(r[k]);
        rows.push_back(std::move(row));
      }
      j["tables"][name] = std::move(rows);
    }
    return j.dump(2) + "\n";
  }
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& [name, t] = tables[i];
    if (i) out += "\n";
    if (format == ReportFormat::Csv) {
      out += "# " + name + "\n" + render_csv(t);
    } else {
      out += "## " + name + "\n\n|";
      for (const auto& h : t.header) out += " " + h + " |";
      out += "\n|";
      for (std::size_t k = 0; k < t.header.size(); ++k) out += " --- |";
      out += "\n";
      for (const auto& r : t.rows) {
        out += "|";
        for (const auto& cell : r) out += " " + cell + " |";
        out += "\n";
      }
    }
  }
  return out;
}

fs::path report(const fs::path& manifest_path, ReportFormat format) {
  const auto text = render_report(manifest_path, format);
  const auto path = manifest_path.parent_path() / ("report." + extension(format));
  write_file_atomic(path, text);
  return path;
}

} // namespace nearid

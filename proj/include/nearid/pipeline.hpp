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

#ifndef NEARID_PIPELINE_HPP
#define NEARID_PIPELINE_HPP

#include "nearid/align.hpp"
#include "nearid/autoenc.hpp"
#include "nearid/downstream.hpp"
#include "nearid/ica.hpp"
#include "nearid/io.hpp"
#include "nearid/lipschitz.hpp"
#include "nearid/synthdata.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nearid {

inline constexpr const char* kVersion = "0.1.0";

/// Invalid experiment configuration; raised before any computation.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// A pipeline stage failed; carries the stage name.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  [[nodiscard]] const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

/// Seed for a sub-task, mixed from a base seed and integer tags.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

// ---- per-pipeline configuration -------------------------------------------

struct WarmupConfig {
  Index samples = 1000;
  Index input_dim = 64;
  Index latent_dim = 2;
  double delta = 0.1;
  std::vector<double> leaks{0.25, 0.5, 0.75, 0.9, 1.0};
  int seeds = 4;
  int hidden = 3;
  TrainConfig train;
  int probes = 10;
  Index probe_samples = 500;
  RunFilter filter;
  int vaisala_grid_points = 200;

  void validate() const;
};

struct AlignmentConfig {
  Index samples = 2000;
  Index latent_dim = 4;
  double delta = 0.05;
  SourceDistribution distribution = SourceDistribution::Laplace;
  double anisotropy = 2.0; ///< singular values of each model's linear factor span [1/a, a]
  int repeats = 1;
  IcaConfig ica;

  void validate() const;
};

struct IcaRecoveryConfig {
  std::vector<int> dimensions{2, 4, 8};
  std::vector<SourceDistribution> distributions{SourceDistribution::Uniform, SourceDistribution::Laplace};
  Index samples = 20000;
  int seeds = 10;
  std::string mixing = "random-rotation"; ///< identity | random-rotation | linear
  IcaConfig ica;

  void validate() const;
};

struct SquareConfig {
  SquareManifoldSpec spec{-0.5, 0.5, 0.1, 0.4, 256};
  std::vector<double> positions{-0.3, -0.15, 0.0, 0.15, 0.3};
  std::vector<double> radii{0.15, 0.25, 0.35};
  std::optional<double> step;

  void validate() const;
};

struct DownstreamConfig {
  ConfoundedSpec data;
  DownstreamOptions options;
  int seeds = 10;

  void validate() const;
};

struct VaisalaConfig {
  std::vector<int> dimensions{1, 2, 3};
  std::vector<RecursionReading> readings{RecursionReading::Literal, RecursionReading::Alternate};
  LambdaGrid grid;

  void validate() const;
};

inline const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> names{"warmup-sweep",  "alignment-table",      "ica-recovery",
                                              "square-manifold", "downstream-synthetic", "vaisala"};
  return names;
}

struct ExperimentConfig {
  std::string pipeline;
  std::uint64_t seed = 0;
  std::filesystem::path output = "out";
  int jobs = 1;
  WarmupConfig warmup;
  AlignmentConfig alignment;
  IcaRecoveryConfig ica_recovery;
  SquareConfig square;
  DownstreamConfig downstream;
  VaisalaConfig vaisala;

  /// Parses and validates; unknown keys and bad values raise ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// Canonical form (all defaults filled in), used for hashing.
  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string hash() const;
  void validate() const;
};

// ---- pipeline computations (no I/O) ----------------------------------------

struct WarmupPair {
  double leak = 0;
  int seed_index = 0;
  double L_mean = 0; ///< mean of the two decoders' mean-aggregated L
  double L_max = 0;  ///< max of the two decoders' max-aggregated L
  double error = 0;  ///< mean rigid-aligned ℓ2 error between the latent sets
  double diameter = 0;
  double bound_max = 0;
  double bound_mean = 0;
  double recon_first = 0;
  double recon_second = 0;
  bool kept = true;
  bool outside_hypothesis = false; ///< α = 0: decoder not injective
};

struct WarmupLevel {
  double leak = 0;
  double L_mean = 0;
  double error = 0;
  int pairs = 0;
};

struct WarmupResult {
  std::vector<WarmupPair> pairs;
  std::vector<WarmupLevel> levels; ///< kept pairs only, ascending leak
  FilterResult filter;
  std::optional<CurveFit> fit;
  double c_d = 0;
};

WarmupResult run_warmup(const WarmupConfig& config, std::uint64_t seed, int jobs);

std::vector<AlignmentTableRow> run_alignment(const AlignmentConfig& config, std::uint64_t seed);

struct IcaRecoveryRow {
  int dimension = 0;
  SourceDistribution distribution = SourceDistribution::Uniform;
  int seed_index = 0;
  double mean_abs_corr = 0;
  double min_abs_corr = 0;
  double normalized_error = 0;
  bool converged = false;
};

std::vector<IcaRecoveryRow> run_ica_recovery(const IcaRecoveryConfig& config, std::uint64_t seed, int jobs);

struct SquareRow {
  double p = 0;
  double r = 0;
  MetricReport metric;
};

struct SquareSummary {
  std::vector<SquareRow> rows;
  double mean_ratio = 0;
  double max_abs_cosine = 0;
  double max_dp_spread = 0; ///< max over r of (max − min)/mean of ‖∂_p f‖² across p
};

SquareSummary run_square(const SquareConfig& config);

struct DownstreamSeed {
  int seed_index = 0;
  std::vector<ConditionResult> results;
};

std::vector<DownstreamSeed> run_downstream(const DownstreamConfig& config, std::uint64_t seed, int jobs);

std::vector<VaisalaConstants> run_vaisala(const VaisalaConfig& config);

// ---- orchestration ---------------------------------------------------------

struct StageRecord {
  std::string name;
  std::map<std::string, std::string> inputs;  ///< file -> sha256
  std::map<std::string, std::string> outputs; ///< file -> sha256
  double wall_seconds = 0;
};

struct RunManifest {
  std::string config_hash;
  std::string version = kVersion;
  std::string pipeline;
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;
  std::vector<std::string> report_tables; ///< CSV files rendered by `report`
  bool complete = false;
  std::string failed_stage;
  std::string error;

  [[nodiscard]] nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// Runs the configured pipeline, writing artifacts and finally manifest.json
/// under config.output. On a stage failure the manifest is written with
/// complete = false and a StageError is thrown.
RunManifest run(const ExperimentConfig& config);

enum class ReportFormat { Csv, Json, Markdown };

ReportFormat report_format_from_string(const std::string& s);
std::string extension(ReportFormat f);

/// Named CSV tables as csv (each preceded by a `# name` line), a JSON object
/// with numeric cells as numbers, or markdown tables with the same cell text.
std::string render_tables(const std::vector<std::pair<std::string, CsvTable>>& tables, ReportFormat format,
                          const nlohmann::json& meta = {});

/// Renders the manifest's report tables from the stored artifacts only, so
/// regeneration is byte-identical. Returns the rendered text.
std::string render_report(const std::filesystem::path& manifest_path, ReportFormat format);

/// Writes report.<ext> next to the manifest and returns its path.
std::filesystem::path report(const std::filesystem::path& manifest_path, ReportFormat format);

} // namespace nearid

#endif // NEARID_PIPELINE_HPP

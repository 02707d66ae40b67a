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

// nearid: command-line front end for the identifiability toolkit.
//
// Exit status: 0 success, 2 invalid configuration or arguments, 1 stage failure.

#include "nearid/pipeline.hpp"
#include "nearid/whitening.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

namespace {

using namespace nearid;
using nlohmann::json;

struct Common {
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string format = "csv";
};

void add_common(CLI::App* app, Common& c, bool with_out = true) {
  if (with_out) app->add_option("--out", c.out, "Output directory");
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  app->add_option("--jobs", c.jobs, "Worker threads (default: $IDBENCH_JOBS or 1)")->check(CLI::PositiveNumber);
  app->add_option("--format", c.format, "Printed output format")->check(CLI::IsMember({"csv", "json", "markdown"}));
}

void print(const std::vector<std::pair<std::string, CsvTable>>& tables, const Common& c) {
  std::cout << render_tables(tables, report_format_from_string(c.format));
}

Eigen::MatrixXd read_matrix_csv(const std::string& path, const std::string& prefix = "") {
  const auto t = parse_csv(read_file(path));
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (prefix.empty() || t.header[i].rfind(prefix, 0) == 0) cols.push_back(i);
  if (cols.empty()) throw PreconditionError(path + ": no columns with prefix '" + prefix + "'");
  Eigen::MatrixXd m(static_cast<Index>(t.rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t k = 0; k < cols.size(); ++k) m(Index(r), Index(k)) = std::stod(t.rows[r][cols[k]]);
  return m;
}

/// Observations of a dataset CSV (x_ columns), or every column of a plain matrix.
Eigen::MatrixXd read_observations(const std::string& path) {
  const auto t = parse_csv(read_file(path));
  const bool dataset = std::any_of(t.header.begin(), t.header.end(), [](const auto& h) { return h.rfind("x_", 0) == 0; });
  return read_matrix_csv(path, dataset ? "x_" : "");
}

std::vector<std::string> column_names(const std::string& stem, Index n) {
  std::vector<std::string> h;
  for (Index k = 0; k < n; ++k) h.push_back(stem + std::to_string(k));
  return h;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"nearid: near-identifiability measurements for learned representations"};
  app.require_subcommand(1);
  Common common;
  if (const char* env = std::getenv("IDBENCH_JOBS")) {
    try {
      common.jobs = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      std::cerr << "error: IDBENCH_JOBS must be an integer\n";
      return 2;
    }
  }

  // gen
  auto* gen = app.add_subcommand("gen", "Sample independent sources and mix them");
  add_common(gen, common);
  Index gen_dim = 2, gen_observed = 0, gen_samples = 1000;
  std::string gen_dist = "uniform", gen_mixing = "bi-lipschitz-nonlinear";
  double gen_delta = 0.1;
  gen->add_option("--dim", gen_dim, "Latent dimension")->check(CLI::PositiveNumber);
  gen->add_option("--observed-dim", gen_observed, "Observed dimension (default: latent dimension)");
  gen->add_option("--samples", gen_samples, "Rows")->check(CLI::PositiveNumber);
  gen->add_option("--distribution", gen_dist, "uniform | laplace | gaussian");
  gen->add_option("--mixing", gen_mixing, "identity | rotation | linear | bi-lipschitz-nonlinear");
  gen->add_option("--delta", gen_delta, "Bi-Lipschitz slack");

  // train-ae
  auto* train = app.add_subcommand("train-ae", "Train an orthogonal LeakyReLU autoencoder");
  add_common(train, common);
  std::string train_data;
  Index train_latent = 2;
  int train_hidden = 3;
  TrainConfig tc;
  train->add_option("--data", train_data, "Dataset or matrix CSV")->required();
  train->add_option("--latent-dim", train_latent, "Latent dimension");
  train->add_option("--hidden", train_hidden, "Hidden maps per half");
  train->add_option("--leak", tc.leak, "LeakyReLU leak in [0, 1]");
  train->add_option("--lr", tc.learning_rate, "Adam learning rate");
  train->add_option("--epochs", tc.max_epochs, "Maximum epochs");
  train->add_option("--patience", tc.patience, "Early-stopping patience");
  train->add_option("--batch-size", tc.batch_size, "Minibatch size");

  // align
  auto* align = app.add_subcommand("align", "Compare two representations under each transform class");
  add_common(align, common);
  std::string align_source, align_target;
  align->add_option("--source", align_source, "Source representation CSV")->required();
  align->add_option("--target", align_target, "Target representation CSV")->required();

  // ica
  auto* ica = app.add_subcommand("ica", "Whiten and unmix a representation");
  add_common(ica, common);
  std::string ica_data, ica_contrast = "logcosh";
  int ica_restarts = 5;
  ica->add_option("--data", ica_data, "Dataset or matrix CSV")->required();
  ica->add_option("--contrast", ica_contrast, "logcosh | cubic");
  ica->add_option("--restarts", ica_restarts, "Random restarts");

  // lipschitz
  auto* lip = app.add_subcommand("lipschitz", "Probe the decoder's local bi-Lipschitz constant");
  add_common(lip, common);
  std::string lip_model, lip_data, lip_agg = "mean";
  int lip_probes = 10;
  lip->add_option("--model", lip_model, "Autoencoder checkpoint JSON")->required();
  lip->add_option("--data", lip_data, "Dataset or matrix CSV (encoded to obtain latents)")->required();
  lip->add_option("--probes", lip_probes, "Probe directions per latent");
  lip->add_option("--aggregation", lip_agg, "mean | max");

  // downstream
  auto* down = app.add_subcommand("downstream", "Batch-held-out classification metrics on an embedding table");
  add_common(down, common);
  std::string down_table;
  DownstreamOptions dopts;
  down->add_option("--table", down_table, "Embedding CSV with label and batch columns")->required();
  down->add_option("--folds", dopts.plan.folds, "Cross-validation folds");

  // constants
  auto* consts = app.add_subcommand("constants", "Isometric-approximation constants c_D");
  add_common(consts, common, false);
  std::vector<int> const_dims{3};
  std::string const_reading = "both";
  int const_points = 200;
  consts->add_option("--dim", const_dims, "Latent dimensions");
  consts->add_option("--reading", const_reading, "literal | alternate | both");
  consts->add_option("--grid-points", const_points, "Log-spaced lambda grid size");

  // run
  auto* runc = app.add_subcommand("run", "Run a configured pipeline");
  add_common(runc, common);
  std::string config_path;
  runc->add_option("--config", config_path, "Experiment config JSON")->required();

  // report
  auto* rep = app.add_subcommand("report", "Render the tables of a completed run");
  add_common(rep, common, false);
  std::string manifest_path;
  rep->add_option("--manifest", manifest_path, "manifest.json of a completed run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::uint64_t seed = common.seed.value_or(0);
  const fs::path out = common.out;
  try {
    if (*gen) {
      SourceDistribution dist;
      MixingKind kind = MixingKind::Linear;
      const bool identity = gen_mixing == "identity";
      try {
        dist = distribution_from_string(gen_dist);
        if (!identity) kind = mixing_kind_from_string(gen_mixing);
      } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
      }
      auto data = sample_sources(SourceSpec::iid(gen_dim, dist, seed), gen_samples);
      const Index observed = gen_observed > 0 ? gen_observed : gen_dim;
      if (!identity) {
        MixingSpec spec;
        if (kind == MixingKind::Rotation) spec = MixingSpec::random_rotation(gen_dim, derive_seed(seed, {1}));
        else if (kind == MixingKind::BiLipschitz) spec = MixingSpec::bilipschitz(gen_dim, observed, gen_delta, derive_seed(seed, {1}));
        else {
          std::mt19937_64 rng(derive_seed(seed, {1}));
          std::normal_distribution<double> normal(0, 1);
          Eigen::MatrixXd a(observed, gen_dim);
          for (Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
          spec = MixingSpec::linear(a);
        }
        data = mix(data, spec);
      }
      write_file_atomic(out / "dataset.csv", dataset_csv(data));
      write_file_atomic(out / "dataset.json", dataset_sidecar(data).dump(2) + "\n");
      std::cerr << "wrote " << (out / "dataset.csv").string() << "\n";
    } else if (*train) {
      const auto x = read_observations(train_data);
      tc.seed = seed;
      try {
        tc.validate();
      } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
      }
      const auto model = train_autoencoder(x, AutoencoderArch::mirrored(x.cols(), train_latent, train_hidden), tc);
      write_file_atomic(out / "model.json", to_json(model).dump(2) + "\n");
      write_file_atomic(out / "curve.csv", training_curve_csv(model));
      print({{"training", parse_csv(render_csv(CsvTable{{"epochs_run", "best_epoch", "final_mse", "stopped_early"},
                                                        {{std::to_string(model.epochs_run), std::to_string(model.best_epoch),
                                                          format_double(model.final_loss), model.stopped_early ? "1" : "0"}}}))}},
            common);
    } else if (*align) {
      const auto s = read_observations(align_source);
      const auto t = read_observations(align_target);
      AlignmentTableOptions o;
      o.ica.seed = seed;
      o.diameter.seed = seed;
      const auto row = alignment_table(s, t, o);
      write_file_atomic(out / "alignment_table.csv", alignment_table_csv({row}));
      write_file_atomic(out / "alignment.json", to_json(row).dump(2) + "\n");
      print({{"alignment_table.csv", parse_csv(alignment_table_csv({row}))}}, common);
    } else if (*ica) {
      const auto x = read_observations(ica_data);
      IcaConfig ic;
      ic.seed = seed;
      ic.restarts = ica_restarts;
      try {
        ic.contrast = contrast_from_string(ica_contrast);
        ic.validate();
      } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
      }
      const auto w = fit_whitening(x, {});
      const Eigen::MatrixXd white = apply_whitening(w, x);
      const auto model = fit_ica(white, ic);
      const Eigen::MatrixXd y = apply_ica(model, white);
      write_file_atomic(out / "whitening.json", to_json(w).dump(2) + "\n");
      write_file_atomic(out / "ica.json", to_json(model).dump(2) + "\n");
      write_file_atomic(out / "components.csv", render_matrix_csv(column_names("s_", y.cols()), y));
      print({{"ica", CsvTable{{"dimension", "iterations", "converged", "weak_nongaussianity", "nongaussianity"},
                              {{std::to_string(model.dimension()), std::to_string(model.iterations),
                                model.converged ? "1" : "0", model.weak_nongaussianity ? "1" : "0",
                                format_double(model.nongaussianity)}}}}},
            common);
    } else if (*lip) {
      const auto model = autoencoder_from_json(json::parse(read_file(lip_model)));
      const auto z = encode(model, read_observations(lip_data));
      Aggregation agg;
      try {
        agg = aggregation_from_string(lip_agg);
      } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
      }
      const auto est = estimate_bilipschitz(model, z, lip_probes, agg, seed);
      write_file_atomic(out / "lipschitz.csv", lipschitz_csv(est));
      write_file_atomic(out / "lipschitz.json", to_json(est).dump(2) + "\n");
      print({{"lipschitz", CsvTable{{"aggregation", "L", "L_mean", "L_max", "samples"},
                                    {{to_string(agg), format_double(est.L), format_double(est.L_mean()),
                                      format_double(est.L_max()), std::to_string(est.per_sample.size())}}}}},
            common);
    } else if (*down) {
      const auto table = embedding_table_from_csv(read_file(down_table));
      dopts.jobs = common.jobs;
      try {
        dopts.plan.validate();
      } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
      }
      const auto results = evaluate_conditions(table, dopts, seed);
      write_file_atomic(out / "table2.csv", table2_csv(results));
      write_file_atomic(out / "table3.csv", table3_csv(results));
      write_file_atomic(out / "downstream.json", to_json(results).dump(2) + "\n");
      print({{"table2.csv", parse_csv(table2_csv(results))}, {"table3.csv", parse_csv(table3_csv(results))}}, common);
    } else if (*consts) {
      if (const_reading != "literal" && const_reading != "alternate" && const_reading != "both")
        throw ConfigError("--reading must be literal, alternate or both");
      VaisalaConfig vc;
      vc.dimensions = const_dims;
      vc.grid.points = const_points;
      vc.readings.clear();
      if (const_reading != "alternate") vc.readings.push_back(RecursionReading::Literal);
      if (const_reading != "literal") vc.readings.push_back(RecursionReading::Alternate);
      try {
        vc.validate();
      } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
      }
      CsvTable t{{"dimension", "reading", "c_d", "argmin_lambda", "at_grid_edge"}, {}};
      for (const auto& c : run_vaisala(vc))
        t.rows.push_back({std::to_string(c.dimension), c.reading == RecursionReading::Literal ? "literal" : "alternate",
                          format_double(c.value), format_double(c.argmin_lambda), c.at_grid_edge ? "1" : "0"});
      print({{"constants", t}}, common);
    } else if (*runc) {
      json j;
      try {
        j = json::parse(read_file(config_path));
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      auto config = ExperimentConfig::from_json(j);
      if (common.seed) config.seed = *common.seed;
      if (runc->count("--out")) config.output = common.out;
      if (runc->count("--jobs") || std::getenv("IDBENCH_JOBS")) config.jobs = common.jobs;
      config.validate();
      const auto manifest = run(config);
      std::cerr << "run complete: " << (config.output / "manifest.json").string() << "\n";
      std::cout << render_report(config.output / "manifest.json", report_format_from_string(common.format));
      (void)manifest;
    } else if (*rep) {
      const auto path = report(manifest_path, report_format_from_string(common.format));
      std::cout << read_file(path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const StageError& e) {
    std::cerr << "stage '" << e.stage() << "' failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

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

#include "nearid/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace nearid {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

namespace {

double parse_double(const std::string& s) {
  double v = 0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw PreconditionError("not a number: '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw PreconditionError("not an integer: '" + s + "'");
  return v;
}

} // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw PreconditionError("csv: missing column '" + name + "'");
}

// Plain comma-separated values: no quoting, which every emitter here honours.
CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size())
        throw PreconditionError("csv: row " + std::to_string(t.rows.size() + 1) + " has " + std::to_string(cells.size()) +
                                " cells, header has " + std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw PreconditionError("csv: empty input");
  return t;
}

std::string render_csv(const CsvTable& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  return out;
}

std::string render_matrix_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& values) {
  require_dims(static_cast<Index>(header.size()) == values.cols(), "render_matrix_csv: header width mismatch");
  CsvTable t{header, {}};
  for (Index i = 0; i < values.rows(); ++i) {
    std::vector<std::string> row;
    for (Index j = 0; j < values.cols(); ++j) row.push_back(format_double(values(i, j)));
    t.rows.push_back(std::move(row));
  }
  return render_csv(t);
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const Index r = j.at("rows").get<Index>(), c = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  require_dims(static_cast<Index>(data.size()) == r * c, "matrix_from_json: data length does not match shape");
  Eigen::MatrixXd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index k = 0; k < c; ++k) m(i, k) = data[static_cast<std::size_t>(i * c + k)];
  return m;
}

namespace {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto d = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Index>(d.size()));
}

} // namespace

std::string dataset_csv(const LabeledDataset& d) {
  require_dims(d.latents.rows() == d.observations.rows(), "dataset_csv: latent/observation row mismatch");
  std::vector<std::string> header;
  for (Index k = 0; k < d.latents.cols(); ++k) header.push_back("u_" + std::to_string(k));
  for (Index k = 0; k < d.observations.cols(); ++k) header.push_back("x_" + std::to_string(k));
  Eigen::MatrixXd all(d.latents.rows(), d.latents.cols() + d.observations.cols());
  all << d.latents, d.observations;
  return render_matrix_csv(header, all);
}

nlohmann::json dataset_sidecar(const LabeledDataset& d) {
  return {{"spec", d.spec}, {"seed", d.seed}, {"rows", d.latents.rows()}, {"latent_dim", d.latents.cols()},
          {"observed_dim", d.observations.cols()}};
}

LabeledDataset dataset_from_csv(const std::string& text, const nlohmann::json& sidecar) {
  const auto t = parse_csv(text);
  std::vector<std::size_t> u, x;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i].rfind("u_", 0) == 0) u.push_back(i);
    else if (t.header[i].rfind("x_", 0) == 0) x.push_back(i);
    else throw PreconditionError("dataset csv: unexpected column '" + t.header[i] + "'");
  }
  LabeledDataset d;
  const auto n = static_cast<Index>(t.rows.size());
  d.latents.resize(n, static_cast<Index>(u.size()));
  d.observations.resize(n, static_cast<Index>(x.size()));
  for (Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < u.size(); ++k) d.latents(i, static_cast<Index>(k)) = parse_double(row[u[k]]);
    for (std::size_t k = 0; k < x.size(); ++k) d.observations(i, static_cast<Index>(k)) = parse_double(row[x[k]]);
  }
  if (!sidecar.is_null()) {
    d.spec = sidecar.value("spec", nlohmann::json{});
    d.seed = sidecar.value("seed", std::uint64_t{0});
  }
  return d;
}

nlohmann::json to_json(const WhiteningModel<double>& m) {
  return {{"mean", vector_to_json(m.mean)},
          {"transform", matrix_to_json(m.transform)},
          {"inverse", matrix_to_json(m.inverse)},
          {"eigenvalues", vector_to_json(m.eigenvalues)},
          {"retained", m.retained},
          {"dropped", m.dropped},
          {"form", m.form == WhiteningForm::Symmetric ? "symmetric" : "pca"},
          {"normalization", "1/N"}};
}

WhiteningModel<double> whitening_from_json(const nlohmann::json& j) {
  WhiteningModel<double> m;
  m.mean = vector_from_json(j.at("mean"));
  m.transform = matrix_from_json(j.at("transform"));
  m.inverse = matrix_from_json(j.at("inverse"));
  m.eigenvalues = vector_from_json(j.at("eigenvalues"));
  m.retained = j.at("retained").get<Index>();
  m.dropped = j.at("dropped").get<std::vector<Index>>();
  m.form = j.at("form").get<std::string>() == "pca" ? WhiteningForm::Pca : WhiteningForm::Symmetric;
  if (j.value("normalization", "1/N") != "1/N") throw PreconditionError("whitening model: unsupported normalization");
  return m;
}

nlohmann::json to_json(const IcaModel<double>& m) {
  return {{"rotation", matrix_to_json(m.rotation)},
          {"contrast", to_string(m.contrast)},
          {"iterations", m.iterations},
          {"convergence_delta", m.convergence_delta},
          {"converged", m.converged},
          {"seed", m.seed},
          {"weak_nongaussianity", m.weak_nongaussianity},
          {"nongaussianity", m.nongaussianity},
          {"best_restart", m.best_restart}};
}

IcaModel<double> ica_from_json(const nlohmann::json& j) {
  IcaModel<double> m;
  m.rotation = matrix_from_json(j.at("rotation"));
  m.contrast = contrast_from_string(j.at("contrast").get<std::string>());
  m.iterations = j.value("iterations", 0);
  m.convergence_delta = j.value("convergence_delta", 0.0);
  m.converged = j.value("converged", false);
  m.seed = j.value("seed", std::uint64_t{0});
  m.weak_nongaussianity = j.value("weak_nongaussianity", false);
  m.nongaussianity = j.value("nongaussianity", 0.0);
  m.best_restart = j.value("best_restart", 0);
  return m;
}

nlohmann::json to_json(const AutoencoderModel& m) {
  auto layers = [](const std::vector<Eigen::MatrixXd>& ls) {
    auto a = nlohmann::json::array();
    for (const auto& l : ls) a.push_back(matrix_to_json(l));
    return a;
  };
  return {{"encoder", layers(m.encoder)}, {"decoder", layers(m.decoder)}, {"leak", m.leak},
          {"seed", m.seed},               {"epochs_run", m.epochs_run},   {"best_epoch", m.best_epoch},
          {"stopped_early", m.stopped_early}, {"final_loss", m.final_loss}};
}

AutoencoderModel autoencoder_from_json(const nlohmann::json& j) {
  AutoencoderModel m;
  for (const auto& l : j.at("encoder")) m.encoder.push_back(matrix_from_json(l));
  for (const auto& l : j.at("decoder")) m.decoder.push_back(matrix_from_json(l));
  require(!m.encoder.empty() && !m.decoder.empty(), "autoencoder checkpoint: missing layers");
  m.leak = j.at("leak").get<double>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.epochs_run = j.value("epochs_run", 0);
  m.best_epoch = j.value("best_epoch", 0);
  m.stopped_early = j.value("stopped_early", false);
  m.final_loss = j.value("final_loss", 0.0);
  return m;
}

std::string training_curve_csv(const AutoencoderModel& m) {
  CsvTable t{{"epoch", "train_mse"}, {}};
  for (std::size_t e = 0; e < m.history.size(); ++e) t.rows.push_back({std::to_string(e + 1), format_double(m.history[e])});
  return render_csv(t);
}

nlohmann::json to_json(const AlignmentReport& r) {
  nlohmann::json j{{"kind", to_string(r.kind)},
                   {"mean_error", r.mean_error},
                   {"diameter", r.diameter},
                   {"normalized_error", r.normalized_error}};
  j["ica_efficiency"] = r.ica_efficiency ? nlohmann::json(*r.ica_efficiency) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const AlignmentTableRow& r) {
  nlohmann::json j{{"permutation", r.permutation}, {"rigid", r.rigid}, {"linear", r.linear}, {"ica", r.ica}};
  j["efficiency"] = r.efficiency ? nlohmann::json(*r.efficiency) : nlohmann::json(nullptr);
  return j;
}

std::string alignment_table_csv(const std::vector<AlignmentTableRow>& rows) {
  CsvTable t{{"permutation", "rigid", "linear", "ica", "efficiency"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({format_double(r.permutation), format_double(r.rigid), format_double(r.linear), format_double(r.ica),
                      r.efficiency ? format_double(*r.efficiency) : ""});
  return render_csv(t);
}

std::string lipschitz_csv(const LipschitzEstimate& e) {
  CsvTable t{{"z_index", "B", "B_literal", "B_svd"}, {}};
  for (std::size_t i = 0; i < e.per_sample.size(); ++i)
    t.rows.push_back({std::to_string(i), format_double(e.per_sample[i]), format_double(e.per_sample_literal[i]),
                      format_double(e.per_sample_svd[i])});
  return render_csv(t);
}

nlohmann::json to_json(const LipschitzEstimate& e) {
  return {{"aggregation", to_string(e.aggregation)},
          {"probes", e.probes},
          {"seed", e.seed},
          {"samples", e.per_sample.size()},
          {"L", e.L},
          {"L_mean", e.L_mean()},
          {"L_max", e.L_max()}};
}

nlohmann::json to_json(const CurveFit& f) {
  return {{"a", f.a}, {"b", f.b}, {"residual", f.residual}, {"r_squared", f.r_squared}, {"samples", f.samples}};
}

nlohmann::json to_json(const VaisalaConstants& c) {
  return {{"dimension", c.dimension},
          {"value", c.value},
          {"reading", c.reading == RecursionReading::Literal ? "literal" : "alternate"},
          {"grid", {{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"points", c.grid.points}, {"tolerance", c.grid.rel_tolerance}}},
          {"argmin_lambda", c.argmin_lambda},
          {"at_grid_edge", c.at_grid_edge}};
}

EmbeddingTable embedding_table_from_csv(const std::string& text) {
  const auto t = parse_csv(text);
  const auto lc = t.column("label"), bc = t.column("batch");
  std::vector<std::size_t> feats;
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (i != lc && i != bc) feats.push_back(i);
  require(!feats.empty(), "embedding csv: no feature columns");
  EmbeddingTable e;
  const auto n = static_cast<Index>(t.rows.size());
  e.features.resize(n, static_cast<Index>(feats.size()));
  for (Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < feats.size(); ++k) e.features(i, static_cast<Index>(k)) = parse_double(row[feats[k]]);
    e.label.push_back(parse_int(row[lc]));
    e.batch.push_back(parse_int(row[bc]));
  }
  e.validate();
  return e;
}

std::string embedding_table_csv(const EmbeddingTable& t) {
  CsvTable out;
  for (Index k = 0; k < t.dimension(); ++k) out.header.push_back("f_" + std::to_string(k));
  out.header.push_back("label");
  out.header.push_back("batch");
  for (Index i = 0; i < t.rows(); ++i) {
    std::vector<std::string> row;
    for (Index k = 0; k < t.dimension(); ++k) row.push_back(format_double(t.features(i, k)));
    row.push_back(std::to_string(t.label[static_cast<std::size_t>(i)]));
    row.push_back(std::to_string(t.batch[static_cast<std::size_t>(i)]));
    out.rows.push_back(std::move(row));
  }
  return render_csv(out);
}

nlohmann::json to_json(const std::vector<ConditionResult>& results) {
  auto arr = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json c{{"condition", to_string(r.condition)}, {"auroc", r.mean_auroc}, {"sparsity", r.sparsity}};
    auto& conc = c["concentration"] = nlohmann::json::array();
    for (const auto& [k, cr] : r.concentration)
      conc.push_back({{"k", k},
                      {"value", cr.value ? nlohmann::json(*cr.value) : nlohmann::json(nullptr)},
                      {"top_auroc", cr.top_auroc},
                      {"bottom_auroc", cr.bottom_auroc},
                      {"top_features", cr.top_features}});
    arr.push_back(std::move(c));
  }
  return arr;
}

std::string table2_csv(const std::vector<ConditionResult>& results) {
  CsvTable t{{"condition", "auroc", "sparsity"}, {}};
  for (const auto& r : results) t.rows.push_back({to_string(r.condition), format_double(r.mean_auroc), format_double(r.sparsity)});
  return render_csv(t);
}

std::string table3_csv(const std::vector<ConditionResult>& results) {
  CsvTable t{{"condition", "k", "concentration"}, {}};
  for (const auto& r : results)
    for (const auto& [k, cr] : r.concentration)
      t.rows.push_back({to_string(r.condition), std::to_string(k), cr.value ? format_double(*cr.value) : ""});
  return render_csv(t);
}

} // namespace nearid

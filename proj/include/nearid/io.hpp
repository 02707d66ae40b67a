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

#ifndef NEARID_IO_HPP
#define NEARID_IO_HPP

#include "nearid/align.hpp"
#include "nearid/autoenc.hpp"
#include "nearid/downstream.hpp"
#include "nearid/ica.hpp"
#include "nearid/lipschitz.hpp"
#include "nearid/synthdata.hpp"
#include "nearid/whitening.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace nearid {

namespace fs = std::filesystem;

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const fs::path& path, const std::string& content);
std::string read_file(const fs::path& path);
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(const std::string& name) const; ///< throws when absent
};

CsvTable parse_csv(const std::string& text);
std::string render_csv(const CsvTable& table);
std::string render_matrix_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& values);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m); ///< {rows, cols, data (row-major)}
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

// Datasets: `u_0..u_{K-1},x_0..x_{M-1}` plus a JSON sidecar.
std::string dataset_csv(const LabeledDataset& d);
nlohmann::json dataset_sidecar(const LabeledDataset& d);
LabeledDataset dataset_from_csv(const std::string& text, const nlohmann::json& sidecar = {});

nlohmann::json to_json(const WhiteningModel<double>& m);
WhiteningModel<double> whitening_from_json(const nlohmann::json& j);

nlohmann::json to_json(const IcaModel<double>& m);
IcaModel<double> ica_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AutoencoderModel& m);
AutoencoderModel autoencoder_from_json(const nlohmann::json& j);
std::string training_curve_csv(const AutoencoderModel& m);

nlohmann::json to_json(const AlignmentReport& r);
nlohmann::json to_json(const AlignmentTableRow& r);
/// Header `permutation,rigid,linear,ica,efficiency`; empty efficiency when undefined.
std::string alignment_table_csv(const std::vector<AlignmentTableRow>& rows);

std::string lipschitz_csv(const LipschitzEstimate& e);
nlohmann::json to_json(const LipschitzEstimate& e);
nlohmann::json to_json(const CurveFit& f);
nlohmann::json to_json(const VaisalaConstants& c);

/// Feature columns are every column except the reserved `label` and `batch`.
EmbeddingTable embedding_table_from_csv(const std::string& text);
std::string embedding_table_csv(const EmbeddingTable& t);

nlohmann::json to_json(const std::vector<ConditionResult>& results);
std::string table2_csv(const std::vector<ConditionResult>& results); ///< condition,auroc,sparsity
std::string table3_csv(const std::vector<ConditionResult>& results); ///< condition,k,concentration

} // namespace nearid

#endif // NEARID_IO_HPP

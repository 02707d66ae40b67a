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

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <regex>
#include <set>

using namespace nearid;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("nearid_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args, const fs::path& stdout_file = "/dev/null") {
  const std::string cmd = std::string(NEARID_CLI) + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json small_warmup(const fs::path& out) {
  return {{"pipeline", "warmup-sweep"},
          {"seed", 3},
          {"output", out.string()},
          {"warmup",
           {{"samples", 200},
            {"leaks", {0.5, 0.9, 1.0}},
            {"seeds", 2},
            {"probe_samples", 50},
            {"train", {{"max_epochs", 5}, {"learning_rate", 1e-3}}}}}};
}

std::set<std::string> numbers_in(const std::string& text) {
  std::set<std::string> out;
  const std::regex num(R"(-?\d+(\.\d+)?(e-?\d+)?)");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), num); it != std::sregex_iterator(); ++it)
    out.insert(it->str());
  return out;
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing is strict") {
  CHECK_NOTHROW(ExperimentConfig::from_json({{"pipeline", "vaisala"}}));
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"pipeline", "nope"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"pipeline", "vaisala"}, {"sede", 3}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"pipeline", "vaisala"}, {"seed", "three"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"pipeline", "vaisala"}, {"warmup", {{"leaks", {0.5, 2.0}}}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"pipeline", "vaisala"}, {"downstream", {{"conditions", {"raw"}}}}}),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"pipeline", "vaisala"}, {"ica_recovery", {{"mixing", "swirl"}}}}),
                  ConfigError);
}

TEST_CASE("canonical form and hash") {
  const auto a = ExperimentConfig::from_json({{"pipeline", "vaisala"}, {"seed", 4}, {"output", "x"}});
  const auto b = ExperimentConfig::from_json(a.to_json());
  CHECK(b.to_json() == a.to_json());
  CHECK(b.hash() == a.hash());
  auto c = a;
  c.output = "elsewhere";
  CHECK(c.hash() == a.hash());
  c.seed = 5;
  CHECK(c.hash() != a.hash());
}

TEST_CASE("vaisala pipeline and reports") {
  const auto dir = scratch("vaisala");
  auto config = ExperimentConfig::from_json({{"pipeline", "vaisala"}, {"output", dir.string()}, {"vaisala", {{"dimensions", {3}}}}});
  const auto manifest = run(config);
  CHECK(manifest.complete);
  const auto t = parse_csv(read_file(dir / "constants.csv"));
  REQUIRE(t.rows.size() == 2);
  CHECK(std::stod(t.rows[0][t.column("c_d")]) == vaisala_constant(3).value);

  const auto csv = render_report(dir / "manifest.json", ReportFormat::Csv);
  const auto md = render_report(dir / "manifest.json", ReportFormat::Markdown);
  CHECK(render_report(dir / "manifest.json", ReportFormat::Csv) == csv);
  CHECK(numbers_in(csv) == numbers_in(md));
  const auto j = json::parse(render_report(dir / "manifest.json", ReportFormat::Json));
  CHECK(j["tables"]["constants.csv"].size() == 2);

  const auto path = report(dir / "manifest.json", ReportFormat::Markdown);
  CHECK(path.filename() == "report.md");
  CHECK(read_file(path) == md);

  // Tampered artifacts and incomplete manifests are refused.
  write_file_atomic(dir / "constants.csv", read_file(dir / "constants.csv") + "\n");
  CHECK_THROWS_AS(render_report(dir / "manifest.json", ReportFormat::Csv), PreconditionError);
  auto mj = json::parse(read_file(dir / "manifest.json"));
  mj["complete"] = false;
  write_file_atomic(dir / "manifest.json", mj.dump());
  CHECK_THROWS_AS(render_report(dir / "manifest.json", ReportFormat::Csv), PreconditionError);
  fs::remove_all(dir);
}

TEST_CASE("runs are reproducible and stay inside the output directory") {
  const auto root = scratch("repro");
  auto cfg = [&](const std::string& sub) {
    return ExperimentConfig::from_json({{"pipeline", "ica-recovery"},
                                        {"seed", 2},
                                        {"output", (root / sub).string()},
                                        {"ica_recovery", {{"dimensions", {2, 3}}, {"samples", 2000}, {"seeds", 2}}}});
  };
  const auto a = run(cfg("a"));
  auto cb = cfg("b");
  cb.jobs = 2;
  const auto b = run(cb);
  REQUIRE(a.stages.size() == b.stages.size());
  for (std::size_t s = 0; s < a.stages.size(); ++s) {
    auto oa = a.stages[s].outputs, ob = b.stages[s].outputs;
    oa.erase("config.json"); // records the output directory itself
    ob.erase("config.json");
    CHECK(oa == ob);
  }
  CHECK(a.config_hash == b.config_hash);
  std::set<std::string> top;
  for (const auto& e : fs::directory_iterator(root)) top.insert(e.path().filename().string());
  CHECK(top == std::set<std::string>{"a", "b"});
  CHECK(render_report(root / "a" / "manifest.json", ReportFormat::Csv) ==
        render_report(root / "b" / "manifest.json", ReportFormat::Csv));
  fs::remove_all(root);
}

TEST_CASE("identity mixing gives near-zero recovery error") {
  IcaRecoveryConfig c;
  c.dimensions = {2, 4};
  c.samples = 5000;
  c.seeds = 2;
  c.mixing = "identity";
  for (const auto& r : run_ica_recovery(c, 1, 1)) {
    CHECK(r.normalized_error < 0.01);
    CHECK(r.mean_abs_corr > 0.99);
  }
}

TEST_CASE("warmup smoke run") {
  const auto dir = scratch("warmup");
  const auto m = run(ExperimentConfig::from_json(small_warmup(dir)));
  CHECK(m.complete);
  const auto pairs = parse_csv(read_file(dir / "warmup_pairs.csv"));
  CHECK(pairs.rows.size() == 6);
  const auto fit = json::parse(read_file(dir / "curve_fit.json"));
  CHECK(fit.contains("fit"));
  CHECK(fit["c_d"].get<double>() == vaisala_constant(2).value);
  CHECK(fs::exists(dir / "curves"));
  fs::remove_all(dir);
}

TEST_CASE("alignment table report columns") {
  const auto dir = scratch("align");
  run(ExperimentConfig::from_json({{"pipeline", "alignment-table"}, {"output", dir.string()}, {"alignment", {{"samples", 1000}}}}));
  const auto t = parse_csv(read_file(dir / "alignment_table.csv"));
  CHECK(t.header == std::vector<std::string>{"permutation", "rigid", "linear", "ica", "efficiency"});
  const auto row = run_alignment(ExperimentConfig::from_json({{"pipeline", "alignment-table"}, {"alignment", {{"samples", 1000}}}}).alignment, 0);
  CHECK(row[0].linear <= row[0].rigid + 1e-12);
  fs::remove_all(dir);
}

TEST_CASE("a failing stage leaves an incomplete manifest") {
  const auto dir = scratch("fail");
  // A finite-difference step wider than the distance to the range boundary.
  auto config = ExperimentConfig::from_json({{"pipeline", "square-manifold"},
                                             {"output", dir.string()},
                                             {"square", {{"positions", {0.45}}, {"step", 0.1}}}});
  try {
    run(config);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "metric");
  }
  const auto m = RunManifest::from_json(json::parse(read_file(dir / "manifest.json")));
  CHECK_FALSE(m.complete);
  CHECK(m.failed_stage == "metric");
  CHECK_THROWS_AS(render_report(dir / "manifest.json", ReportFormat::Csv), PreconditionError);
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes") {
  const auto dir = scratch("cli");
  CHECK(cli("constants --dim 1") == 0);
  CHECK(cli("constants --format yaml") == 2);
  CHECK(cli("frobnicate") == 2);

  write_file_atomic(dir / "bad.json", R"({"pipeline": "vaisala", "bogus": 1})");
  CHECK(cli("run --config " + (dir / "bad.json").string() + " --out " + (dir / "bad_out").string()) == 2);
  CHECK_FALSE(fs::exists(dir / "bad_out")); // fail-fast: nothing written
  write_file_atomic(dir / "broken.json", "{not json");
  CHECK(cli("run --config " + (dir / "broken.json").string()) == 2);

  write_file_atomic(dir / "fail.json",
                    R"({"pipeline": "square-manifold", "square": {"positions": [0.45], "step": 0.1}})");
  CHECK(cli("run --config " + (dir / "fail.json").string() + " --out " + (dir / "fail_out").string()) == 1);
  CHECK(cli("report --manifest " + (dir / "fail_out" / "manifest.json").string()) == 1);

  write_file_atomic(dir / "ok.json", R"({"pipeline": "vaisala", "vaisala": {"dimensions": [2]}})");
  CHECK(cli("run --config " + (dir / "ok.json").string() + " --out " + (dir / "ok_out").string() + " --seed 9") == 0);
  const auto m = json::parse(read_file(dir / "ok_out" / "manifest.json"));
  CHECK(m["seed"] == 9);
  CHECK(cli("report --format markdown --manifest " + (dir / "ok_out" / "manifest.json").string(), dir / "r.md") == 0);
  CHECK(read_file(dir / "r.md") == read_file(dir / "ok_out" / "report.md"));

  CHECK(cli("gen --dim 2 --samples 100 --mixing rotation --seed 1 --out " + (dir / "gen").string()) == 0);
  CHECK(cli("ica --data " + (dir / "gen" / "dataset.csv").string() + " --out " + (dir / "ica").string()) == 0);
  CHECK(fs::exists(dir / "ica" / "ica.json"));
  fs::remove_all(dir);
}

} // TEST_SUITE

// SPDX-License-Identifier: MIT

#include <gtest/gtest.h>

#include "hdbvp/hdbvp.hpp"

#include <filesystem>
#include <fstream>

using namespace hdbvp;
namespace fs = std::filesystem;

namespace {

json base_config() {
  return json::parse(R"({
    "grid": {"n":1, "m":1, "N":8, "L":6.283185307179586, "t_min":0.03125, "t_max":32.0, "K":33, "c0":2.0, "c1":1.0},
    "coefficients": {"generator":"identity"},
    "problem": {"kind":"dirichlet",
      "datum": {"type":"modes", "modes":[{"k":[1],"alpha":0,"re":1.0,"im":0.0},{"k":[2],"alpha":0,"re":0.3,"im":0.1}]}},
    "tolerances": {"picard":1e-10, "sigma_min":1e-6, "sa_guard":0.9},
    "audits": [],
    "expect_divergence": false
  })");
}

std::string fresh_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("hdbvp_scn_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

json strip_timestamp(json m) {
  m.erase("timestamp");
  return m;
}

}  // namespace

TEST(Scenario, LaplaceDirichletBundledFixture) {
  json cfg = base_config();
  cfg["audits"] = json::array({"apriori", "oracle", "weak_residual"});
  const std::string out = fresh_dir("laplace");
  RunResult r = run_scenario(cfg, out);
  EXPECT_EQ(r.status, scenario_ok) << r.manifest.dump(2);
  EXPECT_EQ(r.manifest.at("status"), "ok");
  // Poisson-oracle agreement row present and tiny
  ASSERT_TRUE(r.manifest.at("results").contains("poisson_oracle_gap"));
  EXPECT_LT(r.manifest.at("results").at("poisson_oracle_gap").at("value").get<double>(), 1e-6);
  // artifacts on disk
  EXPECT_TRUE(fs::exists(out + "/manifest.json"));
  EXPECT_TRUE(fs::exists(out + "/report.csv"));
  EXPECT_TRUE(fs::exists(out + "/f.bin"));
  EXPECT_TRUE(fs::exists(out + "/g.bin"));
  EXPECT_TRUE(fs::exists(out + "/u.csv"));
  // provenance attached to every result row
  for (const auto& [k, v] : r.manifest.at("results").items()) {
    EXPECT_TRUE(v.contains("op")) << k;
  }
}

TEST(Scenario, MalformedConfigSchemaExit) {
  json cfg = base_config();
  cfg["problem"].erase("kind");
  RunResult r = run_scenario(cfg, fresh_dir("schema1"));
  EXPECT_EQ(r.status, scenario_schema_error);
  EXPECT_NE(r.manifest.at("error").get<std::string>().find("/problem/kind"), std::string::npos);
  json cfg2 = base_config();
  cfg2["coefficients"]["generator"] = "hermitean";  // randomized without seed
  RunResult r2 = run_scenario(cfg2, fresh_dir("schema2"));
  EXPECT_EQ(r2.status, scenario_schema_error);
  EXPECT_NE(r2.manifest.at("error").get<std::string>().find("/coefficients/seed"),
            std::string::npos);
}

TEST(Scenario, ExpectedDivergenceRecordsConvergedFalse) {
  std::ifstream is("scenarios/adversarial-slab.json");
  ASSERT_TRUE(bool(is)) << "run tests from the repository root";
  json cfg = json::parse(is);
  RunResult r = run_scenario(cfg, fresh_dir("adv"));
  EXPECT_EQ(r.status, scenario_ok);
  EXPECT_EQ(r.manifest.at("status"), "diverged");
  EXPECT_EQ(r.manifest.at("results").at("converged").at("value").get<double>(), 0.0);
  // the same scenario not flagged -> numerical error status
  cfg["expect_divergence"] = false;
  RunResult r2 = run_scenario(cfg, fresh_dir("adv2"));
  EXPECT_EQ(r2.status, scenario_numerical_error);
}

TEST(Scenario, DeterministicManifests) {
  json cfg = base_config();
  cfg["coefficients"] = json{{"generator", "hermitean"},
                             {"seed", 21},
                             {"amplitude", 0.3},
                             {"perturbation", json{{"profile", "slab"},
                                                   {"amplitude", 0.08},
                                                   {"t_lo", 1.0},
                                                   {"t_hi", 2.0},
                                                   {"seed", 5}}}};
  const std::string o1 = fresh_dir("det1"), o2 = fresh_dir("det2");
  RunResult a = run_scenario(cfg, o1);
  RunResult b = run_scenario(cfg, o2);
  ASSERT_EQ(a.status, scenario_ok);
  EXPECT_EQ(strip_timestamp(a.manifest).dump(), strip_timestamp(b.manifest).dump());
  // byte-identical artifacts too
  std::ifstream f1(o1 + "/f.bin", std::ios::binary), f2(o2 + "/f.bin", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
}

TEST(Scenario, SweepRampMonotoneContraction) {
  json cfg = base_config();
  cfg["problem"]["kind"] = "neumann";
  cfg["coefficients"] = json{{"generator", "hermitean"},
                             {"seed", 31},
                             {"amplitude", 0.3},
                             {"perturbation", json{{"profile", "slab"},
                                                   {"amplitude", 0.0},
                                                   {"t_lo", 1.0},
                                                   {"t_hi", 2.0},
                                                   {"seed", 6}}}};
  const std::string out = fresh_dir("sweep");
  auto rows = sweep(cfg, "/coefficients/perturbation/amplitude", {0.02, 0.08, 0.2}, out, 2);
  ASSERT_EQ(rows.size(), 3u);
  double last = 0.0;
  for (const auto& r : rows) {
    ASSERT_EQ(r.status, scenario_ok) << r.manifest.dump(2);
    const double rate = r.manifest.at("results").at("sa_norm_x").at("value").get<double>();
    EXPECT_GT(rate, last);
    last = rate;
  }
  EXPECT_TRUE(fs::exists(out + "/sweep.csv"));
  // empty value list: empty table, ok
  auto none = sweep(cfg, "/coefficients/perturbation/amplitude", {}, fresh_dir("sweep0"), 1);
  EXPECT_TRUE(none.empty());
}

TEST(Scenario, GridRefinementSweepWithAuditColumns) {
  json cfg = base_config();
  cfg["audits"] = json::array({"apriori"});
  const std::string out = fresh_dir("nsweep");
  auto rows = sweep(cfg, "/grid/N", {8.0, 16.0}, out, 1);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_EQ(r.status, scenario_ok) << r.manifest.dump(2);
  std::ifstream csv(out + "/sweep.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_NE(header.find("audit_"), std::string::npos);
}

TEST(Scenario, ExportRoundTripBitwise) {
  json cfg = base_config();
  const std::string out = fresh_dir("exp");
  RunResult r = run_scenario(cfg, out);
  ASSERT_EQ(r.status, scenario_ok);
  export_field(out + "/f.bin", out + "/f.csv", "csv");
  export_field(out + "/f.csv", out + "/f2.bin", "bin");
  FieldDump a = load_field(out + "/f.bin"), b = load_field(out + "/f2.bin");
  ASSERT_EQ(a.K, b.K);
  for (int j = 0; j < a.K; ++j) EXPECT_EQ(a.field.slice[j], b.field.slice[j]);
  // slice extraction
  export_field(out + "/f.bin", out + "/f_slice.csv", "csv", 3);
  std::ifstream sl(out + "/f_slice.csv");
  std::string line;
  std::getline(sl, line);  // header comment
  std::getline(sl, line);  // columns
  int rows = 0;
  while (std::getline(sl, line)) ++rows;
  Grid g = grid_from_json(cfg.at("grid"));
  EXPECT_EQ(rows, g.npts() * g.comps());
  EXPECT_THROW(export_field(out + "/f.bin", out + "/x", "tsv"), std::runtime_error);
  EXPECT_THROW(export_field(out + "/missing.bin", out + "/x", "csv"), std::runtime_error);
}

TEST(Scenario, DecompositionCacheHitAndCorruptMiss) {
  Grid g = make_grid(1, 1, 8, 2 * M_PI, 0.1, 4.0, 9);
  CoefficientField B0 = hermitean_random(g, 99);
  const std::string dir = fresh_dir("cache");
  SpectralDecomp d1 = spectral_decompose_cached(B0, g, OperatorKind::DB0, dir);
  // exactly one cache file now exists; loading gives identical operators
  int files = 0;
  std::string path;
  for (const auto& e : fs::directory_iterator(dir)) {
    ++files;
    path = e.path().string();
  }
  ASSERT_EQ(files, 1);
  SpectralDecomp d2 = spectral_decompose_cached(B0, g, OperatorKind::DB0, dir);
  EXPECT_EQ(d1.M, d2.M);
  EXPECT_EQ(d1.V, d2.V);
  // corrupt file: silent recompute
  std::ofstream(path, std::ios::binary) << "garbage";
  SpectralDecomp d3 = spectral_decompose_cached(B0, g, OperatorKind::DB0, dir);
  EXPECT_LT((d3.M - d1.M).norm(), 1e-14);
}

TEST(Scenario, CoefficientFileRoundTrip) {
  Grid g = make_grid(1, 1, 8, 2 * M_PI, 0.1, 4.0, 5);
  CoefficientField A = hermitean_random(g, 7);
  // write with the dump layout: components are the C*C matrix entries
  const int C = g.comps();
  Grid gh = g;
  gh.m = g.m * C;  // header carries C*C entries per point as (1+n)*m' columns
  BulkField raw;
  raw.slice.assign(1, MatrixXcd::Zero(g.npts(), C * C));
  for (long p = 0; p < g.npts(); ++p)
    for (int r = 0; r < C; ++r)
      for (int c = 0; c < C; ++c) raw.slice[0](p, r * C + c) = A.entries[0](p * C + r, c);
  gh.t_nodes.resize(1);
  gh.t_nodes[0] = 1.0;
  gh.t_weights = VectorXd::Ones(1);
  const std::string path = fresh_dir("coef") + "/A.bin";
  dump_field(path, gh, raw);
  CoefficientField B = read_coefficients(path, g);
  EXPECT_LT((B.entries[0] - A.entries[0]).cwiseAbs().maxCoeff(), 1e-14);
}

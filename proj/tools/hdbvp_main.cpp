// SPDX-License-Identifier: MIT
//
// Scenario runner CLI. Verbs: solve, sweep, audit, export.
//   hdbvp solve  --config cfg.json --out dir [--seed-override N]
//   hdbvp sweep  --config cfg.json --param /coefficients/perturbation/amplitude \
//                --values 0,0.01,0.02 --out dir [--workers W]
//   hdbvp audit  --config cfg.json --out dir
//   hdbvp export --in f.bin --out f.csv --format csv [--slice J]
// HDBVP_CACHE_DIR points the decomposition cache at a directory.

#include <CLI11.hpp>

#include "hdbvp/hdbvp.hpp"

#include <chrono>
#include <iostream>

namespace {

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

hdbvp::json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  return hdbvp::json::parse(is);
}

void stamp_manifest(const std::string& outdir) {
  // the timestamp lives in its own field; everything else is deterministic
  const std::string path = outdir + "/manifest.json";
  std::ifstream is(path);
  if (!is) return;
  hdbvp::json m = hdbvp::json::parse(is);
  is.close();
  m["timestamp"] = timestamp_now();
  std::ofstream(path) << m.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"half-space divergence-form boundary value problem toolkit"};
  app.require_subcommand(1);

  std::string config_path, outdir, param_path, values_str, in_path, out_path, format = "csv";
  std::uint64_t seed_override = 0;
  int workers = 1, slice = -1;

  CLI::App* solve = app.add_subcommand("solve", "run one scenario");
  solve->add_option("--config", config_path)->required();
  solve->add_option("--out", outdir)->required();
  solve->add_option("--seed-override", seed_override);

  CLI::App* sweep = app.add_subcommand("sweep", "run a parameter sweep");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--param", param_path, "JSON pointer of a scalar config entry")->required();
  sweep->add_option("--values", values_str, "comma-separated values")->required();
  sweep->add_option("--out", outdir)->required();
  sweep->add_option("--workers", workers);
  sweep->add_option("--seed-override", seed_override);

  CLI::App* audit = app.add_subcommand("audit", "run a scenario with mandatory audits");
  audit->add_option("--config", config_path)->required();
  audit->add_option("--out", outdir)->required();
  audit->add_option("--seed-override", seed_override);

  CLI::App* exp = app.add_subcommand("export", "convert field dumps");
  exp->add_option("--in", in_path)->required();
  exp->add_option("--out", out_path)->required();
  exp->add_option("--format", format, "csv or bin");
  exp->add_option("--slice", slice, "extract a single transversal slice");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed() || audit->parsed()) {
      hdbvp::json cfg = load_config(config_path);
      if (audit->parsed() && !cfg.contains("audits"))
        cfg["audits"] = hdbvp::json::array({"apriori", "weak_residual"});
      hdbvp::RunResult r = hdbvp::run_scenario(cfg, outdir, seed_override);
      stamp_manifest(outdir);
      std::cout << "status: " << r.manifest.value("status", "?") << "\n";
      if (r.manifest.contains("audits"))
        for (const auto& a : r.manifest.at("audits"))
          std::cout << (a.value("pass", false) ? "PASS " : (a.value("degenerate", false) ? "SKIP " : "FAIL "))
                    << a.value("name", "?") << " constant=" << a.value("constant", 0.0) << "\n";
      return r.status;
    }
    if (sweep->parsed()) {
      hdbvp::json cfg = load_config(config_path);
      std::vector<double> values;
      std::stringstream ss(values_str);
      std::string item;
      while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
      auto rows = hdbvp::sweep(cfg, param_path, values, outdir, workers, seed_override);
      int status = 0;
      for (size_t i = 0; i < rows.size(); ++i) {
        stamp_manifest(outdir + "/run_" + (i < 10 ? "00" : i < 100 ? "0" : "") + std::to_string(i));
        std::cout << "value " << rows[i].value << " -> status " << rows[i].status << "\n";
        status = std::max(status, rows[i].status);
      }
      return status;
    }
    if (exp->parsed()) {
      hdbvp::export_field(in_path, out_path, format, slice);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

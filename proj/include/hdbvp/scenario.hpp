// SPDX-License-Identifier: MIT
//
// Scenario configuration, batch runner, parameter sweeps and result export.
// Configs are JSON; every run writes a manifest (all measured constants with
// per-row provenance), CSV tables, and binary field dumps into its own
// output directory. Runs are deterministic given the config and seed; the
// timestamp lives in a separate manifest field.

#pragma once

#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "hdbvp/io.hpp"
#include "hdbvp/verify.hpp"

namespace hdbvp {

using json = nlohmann::ordered_json;

// exit statuses of run_scenario
enum ScenarioStatus : int {
  scenario_ok = 0,
  scenario_schema_error = 2,
  scenario_numerical_error = 3,
  scenario_audit_failure = 4,
};

struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& pointer, const std::string& what)
      : std::runtime_error(pointer + ": " + what) {}
};

namespace detail {

inline const json& need(const json& j, const char* key, const std::string& ptr) {
  if (!j.contains(key)) throw SchemaError(ptr + "/" + key, "missing");
  return j.at(key);
}

template <class T>
inline T field(const json& j, const char* key, const std::string& ptr) {
  try {
    return need(j, key, ptr).get<T>();
  } catch (const SchemaError&) {
    throw;
  } catch (...) {
    throw SchemaError(ptr + "/" + key, "wrong type");
  }
}

template <class T>
inline T field_or(const json& j, const char* key, T dflt) {
  return j.contains(key) ? j.at(key).get<T>() : dflt;
}

}  // namespace detail

struct ScenarioConfig {
  json raw;
  Grid grid;
  std::uint64_t seed = 1;
  BvpKind kind = BvpKind::Dirichlet;
  bool expect_divergence = false;
  double picard_tol = 1e-10;
  double sigma_min = 1e-6;
  double sa_guard = 0.9;
  std::vector<std::string> audits;
};

inline Grid grid_from_json(const json& jg) {
  using detail::field;
  using detail::field_or;
  return make_grid(field<int>(jg, "n", "/grid"), field<int>(jg, "m", "/grid"),
                   field<int>(jg, "N", "/grid"), field<double>(jg, "L", "/grid"),
                   field<double>(jg, "t_min", "/grid"), field<double>(jg, "t_max", "/grid"),
                   field<int>(jg, "K", "/grid"), field_or(jg, "c0", 2.0),
                   field_or(jg, "c1", 1.0));
}

inline CoefficientField coefficients_from_json(const json& jc, const Grid& g,
                                               std::uint64_t seed_override) {
  using detail::field_or;
  const std::string gen = detail::field<std::string>(jc, "generator", "/coefficients");
  const std::uint64_t seed = seed_override ? seed_override : field_or<std::uint64_t>(jc, "seed", 1);
  const double amp = field_or(jc, "amplitude", 0.5);
  CoefficientField A0;
  if (gen == "identity") {
    A0 = identity_coefficients(g);
  } else if (gen == "hermitean") {
    A0 = hermitean_random(g, seed, amp);
  } else if (gen == "block") {
    A0 = block_random(g, seed, amp);
  } else if (gen == "random_accretive") {
    A0 = random_accretive(g, seed);
  } else if (gen == "pullback_identity") {
    const double ga = field_or(jc, "graph_amplitude", 0.3);
    VectorXd phi(g.npts());
    for (long p = 0; p < g.npts(); ++p) phi[p] = ga * std::sin(2 * M_PI * g.coord(p, 0) / g.L);
    A0 = pullback_coefficients(g, identity_coefficients(g), make_graph_map(g, phi));
  } else if (gen == "file") {
    A0 = read_coefficients(detail::field<std::string>(jc, "path", "/coefficients"), g);
  } else {
    throw SchemaError("/coefficients/generator", "unknown generator '" + gen + "'");
  }
  if (!jc.contains("perturbation")) return A0;
  const json& jp = jc.at("perturbation");
  const std::string prof = detail::field_or<std::string>(jp, "profile", "none");
  PerturbationProfile pp = PerturbationProfile::none;
  if (prof == "slab") pp = PerturbationProfile::slab;
  else if (prof == "ramp") pp = PerturbationProfile::ramp;
  else if (prof == "constant") pp = PerturbationProfile::constant;
  else if (prof != "none") throw SchemaError("/coefficients/perturbation/profile", "unknown");
  if (pp == PerturbationProfile::none) return A0;
  return perturb_coefficients(g, A0, pp, detail::field<double>(jp, "amplitude", "/coefficients/perturbation"),
                              detail::field_or(jp, "t_lo", 1.0), detail::field_or(jp, "t_hi", 2.0),
                              detail::field_or<std::uint64_t>(jp, "seed", seed + 1),
                              detail::field_or(jp, "skew", false));
}

inline MatrixXcd datum_from_json(const json& jd, const Grid& g, BvpKind kind,
                                 std::uint64_t seed_override) {
  const int cols = kind == BvpKind::Regularity ? g.n * g.m : g.m;
  const std::string type = detail::field<std::string>(jd, "type", "/problem/datum");
  MatrixXcd modes = MatrixXcd::Zero(g.npts(), cols);
  if (type == "modes") {
    for (const auto& e : detail::need(jd, "modes", "/problem/datum")) {
      std::vector<int> k = detail::field<std::vector<int>>(e, "k", "/problem/datum/modes");
      if (static_cast<int>(k.size()) != g.n)
        throw SchemaError("/problem/datum/modes/k", "dimension mismatch");
      long p = 0, stride = 1;
      for (int a = 0; a < g.n; ++a) {
        p += ((k[a] % g.N) + g.N) % g.N * stride;
        stride *= g.N;
      }
      const int col = detail::field_or(e, "alpha", 0);
      modes(p, col) = Complex(detail::field_or(e, "re", 1.0), detail::field_or(e, "im", 0.0));
    }
  } else if (type == "random_modes") {
    std::mt19937_64 rng(seed_override ? seed_override
                                      : detail::field_or<std::uint64_t>(jd, "seed", 11));
    std::normal_distribution<double> nd;
    const int count = detail::field_or(jd, "count", 3);
    const int max_k = detail::field_or(jd, "max_k", std::max(1, g.N / 4));
    for (int q = 0; q < count; ++q) {
      long p = 0, stride = 1;
      for (int a = 0; a < g.n; ++a) {
        int k = 1 + static_cast<int>(rng() % max_k);
        p += k * stride;
        stride *= g.N;
      }
      modes(p, static_cast<int>(rng() % cols)) = Complex(nd(rng), nd(rng));
    }
  } else if (type == "gaussian") {
    const double width = detail::field_or(jd, "width", 0.15);
    MatrixXcd space = MatrixXcd::Zero(g.npts(), cols);
    for (long p = 0; p < g.npts(); ++p) {
      double r2 = 0.0;
      for (int a = 0; a < g.n; ++a) {
        double d = g.coord(p, a) - 0.5 * g.L;
        r2 += d * d;
      }
      space(p, 0) = std::exp(-r2 / (2.0 * width * width * g.L * g.L));
    }
    return space;
  } else {
    throw SchemaError("/problem/datum/type", "unknown datum type '" + type + "'");
  }
  if (kind == BvpKind::Regularity) {
    // project per mode onto the curl-free tangential directions
    for (long p = 1; p < g.npts(); ++p) {
      const double nx = g.xi_norm(p);
      for (int a = 0; a < g.m; ++a) {
        Complex dot = 0.0;
        for (int i = 1; i <= g.n; ++i)
          dot += (g.xi_component(p, i - 1) / nx) * modes(p, (i - 1) * g.m + a);
        for (int i = 1; i <= g.n; ++i)
          modes(p, (i - 1) * g.m + a) = dot * (g.xi_component(p, i - 1) / nx);
      }
    }
    modes.row(0).setZero();
  }
  fft_lattice(modes, g.n, g.N, true);
  return modes;
}

inline ScenarioConfig parse_scenario(const json& j, std::uint64_t seed_override = 0) {
  ScenarioConfig c;
  c.raw = j;
  c.grid = grid_from_json(detail::need(j, "grid", ""));
  const json& jp = detail::need(j, "problem", "");
  const std::string kind = detail::field<std::string>(jp, "kind", "/problem");
  if (kind == "neumann") c.kind = BvpKind::Neumann;
  else if (kind == "regularity") c.kind = BvpKind::Regularity;
  else if (kind == "dirichlet") c.kind = BvpKind::Dirichlet;
  else throw SchemaError("/problem/kind", "unknown kind '" + kind + "'");
  const json& jc = detail::need(j, "coefficients", "");
  if (!jc.contains("generator")) throw SchemaError("/coefficients/generator", "missing");
  if (jc.contains("seed") || seed_override) {
    c.seed = seed_override ? seed_override : jc.at("seed").get<std::uint64_t>();
  } else if (jc.at("generator").get<std::string>() != "identity" &&
             jc.at("generator").get<std::string>() != "pullback_identity") {
    throw SchemaError("/coefficients/seed", "randomized generators need a seed");
  }
  if (j.contains("tolerances")) {
    const json& jt = j.at("tolerances");
    c.picard_tol = detail::field_or(jt, "picard", 1e-10);
    c.sigma_min = detail::field_or(jt, "sigma_min", 1e-6);
    c.sa_guard = detail::field_or(jt, "sa_guard", 0.9);
  }
  c.expect_divergence = detail::field_or(j, "expect_divergence", false);
  if (j.contains("audits"))
    for (const auto& a : j.at("audits")) c.audits.push_back(a.get<std::string>());
  return c;
}

// ---------------------------------------------------------------------------
// Manifest assembly

struct RunResult {
  int status = scenario_ok;
  json manifest;
};

namespace detail {

inline void put(json& results, const std::string& name, double value, const char* op) {
  results[name] = json{{"value", value}, {"op", op}};
}

inline json audit_to_json(const AuditReport& a) {
  return json{{"name", a.name},       {"lhs", a.lhs},   {"rhs", a.rhs},
              {"constant", a.constant}, {"trend", a.trend}, {"pass", a.pass},
              {"degenerate", a.degenerate}, {"op", "verify.audit_apriori"}};
}

}  // namespace detail

inline RunResult run_scenario(const json& config, const std::string& outdir,
                              std::uint64_t seed_override = 0) {
  RunResult rr;
  rr.manifest = json{{"format", "hdbvp-manifest-1"}};
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  ScenarioConfig cfg;
  try {
    cfg = parse_scenario(config, seed_override);
  } catch (const SchemaError& e) {
    rr.status = scenario_schema_error;
    rr.manifest["status"] = "schema_error";
    rr.manifest["error"] = e.what();
    std::ofstream(outdir + "/manifest.json") << rr.manifest.dump(2) << "\n";
    return rr;
  }
  rr.manifest["config"] = config;
  rr.manifest["seed"] = cfg.seed;
  json results = json::object();
  json audits_json = json::array();
  try {
    const Grid& g = cfg.grid;
    CoefficientField A = coefficients_from_json(config.at("coefficients"), g, seed_override);
    BvpProblem prob;
    prob.kind = cfg.kind;
    prob.A = A;
    prob.datum = datum_from_json(detail::need(config.at("problem"), "datum", "/problem"), g,
                                 cfg.kind, seed_override);

    auto setup = make_solver_setup(A, g);
    detail::put(results, "kappa", A.kappa, "coefficients.accretivity");
    detail::put(results, "carleson_discrepancy", setup->trace.carleson,
                "coefficients.trace_coefficients");
    detail::put(results, "star_lower", setup->E.star_lower, "norms.star_norm_bounds");
    detail::put(results, "star_upper", setup->E.star_upper, "norms.star_norm_bounds");
    detail::put(results, "star_estimate", setup->E.star_estimate, "norms.star_norm_bounds");
    detail::put(results, "sa_norm_x", setup->sa_norm_x, "perturbation.estimate_sa_norm");
    detail::put(results, "sa_norm_y", setup->sa_norm_y, "perturbation.estimate_sa_norm");

    Solution sol;
    bool solved = true;
    std::string failure;
    try {
      sol = solve(*setup, prob);
    } catch (const std::exception& e) {
      solved = false;
      failure = e.what();
    }
    if (!solved) {
      rr.manifest["status"] = "diverged";
      rr.manifest["error"] = failure;
      detail::put(results, "converged", 0.0, "perturbation.picard_solve");
      rr.manifest["results"] = results;
      std::ofstream(outdir + "/manifest.json") << rr.manifest.dump(2) << "\n";
      rr.status = cfg.expect_divergence ? scenario_ok : scenario_numerical_error;
      return rr;
    }
    detail::put(results, "converged", sol.report.picard.converged ? 1.0 : 0.0,
                "perturbation.picard_solve");
    detail::put(results, "picard_iterations", sol.report.picard.iterations,
                "perturbation.picard_solve");
    detail::put(results, "contraction_rate", sol.report.picard.contraction_rate,
                "perturbation.picard_solve");
    detail::put(results, "bc_residual", sol.report.bc_residual, "bvp.solve");
    detail::put(results, "sigma_min_gamma", sol.report.sigma_min_gamma, "bvp.assemble_gamma");
    detail::put(results, "x_norm_g", sol.report.norms.x_norm, "norms.x_norm");
    detail::put(results, "y_norm_g", sol.report.norms.y_norm, "norms.y_norm");
    detail::put(results, "sup_l2_g", sol.report.norms.sup_l2, "norms.sup_l2");
    for (const auto& [k, v] : sol.report.extra) detail::put(results, k, v, "bvp.solve");

    // field dumps + CSV
    dump_field(outdir + "/f.bin", g, sol.f);
    dump_field(outdir + "/g.bin", g, sol.g);
    if (sol.has_potential) {
      BulkField ub{sol.u};
      // potential dump uses the same container; header records m columns via K/L
      std::ofstream ucsv(outdir + "/u.csv");
      ucsv << "t,x_index,component,re,im\n";
      for (int j = 0; j < g.K(); ++j)
        for (long p = 0; p < g.npts(); ++p)
          for (int c2 = 0; c2 < g.m; ++c2)
            ucsv << format_double(g.t_nodes[j]) << "," << p << "," << c2 << ","
                 << format_double(sol.u[j](p, c2).real()) << ","
                 << format_double(sol.u[j](p, c2).imag()) << "\n";
    }
    {
      std::ofstream csv(outdir + "/report.csv");
      csv << "section,name,value,params_hash\n";
      const double gp[9] = {double(g.n), double(g.m),         double(g.N),
                            g.L,         double(g.K()),       g.t_nodes[0],
                            g.t_nodes[g.K() - 1], g.c0,       g.c1};
      char ph[20];
      std::snprintf(ph, sizeof(ph), "%016llx",
                    static_cast<unsigned long long>(fnv1a_bytes(gp, sizeof(gp))));
      for (const auto& [k, v] : results.items())
        csv << "result," << k << "," << format_double(v.at("value").get<double>()) << "," << ph
            << "\n";
      // one row per (field, norm, value, params-hash)
      const NormReport& nr = sol.report.norms;
      for (auto& [nm, val] : std::initializer_list<std::pair<const char*, double>>{
               {"g.x_norm", nr.x_norm},
               {"g.y_norm", nr.y_norm},
               {"g.ystar_norm", nr.ystar_norm},
               {"g.sup_l2", nr.sup_l2}})
        csv << "norm," << nm << "," << format_double(val) << "," << ph << "\n";
      for (size_t i = 0; i < sol.report.picard.residual_history.size(); ++i)
        csv << "picard,update_" << i << ","
            << format_double(sol.report.picard.residual_history[i]) << "," << ph << "\n";
    }

    // audits
    bool audit_failed = false;
    for (const std::string& aname : cfg.audits) {
      if (aname == "apriori") {
        // refinement trend over two resolutions
        std::vector<std::vector<AuditReport>> runs;
        runs.push_back(audit_apriori(g, sol));
        json refined = config;
        refined["grid"]["N"] = g.N * 2;
        refined["grid"]["K"] = g.K() + g.K() / 2;
        refined.erase("audits");
        Grid g2 = grid_from_json(refined.at("grid"));
        CoefficientField A2 = coefficients_from_json(refined.at("coefficients"), g2, seed_override);
        BvpProblem prob2;
        prob2.kind = cfg.kind;
        prob2.A = A2;
        prob2.datum = datum_from_json(refined.at("problem").at("datum"), g2, cfg.kind,
                                      seed_override);
        auto setup2 = make_solver_setup(A2, g2);
        Solution sol2 = solve(*setup2, prob2);
        runs.push_back(audit_apriori(g2, sol2));
        for (const auto& a : merge_audit_trends(runs)) {
          audits_json.push_back(detail::audit_to_json(a));
          if (!a.pass && !a.degenerate) audit_failed = true;
        }
      } else if (aname == "regularity") {
        RegularityAudit ra = regularity_audit(g, sol.g, A);
        detail::put(results, "t_dt_a_star_upper", ra.t_dt_a_star, "verify.regularity_audit");
        json fj = detail::audit_to_json(ra.forward);
        fj["op"] = "verify.regularity_audit";
        fj["pass"] = std::isfinite(ra.forward.constant);
        audits_json.push_back(fj);
        if (!std::isfinite(ra.forward.constant)) audit_failed = true;
      } else if (aname == "oracle") {
        if (cfg.kind == BvpKind::Dirichlet && !sol.u.empty()) {
          auto oracle = poisson_oracle(g, prob.datum);
          const double phin = slice_norm(g, prob.datum);
          double worst = 0.0;
          for (int j = 0; j < g.K(); ++j) {
            const double on = slice_norm(g, oracle[j]);
            const double gap = slice_norm(g, MatrixXcd(sol.u[j] - oracle[j]));
            // relative per slice above the tolerance scale, absolute below it
            worst = std::max(worst, on >= 1e-6 * phin ? gap / on : gap / std::max(phin, 1e-300));
          }
          detail::put(results, "poisson_oracle_gap", worst, "verify.poisson_oracle");
          AuditReport a = make_audit("poisson_oracle_gap", worst, 1.0);
          a.pass = setup->e_zero ? worst < 1e-6 : true;  // binding only for identity runs
          audits_json.push_back(detail::audit_to_json(a));
          if (!a.pass) audit_failed = true;
        }
      } else if (aname == "weak_residual") {
        WeakResidual wrr = weak_residual(g, sol.g, A);
        detail::put(results, "weak_residual", wrr.bilinear, "verify.weak_residual");
        detail::put(results, "curl_defect", wrr.curl_defect, "verify.weak_residual");
      } else {
        throw SchemaError("/audits", "unknown audit '" + aname + "'");
      }
    }
    rr.manifest["results"] = results;
    rr.manifest["audits"] = audits_json;
    rr.manifest["status"] = audit_failed ? "audit_failure" : "ok";
    rr.status = audit_failed ? scenario_audit_failure : scenario_ok;
    // audit rows appended to the scenario CSV
    if (!audits_json.empty()) {
      std::ofstream csv(outdir + "/report.csv", std::ios::app);
      for (const auto& a : audits_json)
        csv << "audit," << a.value("name", "?") << "," << format_double(a.value("constant", 0.0))
            << "," << (a.value("pass", false) ? "pass" : a.value("degenerate", false) ? "skip" : "fail")
            << "\n";
    }
  } catch (const SchemaError& e) {
    rr.status = scenario_schema_error;
    rr.manifest["status"] = "schema_error";
    rr.manifest["error"] = e.what();
  } catch (const std::exception& e) {
    rr.status = scenario_numerical_error;
    rr.manifest["status"] = "numerical_error";
    rr.manifest["error"] = e.what();
    rr.manifest["results"] = results;
  }
  std::ofstream(outdir + "/manifest.json") << rr.manifest.dump(2) << "\n";
  return rr;
}

// ---------------------------------------------------------------------------
// Parameter sweeps: one run per value, isolated output subdirectories,
// aggregated CSV. Entries run in parallel up to `workers`.

struct SweepRow {
  double value = 0.0;
  int status = 0;
  json manifest;
};

inline json& json_at_pointer(json& j, const std::string& pointer) {
  return j.at(nlohmann::json_pointer<std::string>(pointer));
}

inline std::vector<SweepRow> sweep(const json& config, const std::string& parameter_path,
                                   const std::vector<double>& values, const std::string& outdir,
                                   int workers = 1, std::uint64_t seed_override = 0) {
  std::vector<SweepRow> rows(values.size());
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= values.size()) return;
      json cfg = config;
      json& slot = json_at_pointer(cfg, parameter_path);
      if (slot.is_number_integer())
        slot = static_cast<std::int64_t>(std::llround(values[i]));
      else
        slot = values[i];
      char sub[32];
      std::snprintf(sub, sizeof(sub), "/run_%03zu", i);
      RunResult r = run_scenario(cfg, outdir + sub, seed_override);
      rows[i] = SweepRow{values[i], r.status, std::move(r.manifest)};
    }
  };
  const int nw = std::max(1, workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < nw - 1; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  // aggregate, including one column per audit constant seen across the runs
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  std::vector<std::string> audit_cols;
  for (const auto& r : rows)
    if (r.manifest.contains("audits"))
      for (const auto& a : r.manifest.at("audits")) {
        const std::string nm = a.value("name", "");
        if (!nm.empty() && std::find(audit_cols.begin(), audit_cols.end(), nm) == audit_cols.end())
          audit_cols.push_back(nm);
      }
  std::ofstream csv(outdir + "/sweep.csv");
  csv << "value,status,converged,contraction_rate,sa_norm_x,sigma_min_gamma,bc_residual";
  for (const auto& nm : audit_cols) csv << ",audit_" << nm;
  csv << "\n";
  for (const auto& r : rows) {
    auto pick = [&](const char* k) -> std::string {
      if (r.manifest.contains("results") && r.manifest.at("results").contains(k))
        return format_double(r.manifest.at("results").at(k).at("value").get<double>());
      return "";
    };
    csv << format_double(r.value) << "," << r.status << "," << pick("converged") << ","
        << pick("contraction_rate") << "," << pick("sa_norm_x") << ","
        << pick("sigma_min_gamma") << "," << pick("bc_residual");
    for (const auto& nm : audit_cols) {
      std::string cell;
      if (r.manifest.contains("audits"))
        for (const auto& a : r.manifest.at("audits"))
          if (a.value("name", "") == nm) cell = format_double(a.value("constant", 0.0));
      csv << "," << cell;
    }
    csv << "\n";
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Export: binary dump <-> CSV (lossless in float64), optional slice
// extraction. The CSV carries the dump header as a leading comment line so
// the round trip is self-contained.

inline FieldDump import_field_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("import_field_csv: cannot open " + path);
  std::string header;
  std::getline(is, header);
  FieldDump d;
  char tag[16] = {0};
  if (std::sscanf(header.c_str(), "# %7s %d %d %d %d %lg", tag, &d.n, &d.m, &d.N, &d.K, &d.L) !=
          6 ||
      std::string(tag) != "HDBVP1")
    throw std::runtime_error("import_field_csv: bad header in " + path);
  long P = 1;
  for (int a = 0; a < d.n; ++a) P *= d.N;
  const int C = (1 + d.n) * d.m;
  d.field.slice.assign(d.K, MatrixXcd::Zero(P, C));
  std::string line;
  std::getline(is, line);  // column names
  while (std::getline(is, line)) {
    int j, c;
    long p;
    double re, im;
    if (std::sscanf(line.c_str(), "%d,%ld,%d,%lg,%lg", &j, &p, &c, &re, &im) == 5)
      d.field.slice[j](p, c) = Complex(re, im);
  }
  return d;
}

inline void export_field(const std::string& in_path, const std::string& out_path,
                         const std::string& format, int slice_index = -1) {
  const bool in_csv = in_path.size() > 4 && in_path.substr(in_path.size() - 4) == ".csv";
  FieldDump d = in_csv ? import_field_csv(in_path) : load_field(in_path);
  if (format == "bin") {
    Grid g;
    g.n = d.n;
    g.m = d.m;
    g.N = d.N;
    g.L = d.L;
    g.t_nodes = VectorXd::LinSpaced(d.K, 1.0, double(d.K));  // labels unused by the dump
    g.t_weights = VectorXd::Ones(d.K);
    dump_field(out_path, g, d.field);
    return;
  }
  if (format != "csv") throw std::runtime_error("export_field: unknown format '" + format + "'");
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("export_field: cannot open " + out_path);
  char head[128];
  std::snprintf(head, sizeof(head), "# HDBVP1 %d %d %d %d %.17g\n", d.n, d.m, d.N, d.K, d.L);
  os << head << "slice,x_index,component,re,im\n";
  for (int j = 0; j < d.K; ++j) {
    if (slice_index >= 0 && j != slice_index) continue;
    for (long p = 0; p < d.field.slice[j].rows(); ++p)
      for (int c = 0; c < d.field.slice[j].cols(); ++c)
        os << j << "," << p << "," << c << "," << format_double(d.field.slice[j](p, c).real())
           << "," << format_double(d.field.slice[j](p, c).imag()) << "\n";
  }
}

// raw coefficient reader declared in coefficients.hpp
inline CoefficientField read_coefficients(const std::string& path, const Grid& g) {
  FieldDump d = load_field(path);
  const int C = g.comps();
  if (d.n != g.n || d.m != g.m * C || d.N != g.N)
    throw std::runtime_error("read_coefficients: header mismatch (expect components = C*C)");
  CoefficientField A;
  A.t_independent = (d.K == 1);
  for (int j = 0; j < d.K; ++j) {
    MatrixXcd sl(g.npts() * C, C);
    for (long p = 0; p < g.npts(); ++p)
      for (int r = 0; r < C; ++r)
        for (int c = 0; c < C; ++c) sl(p * C + r, c) = d.field.slice[j](p, r * C + c);
    A.entries.push_back(std::move(sl));
  }
  finalize_constants(A, g);
  return A;
}

}  // namespace hdbvp

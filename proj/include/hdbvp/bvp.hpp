// SPDX-License-Identifier: MIT
//
// Front-end solvers for the three boundary value problems on the half-space:
// boundary maps assembled column-by-column over the positive spectral
// subspace, well-posedness margins, and solution reconstruction (gradient,
// conormal gradient, and potential).

#pragma once

#include <cstdlib>
#include <map>
#include <memory>
#include <string>

#include "hdbvp/perturbation.hpp"

namespace hdbvp {

enum class BvpKind { Neumann, Regularity, Dirichlet };

inline const char* bvp_kind_name(BvpKind k) {
  switch (k) {
    case BvpKind::Neumann: return "neumann";
    case BvpKind::Regularity: return "regularity";
    case BvpKind::Dirichlet: return "dirichlet";
  }
  return "?";
}

struct BvpProblem {
  BvpKind kind = BvpKind::Dirichlet;
  CoefficientField A;
  MatrixXcd datum;  // npts x m (Neumann/Dirichlet), npts x n*m curl-free (Regularity)
};

struct SolveReport {
  NormReport norms;  // of the full gradient
  PicardDiagnostics picard;
  double bc_residual = 0.0;
  double sigma_min_gamma = 0.0;
  double sa_norm_estimate = 0.0;
  double star_upper = 0.0;
  double datum_mean_dropped = 0.0;
  double trace_limit_defect = 0.0;
  double boundary_slice_match = 0.0;
  std::map<std::string, double> extra;
};

struct Solution {
  BulkField f;                 // conormal gradient
  BulkField g;                 // full gradient
  std::vector<MatrixXcd> u;    // potential slices, npts x m (Dirichlet path)
  bool has_potential = false;
  bool has_gradient_trace = false;  // false on the square-function path
  BoundaryField f0, g0;
  MatrixXcd u0;                // npts x m
  BoundaryField h_plus;        // spectral datum actually used
  SolveReport report;
};

// ---------------------------------------------------------------------------
// Shared solver state. References the caller-owned grid.

struct SolverSetup {
  const Grid* grid = nullptr;
  CoefficientField A, B;    // original and transformed coefficients
  TraceResult trace;        // A0 extraction
  CoefficientField B0;
  SpectralDecomp ddb, dbd;
  Discrepancy E;
  bool e_zero = true;
  double sa_norm_x = 0.0, sa_norm_y = 0.0;
};

// The decomposition cache directory comes from HDBVP_CACHE_DIR unless the
// caller passes one explicitly; empty disables caching.
inline std::string default_cache_dir() {
  const char* v = std::getenv("HDBVP_CACHE_DIR");
  return v ? std::string(v) : std::string();
}

inline std::shared_ptr<SolverSetup> make_solver_setup(const CoefficientField& A, const Grid& g,
                                                      const std::string& cache_dir_opt = "\x01") {
  const std::string cache_dir = cache_dir_opt == "\x01" ? default_cache_dir() : cache_dir_opt;
  auto s = std::make_shared<SolverSetup>();
  s->grid = &g;
  s->A = A;
  s->trace = trace_coefficients(A, g);
  if (!s->trace.finite)
    throw std::runtime_error("solver setup: discrepancy Carleson norm not finite");
  s->B = hat_transform(g, A);
  s->B0 = hat_transform(g, s->trace.A0);
  s->ddb = spectral_decompose_cached(s->B0, g, OperatorKind::DB0, cache_dir);
  s->dbd = spectral_decompose_cached(s->B0, g, OperatorKind::B0D, cache_dir);
  s->E = discrepancy(g, s->B, s->B0);
  s->e_zero = s->E.zero(1e-14);
  if (!s->e_zero) {
    SaContext cx = make_sa_context(s->ddb, s->E);
    SaContext cy = cx;
    s->sa_norm_x = estimate_sa_norm(cx, g, NormMode::X).value;
    s->sa_norm_y = estimate_sa_norm(cy, g, NormMode::Y).value;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Target coordinates: orthonormal mode bases of the mean-zero data spaces.

inline VectorXcd perp_target_coords(const Grid& g, const MatrixXcd& modes_m) {
  const long P = g.npts();
  VectorXcd c((P - 1) * g.m);
  long idx = 0;
  for (long p = 1; p < P; ++p)
    for (int a = 0; a < g.m; ++a) c[idx++] = modes_m(p, a);
  return c;
}

inline VectorXcd perp_coords_of_trace(const Grid& g, const BoundaryField& f0) {
  MatrixXcd modes = to_modes(g, f0.v);
  const long P = g.npts();
  VectorXcd c((P - 1) * g.m);
  long idx = 0;
  for (long p = 1; p < P; ++p)
    for (int a = 0; a < g.m; ++a) c[idx++] = modes(p, a);
  return c;
}

// tangential curl-free coordinates: the span(xi) coefficient per (mode, alpha)
inline VectorXcd par_coords_of_trace(const Grid& g, const BoundaryField& f0) {
  MatrixXcd modes = to_modes(g, f0.v);
  const long P = g.npts();
  VectorXcd c((P - 1) * g.m);
  long idx = 0;
  for (long p = 1; p < P; ++p) {
    const double nx = g.xi_norm(p);
    for (int a = 0; a < g.m; ++a) {
      Complex dot = 0.0;
      for (int i = 1; i <= g.n; ++i) dot += (g.xi_component(p, i - 1) / nx) * modes(p, i * g.m + a);
      c[idx++] = dot;
    }
  }
  return c;
}

// tangential datum (npts x n*m) to curl-free coordinates, with defect
inline std::pair<VectorXcd, double> par_target_coords(const Grid& g, const MatrixXcd& datum_nm) {
  MatrixXcd modes = datum_nm;
  fft_lattice(modes, g.n, g.N, false);
  const long P = g.npts();
  VectorXcd c((P - 1) * g.m);
  double defect = 0.0, scale = 0.0;
  long idx = 0;
  for (long p = 1; p < P; ++p) {
    const double nx = g.xi_norm(p);
    for (int a = 0; a < g.m; ++a) {
      Complex dot = 0.0;
      double full = 0.0;
      for (int i = 1; i <= g.n; ++i) {
        dot += (g.xi_component(p, i - 1) / nx) * modes(p, (i - 1) * g.m + a);
        full += std::norm(modes(p, (i - 1) * g.m + a));
      }
      c[idx++] = dot;
      defect += full - std::norm(dot);
      scale += full;
    }
  }
  return {c, scale > 0 ? std::sqrt(std::max(0.0, defect) / scale) : 0.0};
}

// ---------------------------------------------------------------------------
// Boundary maps

struct GammaMap {
  MatrixXcd mat;    // target coords x plus-dimension
  MatrixXcd basis;  // orthonormal coords basis of the plus subspace
  BvpKind kind = BvpKind::Neumann;
  double sigma_min = 0.0;
  bool aborted = false;  // a column Picard solve diverged
};

namespace detail {

inline MatrixXcd plus_eigenbasis(const SpectralDecomp& d) {
  int rp = 0;
  for (int k = 0; k < d.r; ++k)
    if (d.mu[k].real() > 0) ++rp;
  MatrixXcd raw(d.r, rp);
  int c = 0;
  for (int k = 0; k < d.r; ++k)
    if (d.mu[k].real() > 0) raw.col(c++) = d.V.col(k);
  Eigen::HouseholderQR<MatrixXcd> qr(raw);
  return qr.householderQ() * MatrixXcd::Identity(d.r, rp);
}

inline BulkField cauchy_bulk_from_coords(const SpectralDecomp& d, const Grid& g,
                                         const VectorXcd& plus_coords) {
  BulkField f;
  f.slice.reserve(g.K());
  for (int j = 0; j < g.K(); ++j)
    f.slice.push_back(d.from_coords(d.semigroup_coords(g.t_nodes[j], plus_coords)).v);
  return f;
}

}  // namespace detail

inline GammaMap assemble_gamma(const SolverSetup& s, BvpKind kind, double picard_tol = 1e-10) {
  const Grid& g = *s.grid;
  GammaMap gm;
  gm.kind = kind;
  const bool dirichlet = (kind == BvpKind::Dirichlet);
  const SpectralDecomp& d = dirichlet ? s.dbd : s.ddb;
  gm.basis = detail::plus_eigenbasis(d);
  const int rp = static_cast<int>(gm.basis.cols());
  const long tdim = (g.npts() - 1) * g.m;
  gm.mat.resize(tdim, rp);
  SaContext cx = make_sa_context(s.ddb, s.E);
  const DiracOperator D = assemble_D(g);
  for (int k = 0; k < rp; ++k) {
    VectorXcd hc = d.hardy_coords(+1, gm.basis.col(k));
    BulkField free;
    if (!dirichlet) {
      free = detail::cauchy_bulk_from_coords(s.ddb, g, hc);
    } else {
      BulkField cext = detail::cauchy_bulk_from_coords(s.dbd, g, hc);
      free.slice.reserve(g.K());
      for (int j = 0; j < g.K(); ++j)
        free.slice.push_back(D.apply(BoundaryField{cext.slice[j]}).v);
    }
    BulkField f;
    if (s.e_zero) {
      f = std::move(free);
    } else {
      PicardResult pr =
          picard_solve(cx, g, free, dirichlet ? NormMode::Y : NormMode::X, picard_tol);
      if (!pr.diag.converged) {
        gm.aborted = true;
        return gm;
      }
      f = std::move(pr.f);
    }
    if (!dirichlet) {
      BoundaryField f0 = d.from_coords(hc);
      if (!s.e_zero) {
        GradientTrace tr = trace_neumann_repr(f, cx, g);
        f0 = tr.f0;
      }
      gm.mat.col(k) =
          kind == BvpKind::Neumann ? perp_coords_of_trace(g, f0) : par_coords_of_trace(g, f0);
    } else {
      // potential trace v0 = h~ + h~-, boundary value u0 = -(v0)_perp
      BoundaryField v0 = s.dbd.from_coords(hc);
      if (!s.e_zero) {
        PotentialResult pot = dirichlet_potential(f, s.ddb, s.dbd, s.E, v0, s.B);
        v0 = pot.v0;
      }
      gm.mat.col(k) = -perp_coords_of_trace(g, v0);
    }
  }
  Eigen::JacobiSVD<MatrixXcd> svd(gm.mat);
  gm.sigma_min = svd.singularValues()(svd.singularValues().size() - 1);
  return gm;
}

// ---------------------------------------------------------------------------
// Solvers

namespace detail {

inline BulkField gradient_from_conormal(const Grid& g, const CoefficientField& B,
                                        const BulkField& f) {
  BulkField out;
  out.slice.reserve(g.K());
  for (int j = 0; j < g.K(); ++j) {
    MatrixXcd bf = apply_matrix_slice(B.slice_at(j), f.slice[j]);
    MatrixXcd gg = f.slice[j];
    gg.leftCols(g.m) = bf.leftCols(g.m);
    out.slice.push_back(std::move(gg));
  }
  return out;
}

inline double complex_mean_norm(const Grid& g, const MatrixXcd& datum) {
  return datum.colwise().mean().norm() * std::sqrt(std::pow(g.L, g.n));
}

inline MatrixXcd drop_mean(const MatrixXcd& datum) {
  MatrixXcd out = datum;
  for (long c = 0; c < out.cols(); ++c) out.col(c).array() -= out.col(c).mean();
  return out;
}

}  // namespace detail

inline Solution solve_gradient_problem(const SolverSetup& s, const BvpProblem& prob,
                                       double sigma_threshold = 1e-6, double sa_guard = 0.9,
                                       double picard_tol = 1e-10) {
  const Grid& g = *s.grid;
  const bool regularity = prob.kind == BvpKind::Regularity;
  if (!s.e_zero && s.sa_norm_x >= sa_guard)
    throw std::runtime_error("solve: estimated kernel norm outside the contraction regime");
  GammaMap gm = assemble_gamma(s, prob.kind, picard_tol);
  if (gm.aborted) throw std::runtime_error("solve: boundary map assembly diverged");
  if (gm.sigma_min < sigma_threshold)
    throw std::runtime_error("solve: not well-posed at this scale");

  Solution sol;
  sol.report.sigma_min_gamma = gm.sigma_min;
  sol.report.sa_norm_estimate = s.sa_norm_x;
  sol.report.star_upper = s.E.star_upper;

  VectorXcd rhs;
  if (regularity) {
    auto [coords, defect] = par_target_coords(g, prob.datum);
    if (defect > 1e-9) throw std::runtime_error("solve: regularity datum not curl-free");
    rhs = coords;
  } else {
    MatrixXcd modes = prob.datum;
    fft_lattice(modes, g.n, g.N, false);
    sol.report.datum_mean_dropped = modes.row(0).norm() * std::sqrt(std::pow(g.L, g.n));
    rhs = perp_target_coords(g, [&] {
      MatrixXcd m2 = modes;
      m2.row(0).setZero();
      return m2;
    }());
  }

  VectorXcd coef = gm.mat.partialPivLu().solve(rhs);
  VectorXcd hc = gm.basis * coef;
  sol.h_plus = s.ddb.from_coords(hc);
  BulkField free = detail::cauchy_bulk_from_coords(s.ddb, g, hc);
  SaContext cx = make_sa_context(s.ddb, s.E);
  if (s.e_zero) {
    sol.f = std::move(free);
    sol.report.picard.converged = true;
    sol.report.picard.iterations = 1;
    sol.f0 = sol.h_plus;
  } else {
    PicardResult pr = picard_solve(cx, g, free, NormMode::X, picard_tol);
    sol.report.picard = pr.diag;
    if (!pr.diag.converged) throw std::runtime_error("solve: fixed point iteration diverged");
    sol.f = std::move(pr.f);
    GradientTrace tr = trace_neumann_repr(sol.f, cx, g);
    sol.f0 = tr.f0;
    sol.report.trace_limit_defect = tr.whitney_limit_defect;
    sol.report.extra["richardson_gap"] = tr.richardson_gap;
    sol.report.extra["hminus_norm"] = l2_norm(g, tr.h_minus);
  }
  sol.has_gradient_trace = true;
  sol.g = detail::gradient_from_conormal(g, s.B, sol.f);
  // trace of the gradient through the boundary coefficients
  MatrixXcd b0f0 = apply_matrix_slice(s.B0.entries[0], sol.f0.v);
  MatrixXcd g0 = sol.f0.v;
  g0.leftCols(g.m) = b0f0.leftCols(g.m);
  sol.g0 = BoundaryField{g0};

  // boundary-condition residual, end to end
  const double phin = std::sqrt(std::pow(g.L, g.n)) *
                      [&] {
                        MatrixXcd m = prob.datum;
                        fft_lattice(m, g.n, g.N, false);
                        m.row(0).setZero();
                        return m.norm();
                      }();
  VectorXcd achieved = regularity ? par_coords_of_trace(g, sol.f0) : perp_coords_of_trace(g, sol.f0);
  sol.report.bc_residual = (achieved - rhs).norm() * std::sqrt(std::pow(g.L, g.n)) /
                           std::max(1e-300, phin);
  sol.report.norms = norm_report(g, sol.g);
  sol.report.extra["g0_norm"] = l2_norm(g, sol.g0);
  sol.report.extra["datum_norm"] = phin;
  return sol;
}

inline Solution solve_neumann(const SolverSetup& s, const BvpProblem& prob) {
  return solve_gradient_problem(s, prob);
}
inline Solution solve_regularity(const SolverSetup& s, const BvpProblem& prob) {
  return solve_gradient_problem(s, prob);
}

inline Solution solve_dirichlet(const SolverSetup& s, const BvpProblem& prob,
                                double sigma_threshold = 1e-6, double sa_guard = 0.9,
                                double picard_tol = 1e-10) {
  const Grid& g = *s.grid;
  if (!s.e_zero && s.sa_norm_y >= sa_guard)
    throw std::runtime_error("solve: estimated kernel norm outside the contraction regime");
  GammaMap gm = assemble_gamma(s, BvpKind::Dirichlet, picard_tol);
  if (gm.aborted) throw std::runtime_error("solve: boundary map assembly diverged");
  if (gm.sigma_min < sigma_threshold)
    throw std::runtime_error("solve: not well-posed at this scale");

  Solution sol;
  sol.report.sigma_min_gamma = gm.sigma_min;
  sol.report.sa_norm_estimate = s.sa_norm_y;
  sol.report.star_upper = s.E.star_upper;

  MatrixXcd modes = prob.datum;
  fft_lattice(modes, g.n, g.N, false);
  const Eigen::RowVectorXcd mean = modes.row(0);  // held constant in t
  sol.report.datum_mean_dropped = 0.0;            // carried, not dropped
  MatrixXcd mz = modes;
  mz.row(0).setZero();
  VectorXcd rhs = perp_target_coords(g, mz);

  VectorXcd coef = gm.mat.partialPivLu().solve(rhs);
  VectorXcd hc = s.dbd.hardy_coords(+1, gm.basis * coef);
  sol.h_plus = s.dbd.from_coords(hc);

  const DiracOperator D = assemble_D(g);
  BulkField cext = detail::cauchy_bulk_from_coords(s.dbd, g, hc);
  BulkField free;
  free.slice.reserve(g.K());
  for (int j = 0; j < g.K(); ++j) free.slice.push_back(D.apply(BoundaryField{cext.slice[j]}).v);

  SaContext cx = make_sa_context(s.ddb, s.E);
  if (s.e_zero) {
    sol.f = std::move(free);
    sol.report.picard.converged = true;
    sol.report.picard.iterations = 1;
  } else {
    PicardResult pr = picard_solve(cx, g, free, NormMode::Y, picard_tol);
    sol.report.picard = pr.diag;
    if (!pr.diag.converged) throw std::runtime_error("solve: fixed point iteration diverged");
    sol.f = std::move(pr.f);
  }
  PotentialResult pot = dirichlet_potential(sol.f, s.ddb, s.dbd, s.E, sol.h_plus, s.B);
  sol.report.extra["dv_defect"] = pot.dv_defect;
  sol.report.extra["veq_residual"] = pot.veq_residual;
  sol.report.extra["v_bottom_limit"] = pot.bottom_limit;
  sol.report.extra["v_top_limit"] = pot.top_limit;

  // u = c - v_perp. The constant absorbs the datum mean plus the mean of the
  // potential trace (nonzero when the multiplier couples the zero mode).
  sol.has_potential = true;
  sol.u.reserve(g.K());
  const Eigen::RowVectorXcd vmean = pot.v0.v.leftCols(g.m).colwise().mean();
  MatrixXcd cmean = MatrixXcd::Zero(g.npts(), g.m);
  for (long p = 0; p < g.npts(); ++p) cmean.row(p) = mean + vmean;
  for (int j = 0; j < g.K(); ++j) sol.u.push_back(cmean - pot.v.slice[j].leftCols(g.m));
  sol.u0 = cmean - pot.v0.v.leftCols(g.m);
  // the square-function class carries no L2 gradient trace; leave it empty
  sol.f0 = zero_boundary(g);
  sol.g0 = zero_boundary(g);
  sol.g = detail::gradient_from_conormal(g, s.B, sol.f);

  // boundary condition and boundary-slice orientation check
  const double phin = slice_norm(g, prob.datum);
  sol.report.bc_residual = slice_norm(g, MatrixXcd(sol.u0 - prob.datum)) / std::max(1e-300, phin);
  sol.report.boundary_slice_match =
      slice_norm(g, MatrixXcd(sol.u[0] - prob.datum)) / std::max(1e-300, phin);
  sol.report.norms = norm_report(g, sol.g);
  NormReport un = norm_report(g, BulkField{sol.u});
  sol.report.extra["u_x_norm"] = un.x_norm;
  sol.report.extra["u_sup_l2"] = un.sup_l2;
  sol.report.extra["u0_norm"] = slice_norm(g, sol.u0);
  sol.report.extra["datum_norm"] = phin;
  return sol;
}

inline Solution solve(const SolverSetup& s, const BvpProblem& prob) {
  return prob.kind == BvpKind::Dirichlet ? solve_dirichlet(s, prob)
                                         : solve_gradient_problem(s, prob);
}

// ---------------------------------------------------------------------------
// Well-posedness margins

struct MarginReport {
  double sigma_neumann = 0.0;
  double sigma_regularity = 0.0;
  double sigma_dirichlet = 0.0;
  double sa_norm_x = 0.0, sa_norm_y = 0.0;
  double gamma_slope = 0.0;       // ||Gamma_A - Gamma_A0|| per unit star upper
  double predicted_radius = 0.0;  // sigma_min(Gamma_A0) / slope
};

inline MarginReport wellposedness_margin(const SolverSetup& s) {
  const Grid& g = *s.grid;
  MarginReport m;
  GammaMap gn = assemble_gamma(s, BvpKind::Neumann);
  GammaMap gr = assemble_gamma(s, BvpKind::Regularity);
  GammaMap gd = assemble_gamma(s, BvpKind::Dirichlet);
  m.sigma_neumann = gn.sigma_min;
  m.sigma_regularity = gr.sigma_min;
  m.sigma_dirichlet = gd.sigma_min;
  m.sa_norm_x = s.sa_norm_x;
  m.sa_norm_y = s.sa_norm_y;
  // unperturbed map for the slope
  SolverSetup s0 = s;
  s0.E.entries.assign(g.K(), MatrixXcd::Zero(g.npts() * g.comps(), g.comps()));
  s0.E.star_upper = s0.E.star_lower = s0.E.star_estimate = s0.E.carleson_norm = 0.0;
  s0.e_zero = true;
  GammaMap g0 = assemble_gamma(s0, BvpKind::Neumann);
  if (!s.e_zero && s.E.star_upper > 0) {
    Eigen::JacobiSVD<MatrixXcd> svd(gn.mat - g0.mat);
    m.gamma_slope = svd.singularValues()(0) / s.E.star_upper;
    m.predicted_radius = m.gamma_slope > 0 ? g0.sigma_min / m.gamma_slope : 0.0;
  } else {
    m.predicted_radius = g0.sigma_min;
  }
  return m;
}

}  // namespace hdbvp

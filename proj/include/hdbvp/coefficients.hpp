// SPDX-License-Identifier: MIT
//
// Coefficient algebra: the block hat-transform between second-order and
// first-order coefficients, accretivity constants on the curl-free subspace,
// the Lipschitz graph pullback, transversally-averaged trace coefficients,
// and the coefficient discrepancy record.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <functional>
#include <optional>
#include <random>

#include "hdbvp/grid.hpp"

namespace hdbvp {

// One (1+n)m x (1+n)m complex matrix per (t-node, x-node). Slice j stores the
// node matrices stacked vertically: entries[j].block(p*C, 0, C, C).
struct CoefficientField {
  std::vector<MatrixXcd> entries;  // K slices (one if t_independent), each (P*C) x C
  bool t_independent = true;
  double kappa = 0.0;    // accretivity constant on H (computed)
  double omega = 0.0;    // angle of accretivity (t-independent case)
  double sup_norm = 0.0; // max node spectral norm
  double hat_condition = 0.0;  // worst normal-normal block condition seen by the transform

  int slices() const { return static_cast<int>(entries.size()); }
  const MatrixXcd& slice_at(int j) const { return entries[t_independent ? 0 : j]; }
  Eigen::Block<const MatrixXcd> at(int j, long p, int C) const {
    return slice_at(j).block(p * C, 0, C, C);
  }
};

struct Discrepancy {
  std::vector<MatrixXcd> entries;  // K slices, (P*C) x C, values B0 - B_t
  double carleson_norm = 0.0;
  bool carleson_divergent = false;
  double star_lower = 0.0;   // ||E||_inf
  double star_upper = 0.0;   // C_grid * ||E||_C
  double star_estimate = 0.0;

  Eigen::Block<const MatrixXcd> at(int j, long p, int C) const {
    return entries[j].block(p * C, 0, C, C);
  }
  bool zero(double tol = 0.0) const {
    for (const auto& s : entries)
      if (s.cwiseAbs().maxCoeff() > tol) return false;
    return true;
  }
};

// Apply a coefficient slice to a field slice: out_p = A_p * in_p per point.
inline MatrixXcd apply_matrix_slice(const MatrixXcd& coeff, const MatrixXcd& field) {
  const int C = static_cast<int>(field.cols());
  const long P = field.rows();
  MatrixXcd out(P, C);
  for (long p = 0; p < P; ++p)
    out.row(p) = (coeff.block(p * C, 0, C, C) * field.row(p).transpose()).transpose();
  return out;
}

inline double coeff_sup_norm(const CoefficientField& A, const Grid& g) {
  const int C = g.comps();
  double s = 0.0;
  for (const auto& sl : A.entries)
    for (long p = 0; p * C < sl.rows(); ++p) {
      Eigen::JacobiSVD<MatrixXcd> svd(sl.block(p * C, 0, C, C));
      s = std::max(s, svd.singularValues()(0));
    }
  return s;
}

// ---------------------------------------------------------------------------
// Curl-free subspace bookkeeping shared with the calculus module.
//
// H = N(curl_x): per Fourier mode xi != 0 the tangential block lies in
// span(xi) per system component; the zero mode is unconstrained. The range
// subspace used by the operator calculus drops the zero mode entirely.

// Project a mode-space slice onto H (normal block kept, tangential block
// projected onto span(xi) per alpha; zero mode untouched; identity for n=1).
inline void project_H_modes(const Grid& g, MatrixXcd& modes) {
  if (g.n == 1) return;
  const int nm = g.n, m = g.m;
  for (long p = 1; p < g.npts(); ++p) {
    double nx = g.xi_norm(p);
    if (nx == 0.0) continue;
    for (int a = 0; a < m; ++a) {
      Complex dot = 0.0;
      for (int i = 1; i <= nm; ++i) dot += (g.xi_component(p, i - 1) / nx) * modes(p, i * m + a);
      for (int i = 1; i <= nm; ++i) modes(p, i * m + a) = dot * (g.xi_component(p, i - 1) / nx);
    }
  }
}

inline BoundaryField project_H(const Grid& g, const BoundaryField& f) {
  MatrixXcd modes = to_modes(g, f.v);
  project_H_modes(g, modes);
  return BoundaryField{from_modes(g, modes)};
}

// Dimension of the mean-zero part of H (the calculus range subspace).
inline int range_dim(const Grid& g) { return static_cast<int>(2 * g.m * (g.npts() - 1)); }

// Coordinates of a mode-space slice with respect to the orthonormal range
// basis: for each mode p != 0 and alpha, the normal coefficient and the
// span(xi) tangential coefficient. Ordering: p-major, alpha-minor, (perp, par).
inline VectorXcd range_coords(const Grid& g, const MatrixXcd& modes) {
  const int m = g.m;
  VectorXcd c(range_dim(g));
  long idx = 0;
  for (long p = 1; p < g.npts(); ++p) {
    const double nx = g.xi_norm(p);
    for (int a = 0; a < m; ++a) {
      c[idx++] = modes(p, a);
      Complex dot = 0.0;
      for (int i = 1; i <= g.n; ++i) dot += (g.xi_component(p, i - 1) / nx) * modes(p, i * m + a);
      c[idx++] = dot;
    }
  }
  return c;
}

inline MatrixXcd range_synthesis(const Grid& g, const VectorXcd& coords) {
  const int m = g.m;
  MatrixXcd modes = MatrixXcd::Zero(g.npts(), g.comps());
  long idx = 0;
  for (long p = 1; p < g.npts(); ++p) {
    const double nx = g.xi_norm(p);
    for (int a = 0; a < m; ++a) {
      modes(p, a) = coords[idx++];
      const Complex par = coords[idx++];
      for (int i = 1; i <= g.n; ++i) modes(p, i * m + a) = par * (g.xi_component(p, i - 1) / nx);
    }
  }
  return modes;
}

// Compression of a multiplication operator to H (mean-zero range part plus
// the zero-mode block), used for accretivity. Returns the dense matrix on the
// orthonormal basis {range basis} + {zero-mode unit vectors}.
inline MatrixXcd compress_to_H(const Grid& g, const CoefficientField& A, int t_slice) {
  const int r = range_dim(g), C = g.comps();
  const int dim = r + C;  // range basis plus the C constant fields
  MatrixXcd out(dim, dim);
  const long P = g.npts();
  auto apply_col = [&](const MatrixXcd& modes_in, long col) {
    MatrixXcd space = from_modes(g, modes_in);
    MatrixXcd prod = apply_matrix_slice(A.slice_at(t_slice), space);
    MatrixXcd modes = to_modes(g, prod);
    project_H_modes(g, modes);
    VectorXcd rc = range_coords(g, modes);
    out.block(0, col, r, 1) = rc;
    for (int c = 0; c < C; ++c) out(r + c, col) = modes(0, c) ;
  };
  // range basis columns
  for (int k = 0; k < r; ++k) {
    VectorXcd e = VectorXcd::Zero(r);
    e[k] = 1.0;
    apply_col(range_synthesis(g, e), k);
  }
  // zero-mode columns (constant fields, normalized in L2: 1/sqrt(P) in modes
  // is just the constant 1 mode-coefficient; unit L2 norm needs 1/sqrt(L^n),
  // but a uniform scale drops out of Rayleigh quotients)
  for (int c = 0; c < C; ++c) {
    MatrixXcd modes = MatrixXcd::Zero(P, C);
    modes(0, c) = 1.0;
    apply_col(modes, r + c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operations

// Block transform between the two coefficient roles. Self-inverse.
inline CoefficientField hat_transform(const Grid& g, const CoefficientField& A) {
  const int C = g.comps(), m = g.m;
  CoefficientField B;
  B.t_independent = A.t_independent;
  B.entries.reserve(A.entries.size());
  double worst_cond = 0.0;
  for (const auto& sl : A.entries) {
    MatrixXcd out(sl.rows(), C);
    for (long p = 0; p * C < sl.rows(); ++p) {
      const auto Ap = sl.block(p * C, 0, C, C);
      const MatrixXcd App = Ap.topLeftCorner(m, m);          // normal-normal
      const MatrixXcd Apt = Ap.topRightCorner(m, C - m);     // normal-tangential
      const MatrixXcd Atp = Ap.bottomLeftCorner(C - m, m);
      const MatrixXcd Att = Ap.bottomRightCorner(C - m, C - m);
      Eigen::JacobiSVD<MatrixXcd> svd(App);
      const double smax = svd.singularValues()(0), smin = svd.singularValues()(m - 1);
      if (smax <= 0.0 || smin <= 1e-12 * smax)
        throw std::runtime_error("hat_transform: near-singular normal-normal block");
      worst_cond = std::max(worst_cond, smax / smin);
      const MatrixXcd inv = Ap.topLeftCorner(m, m).partialPivLu().inverse();
      out.block(p * C, 0, m, m) = inv;
      out.block(p * C, m, m, C - m) = -inv * Apt;
      out.block(p * C + m, 0, C - m, m) = Atp * inv;
      out.block(p * C + m, m, C - m, C - m) = Att - Atp * inv * Apt;
    }
    B.entries.push_back(std::move(out));
  }
  B.sup_norm = coeff_sup_norm(B, g);
  B.hat_condition = worst_cond;
  return B;
}

// kappa = min over t-nodes of the smallest eigenvalue of the compression of
// (A + A*)/2 to the discrete H; omega = numerical-range sector angle of the
// compression (t-independent case).
inline std::pair<double, double> accretivity(const CoefficientField& A, const Grid& g) {
  double kappa = std::numeric_limits<double>::infinity();
  MatrixXcd C0;
  for (int j = 0; j < A.slices(); ++j) {
    MatrixXcd Cj = compress_to_H(g, A, j);
    if (j == 0) C0 = Cj;
    MatrixXcd herm = 0.5 * (Cj + Cj.adjoint());
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(herm);
    kappa = std::min(kappa, es.eigenvalues().minCoeff());
  }
  double omega = 0.0;
  if (A.t_independent) {
    if (kappa <= 0.0) {
      omega = M_PI / 2;
    } else {
      // smallest theta with the numerical range inside the sector |arg| <= theta:
      // bisection on lambda_max(Im(e^{-i s} C)) type tests on both sides
      auto outside = [&](double theta) {
        for (double sgn : {1.0, -1.0}) {
          MatrixXcd T = (std::tan(theta) * 0.5) * (C0 + C0.adjoint()) -
                        sgn * Complex(0, -0.5) * (C0 - C0.adjoint());
          Eigen::SelfAdjointEigenSolver<MatrixXcd> es(T);
          if (es.eigenvalues().minCoeff() < -1e-13 * C0.norm()) return true;
        }
        return false;
      };
      double lo = 0.0, hi = M_PI / 2 - 1e-9;
      if (outside(lo)) {
        for (int it = 0; it < 60; ++it) {
          double mid = 0.5 * (lo + hi);
          (outside(mid) ? lo : hi) = mid;
        }
        omega = hi;
      }
    }
  } else {
    omega = std::numeric_limits<double>::quiet_NaN();
  }
  return {kappa, omega};
}

inline void finalize_constants(CoefficientField& A, const Grid& g) {
  auto [k, w] = accretivity(A, g);
  A.kappa = k;
  A.omega = w;
  A.sup_norm = coeff_sup_norm(A, g);
  if (k <= 0.0) throw std::runtime_error("coefficients not accretive on H");
}

// ---------------------------------------------------------------------------
// Lipschitz graph pullback for rho(t,x) = (t + phi(x), x), |J| = 1.
// A(x) = rho^-1 Atilde(rho(x)) rho^-T with rho = [[1, grad phi^T], [0, I]]
// acting on the (1+n) vector index, block-diagonal over alpha.

struct GraphMap {
  VectorXd phi;       // npts values of the graph offset
  MatrixXd grad_phi;  // npts x n, spectral derivative
};

inline GraphMap make_graph_map(const Grid& g, const VectorXd& phi) {
  GraphMap rho;
  rho.phi = phi;
  rho.grad_phi.resize(g.npts(), g.n);
  MatrixXcd modes(g.npts(), 1);
  for (long p = 0; p < g.npts(); ++p) modes(p, 0) = phi[p];
  fft_lattice(modes, g.n, g.N, false);
  for (int axis = 0; axis < g.n; ++axis) {
    MatrixXcd dm(g.npts(), 1);
    for (long p = 0; p < g.npts(); ++p)
      dm(p, 0) = Complex(0, g.xi_component(p, axis)) * modes(p, 0);
    fft_lattice(dm, g.n, g.N, true);
    for (long p = 0; p < g.npts(); ++p) rho.grad_phi(p, axis) = dm(p, 0).real();
  }
  return rho;
}

// Evaluate a coefficient field at an off-node transversal height by
// piecewise-constant-in-log interpolation (clamped at the ends).
inline MatrixXcd coeff_at_height(const Grid& g, const CoefficientField& A, double t, long p) {
  const int C = g.comps();
  if (A.t_independent) return A.entries[0].block(p * C, 0, C, C);
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (int j = 0; j < g.K(); ++j) {
    double d = std::fabs(std::log(g.t_nodes[j] / t));
    if (d < bd) { bd = d; best = j; }
  }
  return A.entries[best].block(p * C, 0, C, C);
}

inline CoefficientField pullback_coefficients(const Grid& g, const CoefficientField& A_tilde,
                                              const GraphMap& rho) {
  const int C = g.comps(), m = g.m, n = g.n;
  CoefficientField A;
  A.t_independent = A_tilde.t_independent;
  const int KS = A.t_independent ? 1 : g.K();
  for (int j = 0; j < KS; ++j) {
    MatrixXcd out(g.npts() * C, C);
    for (long p = 0; p < g.npts(); ++p) {
      // rho_inv on the (1+n) index: [[1, -grad phi^T],[0, I]], alpha blocks
      MatrixXcd Rinv = MatrixXcd::Identity(C, C);
      for (int i = 1; i <= n; ++i)
        for (int a = 0; a < m; ++a) Rinv(a, i * m + a) = -rho.grad_phi(p, i - 1);
      const double height = A.t_independent ? g.t_nodes[0] : g.t_nodes[j];
      MatrixXcd At = A_tilde.t_independent
                         ? MatrixXcd(A_tilde.entries[0].block(p * C, 0, C, C))
                         : coeff_at_height(g, A_tilde, height + rho.phi[p], p);
      out.block(p * C, 0, C, C) = Rinv * At * Rinv.transpose();
    }
    A.entries.push_back(std::move(out));
  }
  A.sup_norm = coeff_sup_norm(A, g);
  auto [k, w] = accretivity(A, g);
  A.kappa = k;
  A.omega = w;
  // large Lipschitz constants can destroy accretivity on the grid; the caller
  // sees the measured kappa either way
  return A;
}

// ---------------------------------------------------------------------------
// Trace coefficients: average over the smallest t-decade, log-uniform weights.

struct TraceResult {
  CoefficientField A0;
  bool finite = true;
  double carleson = 0.0;
  double kappa0 = 0.0;
  double sup0 = 0.0;
};

// forward declaration; implemented in norms.hpp
struct CarlesonEval {
  double value = 0.0;
  bool divergent = false;
};
CarlesonEval carleson_of_entries(const Grid& g, const std::vector<MatrixXcd>& entries,
                                 double cap = 1e6);

inline TraceResult trace_coefficients(const CoefficientField& A, const Grid& g,
                                      double carleson_cap = 1e6) {
  const int C = g.comps();
  TraceResult r;
  r.A0.t_independent = true;
  if (A.t_independent) {
    r.A0.entries = {A.entries[0]};
  } else {
    const double t_hi = g.t_nodes[0] * 10.0;
    MatrixXcd acc = MatrixXcd::Zero(g.npts() * C, C);
    double wsum = 0.0;
    for (int j = 0; j < g.K(); ++j) {
      if (g.t_nodes[j] > t_hi && wsum > 0.0) break;
      const double w = g.t_weights[j] / g.t_nodes[j];
      acc += w * A.entries[j];
      wsum += w;
    }
    r.A0.entries = {acc / wsum};
  }
  // discrepancy Carleson control decides finiteness
  std::vector<MatrixXcd> diff(g.K());
  for (int j = 0; j < g.K(); ++j) diff[j] = r.A0.entries[0] - A.slice_at(j);
  CarlesonEval ce = carleson_of_entries(g, diff, carleson_cap);
  r.carleson = ce.value;
  r.finite = !ce.divergent && ce.value < carleson_cap;
  auto [k0, w0] = accretivity(r.A0, g);
  r.A0.kappa = k0;
  r.A0.omega = w0;
  r.A0.sup_norm = coeff_sup_norm(r.A0, g);
  r.kappa0 = k0;
  r.sup0 = r.A0.sup_norm;
  return r;
}

// ---------------------------------------------------------------------------
// Discrepancy assembly (norms filled by the norms module; see norms.hpp).

Discrepancy discrepancy(const Grid& g, const CoefficientField& B, const CoefficientField& B0);

// ---------------------------------------------------------------------------
// Built-in generators

inline CoefficientField identity_coefficients(const Grid& g) {
  const int C = g.comps();
  CoefficientField A;
  A.t_independent = true;
  MatrixXcd sl(g.npts() * C, C);
  for (long p = 0; p < g.npts(); ++p) sl.block(p * C, 0, C, C) = MatrixXcd::Identity(C, C);
  A.entries = {std::move(sl)};
  A.kappa = 1.0;
  A.omega = 0.0;
  A.sup_norm = 1.0;
  return A;
}

// Hermitean, x-dependent, strictly accretive: I + amp * H(x), ||H|| <= 1.
inline CoefficientField hermitean_random(const Grid& g, std::uint64_t seed, double amp = 0.5) {
  const int C = g.comps();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CoefficientField A;
  A.t_independent = true;
  MatrixXcd sl(g.npts() * C, C);
  // a few smooth Fourier profiles keep x-dependence resolvable
  const int nprof = 3;
  std::vector<MatrixXcd> Hk(nprof);
  std::vector<std::vector<int>> kvec(nprof, std::vector<int>(g.n));
  std::vector<double> phase(nprof);
  for (int q = 0; q < nprof; ++q) {
    MatrixXcd M(C, C);
    for (int i = 0; i < C; ++i)
      for (int j = 0; j < C; ++j) M(i, j) = Complex(u(rng), u(rng));
    Hk[q] = 0.5 * (M + M.adjoint());
    Hk[q] /= std::max(1.0, Hk[q].operatorNorm());
    for (int a = 0; a < g.n; ++a) kvec[q][a] = 1 + static_cast<int>((q + a) % std::max(1, g.N / 4));
    phase[q] = u(rng) * M_PI;
  }
  for (long p = 0; p < g.npts(); ++p) {
    MatrixXcd M = MatrixXcd::Identity(C, C);
    for (int q = 0; q < nprof; ++q) {
      double ph = phase[q];
      for (int a = 0; a < g.n; ++a) ph += 2.0 * M_PI * kvec[q][a] * g.coord(p, a) / g.L;
      M += (amp / nprof) * std::cos(ph) * Hk[q];
    }
    sl.block(p * C, 0, C, C) = M;
  }
  A.entries = {std::move(sl)};
  finalize_constants(A, g);
  return A;
}

// Block-form coefficients: no normal-tangential coupling.
inline CoefficientField block_random(const Grid& g, std::uint64_t seed, double amp = 0.4) {
  CoefficientField A = hermitean_random(g, seed, amp);
  const int C = g.comps(), m = g.m;
  for (auto& sl : A.entries)
    for (long p = 0; p * C < sl.rows(); ++p) {
      sl.block(p * C, m, m, C - m).setZero();
      sl.block(p * C + m, 0, C - m, m).setZero();
    }
  finalize_constants(A, g);
  return A;
}

// Pointwise strictly accretive random sample (for transform stress tests):
// c*I + R with ||R|| < 0.8 c.
inline CoefficientField random_accretive(const Grid& g, std::uint64_t seed, double c = 1.0) {
  const int C = g.comps();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CoefficientField A;
  A.t_independent = true;
  MatrixXcd sl(g.npts() * C, C);
  for (long p = 0; p < g.npts(); ++p) {
    MatrixXcd R(C, C);
    for (int i = 0; i < C; ++i)
      for (int j = 0; j < C; ++j) R(i, j) = Complex(u(rng), u(rng));
    R *= 0.8 * c / std::max(1.0, R.operatorNorm());
    sl.block(p * C, 0, C, C) = c * MatrixXcd::Identity(C, C) + R;
  }
  A.entries = {std::move(sl)};
  finalize_constants(A, g);
  return A;
}

// Named transversal perturbation profiles applied on top of t-independent A0:
// A(t,x) = A0(x) + amplitude * profile(t) * M(x).
enum class PerturbationProfile { none, slab, ramp, constant };

inline double profile_value(PerturbationProfile prof, double t, double t_lo, double t_hi) {
  switch (prof) {
    case PerturbationProfile::none: return 0.0;
    case PerturbationProfile::slab: return (t > t_lo && t < t_hi) ? 1.0 : 0.0;
    case PerturbationProfile::ramp: {
      // smooth bump in log t supported on (t_lo, t_hi); vanishing toward the
      // boundary keeps the discrepancy Carleson norm finite
      if (t <= t_lo || t >= t_hi) return 0.0;
      double s = 2.0 * std::log(t / t_lo) / std::log(t_hi / t_lo) - 1.0;
      return std::pow(std::cos(0.5 * M_PI * s), 2);
    }
    case PerturbationProfile::constant: return 1.0;
  }
  return 0.0;
}

inline CoefficientField perturb_coefficients(const Grid& g, const CoefficientField& A0,
                                             PerturbationProfile prof, double amplitude,
                                             double t_lo, double t_hi, std::uint64_t seed,
                                             bool skew = false) {
  const int C = g.comps();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixXcd M(C, C);
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) M(i, j) = Complex(u(rng), u(rng));
  M = 0.5 * (M + M.adjoint());
  M /= std::max(1.0, M.operatorNorm());
  // anti-Hermitian direction leaves the real part, hence the accretivity
  // constant, untouched: arbitrarily large transversal discrepancies stay
  // inside the admissible coefficient class
  if (skew) M *= Complex(0, 1);
  CoefficientField A;
  A.t_independent = (prof == PerturbationProfile::none);
  const int KS = A.t_independent ? 1 : g.K();
  for (int j = 0; j < KS; ++j) {
    MatrixXcd sl = A0.entries[0];
    const double pv = amplitude * profile_value(prof, g.t_nodes[j], t_lo, t_hi);
    if (pv != 0.0)
      for (long p = 0; p < g.npts(); ++p) sl.block(p * C, 0, C, C) += pv * M;
    A.entries.push_back(std::move(sl));
  }
  finalize_constants(A, g);
  return A;
}

// Raw reader: same binary layout as the field dump, components = C*C matrix
// entries in row-major order per point.
inline CoefficientField read_coefficients(const std::string& path, const Grid& g);

}  // namespace hdbvp

// SPDX-License-Identifier: MIT
//
// Operator calculus for the first-order system: the Dirac-type operator D as
// a Fourier multiplier, the curl-free subspace, and the spectral machinery of
// the two bisectorial compositions (multiplication-after-D and D-after-
// multiplication) restricted to their range subspaces: sign projections,
// the sectorial modulus and its semigroup, Cauchy extensions, the coupling
// operators between the two calculi, Dunford contour quadrature as an
// independent evaluation route, and square-function measurements.

#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>

#include "hdbvp/coefficients.hpp"
#include "hdbvp/grid.hpp"

namespace hdbvp {

enum class OperatorKind { DB0, B0D };

struct DiracOperator {
  const Grid* grid = nullptr;
  // Apply the per-mode symbol [[0, i xi .],[ -i xi, 0 ]] to a mode-space slice.
  MatrixXcd apply_modes(const MatrixXcd& modes) const {
    const Grid& g = *grid;
    const int m = g.m;
    MatrixXcd out = MatrixXcd::Zero(modes.rows(), modes.cols());
    for (long p = 0; p < g.npts(); ++p) {
      for (int a = 0; a < m; ++a) {
        Complex div = 0.0;
        for (int i = 1; i <= g.n; ++i)
          div += Complex(0, g.xi_component(p, i - 1)) * modes(p, i * m + a);
        out(p, a) = div;
        for (int i = 1; i <= g.n; ++i)
          out(p, i * m + a) = -Complex(0, g.xi_component(p, i - 1)) * modes(p, a);
      }
    }
    return out;
  }
  BoundaryField apply(const BoundaryField& f) const {
    return BoundaryField{from_modes(*grid, apply_modes(to_modes(*grid, f.v)))};
  }
};

inline DiracOperator assemble_D(const Grid& g) { return DiracOperator{&g}; }

// ---------------------------------------------------------------------------
// SpectralDecomp: dense diagonalization data of the composition restricted to
// its range subspace. For kind DB0 the range is the mean-zero part of H with
// its canonical orthonormal mode basis (coordinates are cheap); for kind B0D
// the range is B0 H with an orthonormalized basis W and oblique coordinates
// (projection along the orthogonal complement of H).

struct SpectralDecomp {
  OperatorKind kind = OperatorKind::DB0;
  const Grid* grid = nullptr;
  int r = 0;
  MatrixXcd M;          // matrix of the operator on the range basis
  MatrixXcd V, Vinv;    // eigenvector data (diagonalizable path)
  VectorXcd mu;         // eigenvalues
  MatrixXcd Eplus, Eminus;  // sign projections on the range basis
  double omega = 0.0;       // measured spectral angle
  bool diagonalizable = true;

  MatrixXcd B0slice;  // the multiplier, kept for the null-space splitting
  MatrixXcd W;        // Fourier-coordinate orthonormal basis of B0 H (d x r)
  MatrixXcd Tobl;     // (Q* W)^{-1}: oblique coordinate map (r x r)
  MatrixXcd G;        // W* (B0 Q): matrix of B0 : H -> B0 H          (r x r)
  MatrixXcd Ginv;

  // --- coordinates -----------------------------------------------------
  // The calculus is extended to all of L2 by zero on the operator's null
  // space, so the input projection runs ALONG the null space, not
  // orthogonally: for the D-then-multiply composition that is the preimage
  // of the orthocomplement of H under the multiplier.
  VectorXcd coords_from_modes(const MatrixXcd& modes) const {
    if (kind == OperatorKind::DB0) {
      MatrixXcd bu = to_modes(*grid, apply_matrix_slice(B0slice, from_modes(*grid, modes)));
      return Ginv * (Tobl * range_coords(*grid, bu));
    }
    // oblique: c = (Q*W)^{-1} Q* u
    return Tobl * range_coords(*grid, modes);
  }
  MatrixXcd modes_from_coords(const VectorXcd& c) const {
    if (kind == OperatorKind::DB0) return range_synthesis(*grid, c);
    const Grid& g = *grid;
    MatrixXcd modes = MatrixXcd::Zero(g.npts(), g.comps());
    // W columns are stored flattened (component-major over the mode lattice)
    Eigen::Map<VectorXcd> flat(modes.data(), modes.size());
    flat = W * c;
    return modes;
  }
  VectorXcd coords(const BoundaryField& f) const {
    return coords_from_modes(to_modes(*grid, f.v));
  }
  BoundaryField from_coords(const VectorXcd& c) const {
    return BoundaryField{from_modes(*grid, modes_from_coords(c))};
  }
  // Orthogonal projection onto the mean-zero part of H (independent of the
  // null-space splitting above).
  BoundaryField orthogonal_range_projection(const BoundaryField& f) const {
    return BoundaryField{
        from_modes(*grid, range_synthesis(*grid, range_coords(*grid, to_modes(*grid, f.v))))};
  }

  // --- functional calculus ----------------------------------------------
  // |mu| in the bisectorial sense: mu * sign(Re mu).
  static Complex modulus(Complex z) { return z.real() >= 0 ? z : -z; }

  VectorXcd apply_symbol_coords(const std::function<Complex(Complex)>& fsym,
                                const VectorXcd& c) const {
    VectorXcd z = Vinv * c;
    for (int k = 0; k < r; ++k) z[k] *= fsym(mu[k]);
    return V * z;
  }
  BoundaryField apply_symbol(const std::function<Complex(Complex)>& fsym,
                             const BoundaryField& f) const {
    return from_coords(apply_symbol_coords(fsym, coords(f)));
  }

  VectorXcd semigroup_coords(double t, const VectorXcd& c) const {
    return apply_symbol_coords([t](Complex z) { return std::exp(-t * modulus(z)); }, c);
  }
  VectorXcd hardy_coords(int sign, const VectorXcd& c) const {
    return (sign > 0 ? Eplus : Eminus) * c;
  }
  BoundaryField hardy_projection(int sign, const BoundaryField& f) const {
    return from_coords(hardy_coords(sign, coords(f)));
  }
  BoundaryField project_range(const BoundaryField& f) const {
    return from_coords(coords(f));
  }
};

namespace detail {

// Matrix sign via Newton iteration with determinant scaling; used when the
// eigenbasis is too ill-conditioned to trust.
inline MatrixXcd matrix_sign(const MatrixXcd& M) {
  MatrixXcd S = M;
  const int n = static_cast<int>(M.rows());
  for (int it = 0; it < 60; ++it) {
    MatrixXcd Sinv = S.partialPivLu().inverse();
    double mu = std::pow(std::abs(S.partialPivLu().determinant()), -1.0 / n);
    if (!std::isfinite(mu) || mu <= 0) mu = 1.0;
    MatrixXcd next = 0.5 * (mu * S + (1.0 / mu) * Sinv);
    double diff = (next - S).norm() / std::max(1.0, S.norm());
    S = next;
    if (diff < 1e-14) break;
  }
  return S;
}

}  // namespace detail

// Assemble the dense matrix of the composition on the range basis by driving
// each basis vector through multiplication and the Dirac symbol.
inline MatrixXcd assemble_range_matrix(const Grid& g, const CoefficientField& B0,
                                       OperatorKind kind, const MatrixXcd* Wbasis = nullptr) {
  const int r = range_dim(g);
  const DiracOperator D = assemble_D(g);
  MatrixXcd M(r, r);
  for (int k = 0; k < r; ++k) {
    MatrixXcd modes;
    if (kind == OperatorKind::DB0) {
      VectorXcd e = VectorXcd::Zero(r);
      e[k] = 1.0;
      modes = range_synthesis(g, e);
    } else {
      modes = MatrixXcd::Zero(g.npts(), g.comps());
      Eigen::Map<VectorXcd> flat(modes.data(), modes.size());
      flat = Wbasis->col(k);
    }
    if (kind == OperatorKind::DB0) {
      MatrixXcd space = from_modes(g, modes);
      MatrixXcd Bspace = apply_matrix_slice(B0.entries[0], space);
      MatrixXcd out = D.apply_modes(to_modes(g, Bspace));
      M.col(k) = range_coords(g, out);
    } else {
      MatrixXcd Dspace = from_modes(g, D.apply_modes(modes));
      MatrixXcd out = to_modes(g, apply_matrix_slice(B0.entries[0], Dspace));
      // result lies in span(W); orthonormal W makes the coordinates W* out
      Eigen::Map<const VectorXcd> flat(out.data(), out.size());
      M.col(k) = Wbasis->adjoint() * flat;
    }
  }
  return M;
}

inline SpectralDecomp spectral_decompose(const CoefficientField& B0, const Grid& g,
                                         OperatorKind kind) {
  if (!B0.t_independent) throw std::invalid_argument("spectral_decompose: B0 must be t-independent");
  SpectralDecomp d;
  d.kind = kind;
  d.grid = &g;
  d.r = range_dim(g);

  // Basis data of B0 H (needed by both kinds: the B0D calculus lives there,
  // and the gradient kernel couples into it through hatE).
  const long dsz = g.npts() * g.comps();
  MatrixXcd BQ(dsz, d.r);
  for (int k = 0; k < d.r; ++k) {
    VectorXcd e = VectorXcd::Zero(d.r);
    e[k] = 1.0;
    MatrixXcd space = from_modes(g, range_synthesis(g, e));
    MatrixXcd out = to_modes(g, apply_matrix_slice(B0.entries[0], space));
    Eigen::Map<const VectorXcd> flat(out.data(), out.size());
    BQ.col(k) = flat;
  }
  Eigen::HouseholderQR<MatrixXcd> qr(BQ);
  d.W = qr.householderQ() * MatrixXcd::Identity(dsz, d.r);
  MatrixXcd QW(d.r, d.r);  // range coordinates of the W columns
  for (int k = 0; k < d.r; ++k) {
    MatrixXcd modes = MatrixXcd::Zero(g.npts(), g.comps());
    Eigen::Map<VectorXcd> flat(modes.data(), modes.size());
    flat = d.W.col(k);
    QW.col(k) = range_coords(g, modes);
  }
  Eigen::PartialPivLU<MatrixXcd> lu(QW);
  if (std::abs(lu.determinant()) == 0.0)
    throw std::runtime_error("spectral_decompose: B0 compression ill-conditioned");
  d.Tobl = lu.inverse();
  d.G = d.W.adjoint() * BQ;
  d.Ginv = d.G.partialPivLu().inverse();
  d.B0slice = B0.entries[0];
  d.M = kind == OperatorKind::B0D ? assemble_range_matrix(g, B0, kind, &d.W)
                                  : assemble_range_matrix(g, B0, kind);

  Eigen::ComplexEigenSolver<MatrixXcd> es(d.M);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectral_decompose: eigensolver failed");
  d.V = es.eigenvectors();
  d.mu = es.eigenvalues();
  Eigen::PartialPivLU<MatrixXcd> vlu(d.V);
  d.Vinv = vlu.inverse();
  const double vcond = d.V.norm() * d.Vinv.norm() / d.r;  // crude condition proxy
  d.diagonalizable = std::isfinite(vcond) && vcond < 1e8;

  // spectrum sanity: bounded away from the imaginary axis
  double omega = 0.0;
  for (int k = 0; k < d.r; ++k) {
    const Complex z = d.mu[k];
    if (std::abs(z.real()) < 1e-10 * std::abs(z))
      throw std::runtime_error("spectral_decompose: spectrum touches imaginary axis");
    const Complex zs = z.real() >= 0 ? z : -z;
    omega = std::max(omega, std::abs(std::arg(zs)));
  }
  d.omega = omega;

  if (d.diagonalizable) {
    VectorXcd mask(d.r);
    for (int k = 0; k < d.r; ++k) mask[k] = d.mu[k].real() > 0 ? 1.0 : 0.0;
    d.Eplus = d.V * mask.asDiagonal() * d.Vinv;
  } else {
    // Schur-free fallback: Newton sign iteration
    MatrixXcd S = detail::matrix_sign(d.M);
    d.Eplus = 0.5 * (MatrixXcd::Identity(d.r, d.r) + S);
  }
  // idempotency refinement, then exact complementarity
  for (int it = 0; it < 2; ++it)
    d.Eplus = 3.0 * d.Eplus * d.Eplus - 2.0 * d.Eplus * d.Eplus * d.Eplus;
  d.Eminus = MatrixXcd::Identity(d.r, d.r) - d.Eplus;
  return d;
}

// ---------------------------------------------------------------------------
// Semigroup and Cauchy extension

inline BoundaryField semigroup(const SpectralDecomp& d, double t, const BoundaryField& h) {
  if (t < 0.0) throw std::invalid_argument("semigroup: t must be >= 0 (upper half-space)");
  return d.from_coords(d.semigroup_coords(t, d.coords(h)));
}

struct CauchyExtension {
  BulkField field;
  double projection_defect = 0.0;  // norm of the discarded non-plus part
};

inline CauchyExtension cauchy_extend(const SpectralDecomp& d, const BoundaryField& h_plus,
                                     const Grid& g) {
  VectorXcd c = d.coords(h_plus);
  VectorXcd cp = d.hardy_coords(+1, c);
  CauchyExtension ce;
  ce.projection_defect = (c - cp).norm() / std::max(1e-300, c.norm());
  ce.field.slice.reserve(g.K());
  for (int j = 0; j < g.K(); ++j)
    ce.field.slice.push_back(d.from_coords(d.semigroup_coords(g.t_nodes[j], cp)).v);
  return ce;
}

// ---------------------------------------------------------------------------
// Coupling operators between the two calculi: hatE(sign) = E0^{+/-} B0^{-1} P_{B0 H}.
// Returned as the r x r coordinate matrix acting from oblique B0D coordinates
// to DB0 range coordinates; apply_hatE drives a full field through it.

struct HatCoupling {
  MatrixXcd to_range;  // E^{+/-} G^{-1} : (B0D coords) -> (DB0 coords)
  const SpectralDecomp* ddb = nullptr;
  const SpectralDecomp* dbd = nullptr;
};

inline HatCoupling hatE(const SpectralDecomp& decomp_DB0, const SpectralDecomp& decomp_B0D,
                        int sign) {
  if (decomp_B0D.kind != OperatorKind::B0D || decomp_DB0.kind != OperatorKind::DB0)
    throw std::invalid_argument("hatE: pass (DB0, B0D) decompositions");
  HatCoupling h;
  h.to_range = (sign > 0 ? decomp_DB0.Eplus : decomp_DB0.Eminus) * decomp_B0D.Ginv;
  h.ddb = &decomp_DB0;
  h.dbd = &decomp_B0D;
  return h;
}

inline BoundaryField apply_hatE(const HatCoupling& h, const BoundaryField& u) {
  VectorXcd c = h.dbd->coords(u);     // oblique coordinates in B0 H
  return h.ddb->from_coords(h.to_range * c);
}

// ---------------------------------------------------------------------------
// Intertwining defect: max over sampled symbols b of
//   || B0 b(DB0) - b(B0D) B0 ||  and  || b(DB0) D - D b(B0D) ||  on test fields.

inline double intertwine_check(const SpectralDecomp& ddb, const SpectralDecomp& dbd,
                               const CoefficientField& B0,
                               const std::vector<std::function<Complex(Complex)>>& symbols,
                               std::uint64_t seed = 1234) {
  const Grid& g = *ddb.grid;
  const DiracOperator D = assemble_D(g);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    BoundaryField u = zero_boundary(g);
    for (long p = 0; p < g.npts(); ++p)
      for (int c = 0; c < g.comps(); ++c) u.v(p, c) = Complex(nd(rng), nd(rng));
    const double scale = l2_norm(g, u);
    for (const auto& b : symbols) {
      BoundaryField lhs1{apply_matrix_slice(B0.entries[0], ddb.apply_symbol(b, u).v)};
      BoundaryField rhs1 = dbd.apply_symbol(b, BoundaryField{apply_matrix_slice(B0.entries[0], u.v)});
      worst = std::max(worst, l2_norm(g, BoundaryField{lhs1.v - rhs1.v}) / scale);
      BoundaryField lhs2 = ddb.apply_symbol(b, D.apply(u));
      BoundaryField rhs2 = D.apply(dbd.apply_symbol(b, u));
      worst = std::max(worst, l2_norm(g, BoundaryField{lhs2.v - rhs2.v}) / scale);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Dunford contour quadrature on the sectorial modulus: an independent
// evaluation route for Psi-class scalar symbols. The contour is the pair of
// rays r e^{+/- i theta} around the positive-real sector, traversed so the
// spectrum is enclosed counterclockwise.

struct ContourParams {
  double theta = 0.0;    // ray angle; must exceed the measured spectral angle
  int points = 1400;     // quadrature nodes per ray
  double u_min = -21.0;  // log-radius window; the Psi-class decay controls tails
  double u_max = 21.0;
};

inline MatrixXcd dunford_quadrature(const SpectralDecomp& d,
                                    const std::function<Complex(Complex)>& symbol,
                                    ContourParams cp) {
  if (cp.theta <= d.omega)
    throw std::invalid_argument("dunford_quadrature: contour angle must exceed spectral angle");
  // |M| on the range basis, sign taken from the (refined) projections
  MatrixXcd sgn = d.Eplus - d.Eminus;
  MatrixXcd Lam = d.M * sgn;
  MatrixXcd acc = MatrixXcd::Zero(d.r, d.r);
  const double du = (cp.u_max - cp.u_min) / (cp.points - 1);
  const MatrixXcd I = MatrixXcd::Identity(d.r, d.r);
  for (int side = 0; side < 2; ++side) {
    // counterclockwise around the sector: in along the upper ray, out along
    // the lower; with increasing radius parametrization that is -1 on the
    // upper ray and +1 on the lower
    const double ang = side == 0 ? cp.theta : -cp.theta;
    const double orient = side == 0 ? -1.0 : 1.0;
    const Complex dir = std::exp(Complex(0, ang));
    for (int q = 0; q < cp.points; ++q) {
      const double u = cp.u_min + du * q;
      const double w = (q == 0 || q == cp.points - 1) ? 0.5 * du : du;
      const Complex lambda = std::exp(u) * dir;
      const Complex dl = lambda;  // d lambda / du along the ray
      MatrixXcd res = (lambda * I - Lam).partialPivLu().inverse();
      acc += (w * orient) * (symbol(lambda) * dl) * res;
    }
  }
  return acc / Complex(0, 2.0 * M_PI);
}

// ---------------------------------------------------------------------------
// Decomposition cache: binary, versioned header, keyed by a hash of the
// multiplier and the grid. Amortizes eigendecompositions across scenarios.

inline std::uint64_t fnv1a_bytes(const void* data, size_t len,
                                 std::uint64_t h = 1469598103934665603ull) {
  const unsigned char* b = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t decomp_cache_key(const CoefficientField& B0, const Grid& g,
                                      OperatorKind kind) {
  std::uint64_t h = fnv1a_bytes(B0.entries[0].data(), B0.entries[0].size() * sizeof(Complex));
  const double meta[8] = {double(g.n), double(g.m), double(g.N), g.L,
                          double(g.K()), g.t_nodes[0], g.t_nodes[g.K() - 1],
                          kind == OperatorKind::DB0 ? 0.0 : 1.0};
  return fnv1a_bytes(meta, sizeof(meta), h);
}

namespace detail {

inline void write_mat(std::ostream& os, const MatrixXcd& m) {
  const std::int64_t r = m.rows(), c = m.cols();
  os.write(reinterpret_cast<const char*>(&r), 8);
  os.write(reinterpret_cast<const char*>(&c), 8);
  os.write(reinterpret_cast<const char*>(m.data()), r * c * sizeof(Complex));
}

inline bool read_mat(std::istream& is, MatrixXcd& m) {
  std::int64_t r = 0, c = 0;
  is.read(reinterpret_cast<char*>(&r), 8);
  is.read(reinterpret_cast<char*>(&c), 8);
  if (!is || r < 0 || c < 0 || r * c > (1ll << 28)) return false;
  m.resize(r, c);
  is.read(reinterpret_cast<char*>(m.data()), r * c * sizeof(Complex));
  return bool(is);
}

}  // namespace detail

inline bool save_decomposition(const SpectralDecomp& d, const std::string& path,
                               std::uint64_t key) {
  std::ofstream os(path, std::ios::binary);
  if (!os) return false;
  os << "HDBVPC1\n";
  const std::int64_t kind = d.kind == OperatorKind::DB0 ? 0 : 1;
  os.write(reinterpret_cast<const char*>(&key), 8);
  os.write(reinterpret_cast<const char*>(&kind), 8);
  const std::int64_t r = d.r;
  os.write(reinterpret_cast<const char*>(&r), 8);
  os.write(reinterpret_cast<const char*>(&d.omega), 8);
  const std::int64_t diag = d.diagonalizable ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&diag), 8);
  detail::write_mat(os, d.M);
  detail::write_mat(os, d.V);
  detail::write_mat(os, d.Vinv);
  MatrixXcd mu = d.mu;
  detail::write_mat(os, mu);
  detail::write_mat(os, d.Eplus);
  detail::write_mat(os, d.Eminus);
  detail::write_mat(os, d.B0slice);
  detail::write_mat(os, d.W);
  detail::write_mat(os, d.Tobl);
  detail::write_mat(os, d.G);
  detail::write_mat(os, d.Ginv);
  return bool(os);
}

inline bool load_decomposition(SpectralDecomp& d, const std::string& path, std::uint64_t key,
                               const Grid& g, OperatorKind kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  std::string header;
  std::getline(is, header);
  if (header != "HDBVPC1") return false;
  std::uint64_t file_key = 0;
  std::int64_t file_kind = 0, r = 0, diag = 0;
  is.read(reinterpret_cast<char*>(&file_key), 8);
  is.read(reinterpret_cast<char*>(&file_kind), 8);
  is.read(reinterpret_cast<char*>(&r), 8);
  is.read(reinterpret_cast<char*>(&d.omega), 8);
  is.read(reinterpret_cast<char*>(&diag), 8);
  if (!is || file_key != key || file_kind != (kind == OperatorKind::DB0 ? 0 : 1)) return false;
  d.kind = kind;
  d.grid = &g;
  d.r = static_cast<int>(r);
  d.diagonalizable = diag != 0;
  MatrixXcd mu;
  if (!(detail::read_mat(is, d.M) && detail::read_mat(is, d.V) && detail::read_mat(is, d.Vinv) &&
        detail::read_mat(is, mu) && detail::read_mat(is, d.Eplus) &&
        detail::read_mat(is, d.Eminus) && detail::read_mat(is, d.B0slice) &&
        detail::read_mat(is, d.W) && detail::read_mat(is, d.Tobl) &&
        detail::read_mat(is, d.G) && detail::read_mat(is, d.Ginv)))
    return false;
  d.mu = mu.col(0);
  return d.M.rows() == d.r && d.V.rows() == d.r;
}

// Decompose with a directory-backed cache; silent recompute on any mismatch.
inline SpectralDecomp spectral_decompose_cached(const CoefficientField& B0, const Grid& g,
                                                OperatorKind kind, const std::string& cache_dir) {
  if (cache_dir.empty()) return spectral_decompose(B0, g, kind);
  const std::uint64_t key = decomp_cache_key(B0, g, kind);
  char name[64];
  std::snprintf(name, sizeof(name), "/decomp_%016llx.bin",
                static_cast<unsigned long long>(key));
  const std::string path = cache_dir + name;
  SpectralDecomp d;
  if (load_decomposition(d, path, key, g, kind)) return d;
  d = spectral_decompose(B0, g, kind);
  save_decomposition(d, path, key);
  return d;
}

// ---------------------------------------------------------------------------
// Square-function ratio: empirical spread of || t d/dt (Cauchy extension) ||_Y
// over || h+ ||_2 across seeded samples from the plus Hardy subspace.

struct SquareFunctionRatio {
  double lo = 0.0, hi = 0.0;
  std::vector<double> samples;
};

inline SquareFunctionRatio square_function_ratio(const SpectralDecomp& d, const Grid& g,
                                                 int nsamples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  SquareFunctionRatio out;
  out.lo = std::numeric_limits<double>::infinity();
  out.hi = 0.0;
  for (int s = 0; s < nsamples; ++s) {
    VectorXcd c(d.r);
    for (int k = 0; k < d.r; ++k) c[k] = Complex(nd(rng), nd(rng));
    VectorXcd cp = d.hardy_coords(+1, c);
    BoundaryField h = d.from_coords(cp);
    const double hn = l2_norm(*d.grid, h);
    if (hn < 1e-12) continue;
    double acc = 0.0;
    for (int j = 0; j < g.K(); ++j) {
      // d/dt of the extension is -Lambda e^{-t Lambda} on the plus part
      VectorXcd dc = d.apply_symbol_coords(
          [t = g.t_nodes[j]](Complex z) {
            const Complex az = SpectralDecomp::modulus(z);
            return -az * std::exp(-t * az);
          },
          cp);
      const double sn = slice_norm(*d.grid, d.from_coords(dc).v);
      acc += g.t_weights[j] * g.t_nodes[j] * sn * sn;
    }
    const double ratio = std::sqrt(acc) / hn;
    out.samples.push_back(ratio);
    out.lo = std::min(out.lo, ratio);
    out.hi = std::max(out.hi, ratio);
  }
  return out;
}

}  // namespace hdbvp

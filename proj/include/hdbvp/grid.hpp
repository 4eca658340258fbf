// SPDX-License-Identifier: MIT
//
// Discretization backbone: periodic spatial lattice, logarithmic transversal
// node set with quadrature weights, Whitney regions, dyadic cubes, and the
// discrete L2 pairing. Everything here is immutable after construction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdbvp/fourier.hpp"

namespace hdbvp {

struct Grid {
  int n = 1;        // spatial dimension
  int m = 1;        // system size
  int N = 8;        // points per spatial axis (power of two)
  double L = 2.0 * M_PI;  // spatial period
  VectorXd t_nodes;       // strictly increasing, > 0
  VectorXd t_weights;     // quadrature weights for integrals in dt
  double c0 = 2.0;        // Whitney transversal opening, > 1
  double c1 = 1.0;        // Whitney ball factor, > 0

  int K() const { return static_cast<int>(t_nodes.size()); }
  long npts() const {
    long p = 1;
    for (int a = 0; a < n; ++a) p *= N;
    return p;
  }
  int comps() const { return (1 + n) * m; }
  double dx() const { return L / N; }
  double cell_measure() const { return std::pow(dx(), n); }
  double log_step() const {
    return K() > 1 ? std::log(t_nodes[1] / t_nodes[0]) : std::log(t_cell_hi(0) / t_cell_lo(0));
  }

  // Transversal cells: node j owns [cell_lo, cell_hi], geometric midpoints
  // between neighbours, closed at the ends by the first/last node itself.
  double t_cell_lo(int j) const {
    if (K() == 1) return degenerate_lo_;
    return j == 0 ? t_nodes[0] : std::sqrt(t_nodes[j - 1] * t_nodes[j]);
  }
  double t_cell_hi(int j) const {
    if (K() == 1) return degenerate_hi_;
    return j == K() - 1 ? t_nodes[j] : std::sqrt(t_nodes[j] * t_nodes[j + 1]);
  }

  // spatial helpers
  double coord(long p, int axis) const {
    for (int a = 0; a < axis; ++a) p /= N;
    return (p % N) * dx();
  }
  double periodic_dist(long p, long q) const {
    double acc = 0.0;
    for (int a = 0; a < n; ++a) {
      double d = std::fabs(coord(p, a) - coord(q, a));
      d = std::min(d, L - d);
      acc += d * d;
    }
    return std::sqrt(acc);
  }

  // Fourier mode data for flattened index p.
  double xi_component(long p, int axis) const {
    for (int a = 0; a < axis; ++a) p /= N;
    return 2.0 * M_PI * signed_freq(static_cast<int>(p % N), N) / L;
  }
  double xi_norm(long p) const {
    double acc = 0.0;
    for (int a = 0; a < n; ++a) {
      double x = xi_component(p, a);
      acc += x * x;
    }
    return std::sqrt(acc);
  }

  double degenerate_lo_ = 0.0, degenerate_hi_ = 0.0;  // K=1 bookkeeping
};

// Component layout of a field value: [normal block (m), tangential block (n*m)],
// component index c = i*m + alpha with i = 0 normal, i = 1..n tangential.
struct BoundaryField {
  MatrixXcd v;  // npts x comps
};

struct BulkField {
  std::vector<MatrixXcd> slice;  // K entries, each npts x comps
  int K() const { return static_cast<int>(slice.size()); }
};

struct DyadicCube {
  int level = 0;
  std::vector<int> corner;  // lattice index per axis
  double side = 0.0;        // = L * 2^-level
};

inline Grid make_grid(int n, int m, int N, double L, double t_min, double t_max, int K,
                      double c0 = 2.0, double c1 = 1.0) {
  if (n < 1 || m < 1 || N < 1 || K < 1) throw std::invalid_argument("make_grid: n,m,N,K must be >= 1");
  if (!is_power_of_two(N)) throw std::invalid_argument("make_grid: N must be a power of two");
  if (!(t_min > 0.0) || !(t_min < t_max)) throw std::invalid_argument("make_grid: need 0 < t_min < t_max");
  if (!(c0 > 1.0) || !(c1 > 0.0)) throw std::invalid_argument("make_grid: need c0 > 1 and c1 > 0");
  Grid g;
  g.n = n;
  g.m = m;
  g.N = N;
  g.L = L;
  g.c0 = c0;
  g.c1 = c1;
  g.t_nodes.resize(K);
  g.t_weights.resize(K);
  if (K == 1) {
    // Degenerate single-slice grid: node at the geometric midpoint, weight
    // t * ln(t_max/t_min), which keeps the dt/t integral of 1 exact.
    g.t_nodes[0] = std::sqrt(t_min * t_max);
    g.t_weights[0] = g.t_nodes[0] * std::log(t_max / t_min);
    g.degenerate_lo_ = t_min;
    g.degenerate_hi_ = t_max;
    return g;
  }
  const double step = std::log(t_max / t_min) / (K - 1);
  for (int j = 0; j < K; ++j) g.t_nodes[j] = t_min * std::exp(step * j);
  // trapezoid in log t: exact for integrals of dt/t
  for (int j = 0; j < K; ++j) {
    double w = (j == 0 || j == K - 1) ? 0.5 * step : step;
    g.t_weights[j] = g.t_nodes[j] * w;
  }
  return g;
}

inline bool same_layout(const Grid& a, const Grid& b) {
  return a.n == b.n && a.m == b.m && a.N == b.N && a.L == b.L && a.K() == b.K() &&
         (a.t_nodes - b.t_nodes).cwiseAbs().maxCoeff() == 0.0;
}

// ---------------------------------------------------------------------------
// Whitney regions

struct WhitneyRegion {
  std::vector<int> t_indices;    // nodes with t' in (t/c0, c0 t)
  std::vector<long> x_indices;   // lattice points with periodic dist < c1 t
  double volume_norm = 0.0;      // t^{1+n}
  bool coarse = false;           // ball radius below one lattice spacing
};

inline WhitneyRegion whitney_region_nothrow(const Grid& g, double t, long x) {
  WhitneyRegion w;
  w.volume_norm = std::pow(t, 1 + g.n);
  for (int j = 0; j < g.K(); ++j)
    if (g.t_nodes[j] > t / g.c0 && g.t_nodes[j] < g.c0 * t) w.t_indices.push_back(j);
  const double r = g.c1 * t;
  for (long p = 0; p < g.npts(); ++p)
    if (g.periodic_dist(p, x) < r) w.x_indices.push_back(p);
  w.coarse = (r < g.dx()) || w.t_indices.empty();
  return w;
}

inline WhitneyRegion whitney_region(const Grid& g, double t, long x) {
  WhitneyRegion w = whitney_region_nothrow(g, t, x);
  if (w.coarse) throw std::runtime_error("coarse Whitney region");
  return w;
}

// ---------------------------------------------------------------------------
// Dyadic cubes

inline std::vector<DyadicCube> dyadic_cubes(const Grid& g, int max_level) {
  const int lmax = static_cast<int>(std::round(std::log2(static_cast<double>(g.N))));
  if (max_level > lmax) throw std::invalid_argument("dyadic_cubes: max_level exceeds log2(N)");
  std::vector<DyadicCube> out;
  for (int lev = 0; lev <= max_level; ++lev) {
    const int per_axis = 1 << lev;
    const int cells = g.N / per_axis;  // lattice cells per cube side
    long count = 1;
    for (int a = 0; a < g.n; ++a) count *= per_axis;
    for (long idx = 0; idx < count; ++idx) {
      DyadicCube q;
      q.level = lev;
      q.side = g.L / per_axis;
      q.corner.resize(g.n);
      long rem = idx;
      for (int a = 0; a < g.n; ++a) {
        q.corner[a] = static_cast<int>(rem % per_axis) * cells;
        rem /= per_axis;
      }
      out.push_back(std::move(q));
    }
  }
  return out;
}

// Lattice points covered by a cube.
inline std::vector<long> cube_points(const Grid& g, const DyadicCube& q) {
  const int cells = static_cast<int>(std::round(q.side / g.dx()));
  std::vector<long> pts;
  long count = 1;
  for (int a = 0; a < g.n; ++a) count *= cells;
  pts.reserve(count);
  for (long idx = 0; idx < count; ++idx) {
    long rem = idx, p = 0, s = 1;
    for (int a = 0; a < g.n; ++a) {
      p += (q.corner[a] + rem % cells) * s;
      rem /= cells;
      s *= g.N;
    }
    pts.push_back(p);
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Discrete L2 pairing with cell measure (L/N)^n; conjugate-linear second slot.

inline Complex inner(const Grid& g, const BoundaryField& f, const BoundaryField& h) {
  if (f.v.rows() != h.v.rows() || f.v.cols() != h.v.cols())
    throw std::invalid_argument("inner: grid mismatch");
  Complex s = 0.0;
  for (long c = 0; c < f.v.cols(); ++c) s += h.v.col(c).dot(f.v.col(c));  // dot conjugates lhs
  return s * g.cell_measure();
}

inline double l2_norm(const Grid& g, const BoundaryField& f) {
  return std::sqrt(g.cell_measure()) * f.v.norm();
}

inline double slice_norm(const Grid& g, const MatrixXcd& slice) {
  return std::sqrt(g.cell_measure()) * slice.norm();
}

inline BoundaryField zero_boundary(const Grid& g) {
  return BoundaryField{MatrixXcd::Zero(g.npts(), g.comps())};
}

inline BulkField zero_bulk(const Grid& g) {
  BulkField f;
  f.slice.assign(g.K(), MatrixXcd::Zero(g.npts(), g.comps()));
  return f;
}

// Fourier transforms of whole fields (all components).
inline MatrixXcd to_modes(const Grid& g, const MatrixXcd& slice) {
  MatrixXcd out = slice;
  fft_lattice(out, g.n, g.N, false);
  return out;
}
inline MatrixXcd from_modes(const Grid& g, const MatrixXcd& modes) {
  MatrixXcd out = modes;
  fft_lattice(out, g.n, g.N, true);
  return out;
}

}  // namespace hdbvp

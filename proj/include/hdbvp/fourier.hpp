// SPDX-License-Identifier: MIT
//
// Radix-2 FFT on the periodic spatial lattice, plus Fourier mode bookkeeping.
// Convention: forward = analysis with 1/P normalization (coefficient series),
// inverse = synthesis, so that  u_j = sum_k c_k exp(+2*pi*i k.j / N).

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <vector>

namespace hdbvp {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

namespace detail {

// In-place radix-2 transform of a strided line. sign = -1 forward, +1 inverse.
inline void fft_line(Complex* data, int n, int stride, int sign) {
  // bit reversal
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i * stride], data[j * stride]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / len;
    const Complex wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      Complex w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        Complex u = data[(i + k) * stride];
        Complex v = data[(i + k + len / 2) * stride] * w;
        data[(i + k) * stride] = u + v;
        data[(i + k + len / 2) * stride] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace detail

// n-dimensional FFT over the N^n lattice stored row-major with axis 0 fastest.
// Transforms every column of `field` (points x components) independently.
inline void fft_lattice(MatrixXcd& field, int n, int N, bool inverse) {
  if (!is_power_of_two(N)) throw std::invalid_argument("fft_lattice: N must be a power of two");
  const long P = field.rows();
  long expect = 1;
  for (int a = 0; a < n; ++a) expect *= N;
  if (P != expect) throw std::invalid_argument("fft_lattice: row count mismatch");
  const int sign = inverse ? +1 : -1;
  for (long c = 0; c < field.cols(); ++c) {
    Complex* base = field.col(c).data();
    long stride = 1;
    for (int axis = 0; axis < n; ++axis) {
      const long nlines = P / N;
      for (long line = 0; line < nlines; ++line) {
        // index of the line start: fix all coordinates except `axis`
        long rem = line, start = 0, s = 1;
        for (int a = 0; a < n; ++a) {
          if (a == axis) { s *= N; continue; }
          start += (rem % N) * s;
          rem /= N;
          s *= N;
        }
        detail::fft_line(base + start, N, static_cast<int>(stride), sign);
      }
      stride *= N;
    }
    if (!inverse) field.col(c) /= static_cast<double>(P);
  }
}

// Signed integer frequency of lattice index k along one axis (Nyquist kept at +N/2).
inline int signed_freq(int k, int N) { return (k <= N / 2) ? k : k - N; }

// Integer frequency vector of flattened mode index p.
inline void freq_vector(long p, int n, int N, int* out) {
  for (int a = 0; a < n; ++a) {
    out[a] = signed_freq(static_cast<int>(p % N), N);
    p /= N;
  }
}

}  // namespace hdbvp

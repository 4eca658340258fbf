// SPDX-License-Identifier: MIT
//
// On-disk formats: binary bulk-field dumps ("HDBVP1 ..." header, little-endian
// float64 re/im pairs in t-major, component-minor order) and plain CSV export.

#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "hdbvp/grid.hpp"

namespace hdbvp {

inline void dump_field(const std::string& path, const Grid& g, const BulkField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("dump_field: cannot open " + path);
  char header[128];
  std::snprintf(header, sizeof(header), "HDBVP1 %d %d %d %d %.17g\n", g.n, g.m, g.N, g.K(), g.L);
  os << header;
  // t-major, point-major, component-minor
  for (int j = 0; j < f.K(); ++j)
    for (long p = 0; p < g.npts(); ++p)
      for (int c = 0; c < g.comps(); ++c) {
        double re = f.slice[j](p, c).real(), im = f.slice[j](p, c).imag();
        os.write(reinterpret_cast<const char*>(&re), sizeof(double));
        os.write(reinterpret_cast<const char*>(&im), sizeof(double));
      }
}

struct FieldDump {
  int n = 0, m = 0, N = 0, K = 0;
  double L = 0.0;
  BulkField field;
};

inline FieldDump load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_field: cannot open " + path);
  std::string header;
  std::getline(is, header);
  FieldDump d;
  char tag[16] = {0};
  if (std::sscanf(header.c_str(), "%7s %d %d %d %d %lg", tag, &d.n, &d.m, &d.N, &d.K, &d.L) != 6 ||
      std::string(tag) != "HDBVP1")
    throw std::runtime_error("load_field: bad header in " + path);
  long P = 1;
  for (int a = 0; a < d.n; ++a) P *= d.N;
  const int C = (1 + d.n) * d.m;
  d.field.slice.assign(d.K, MatrixXcd::Zero(P, C));
  for (int j = 0; j < d.K; ++j)
    for (long p = 0; p < P; ++p)
      for (int c = 0; c < C; ++c) {
        double re, im;
        is.read(reinterpret_cast<char*>(&re), sizeof(double));
        is.read(reinterpret_cast<char*>(&im), sizeof(double));
        if (!is) throw std::runtime_error("load_field: truncated file " + path);
        d.field.slice[j](p, c) = Complex(re, im);
      }
  return d;
}

inline void field_to_csv(const std::string& path, const Grid& g, const BulkField& f) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("field_to_csv: cannot open " + path);
  os << "t,x_index,component,re,im\n";
  char line[160];
  for (int j = 0; j < f.K(); ++j)
    for (long p = 0; p < g.npts(); ++p)
      for (int c = 0; c < g.comps(); ++c) {
        std::snprintf(line, sizeof(line), "%.17g,%ld,%d,%.17g,%.17g\n", g.t_nodes[j], p, c,
                      f.slice[j](p, c).real(), f.slice[j](p, c).imag());
        os << line;
      }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace hdbvp

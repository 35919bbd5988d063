#pragma once

// Test profiles with known analytic behaviour.

#include <cmath>

#include "mmwg/profile.hpp"

namespace mmwg::testing {

/// Slab of thickness `core` along y, extruded along x over `width`. Samples on
/// the core interface carry the mean of n1^2 and n2^2.
inline IndexProfile slab_profile(double core, double n1, double n2, double margin, double width, double step,
                                 double wavelength = 0.85) {
  const int ny = int(std::lround((core + 2 * margin) / step)) + 1;
  const int nx = int(std::lround(width / step)) + 1;
  const int cy = (ny - 1) / 2;
  Grid2D g{-width / 2, -cy * step, step, step, nx, ny};
  Eigen::VectorXd v(g.size());
  for (int iy = 0; iy < ny; ++iy) {
    const double y = std::abs((iy - cy) * step);
    double n2v = y < core / 2 - 1e-9 ? n1 * n1 : n2 * n2;
    if (std::abs(y - core / 2) <= 1e-9) n2v = 0.5 * (n1 * n1 + n2 * n2);
    for (int ix = 0; ix < nx; ++ix) v[g.flat(ix, iy)] = std::sqrt(n2v);
  }
  return IndexProfile(g, v, wavelength);
}

/// Unbounded parabolic profile n^2 = n0^2 - s^2 r^2 over a square window.
inline IndexProfile parabolic_profile(double n0, double s, double half_window, double step,
                                      double wavelength = 0.85) {
  const int n = 2 * int(std::lround(half_window / step)) + 1;
  const int c = (n - 1) / 2;
  Grid2D g{-c * step, -c * step, step, step, n, n};
  Eigen::VectorXd v(g.size());
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double x = (ix - c) * step;
      const double y = (iy - c) * step;
      v[g.flat(ix, iy)] = std::sqrt(n0 * n0 - s * s * (x * x + y * y));
    }
  return IndexProfile(g, v, wavelength);
}

/// Rectangular step-index channel centred on the origin.
inline IndexProfile step_channel(double width, double height, double n1, double n2, double margin, double step,
                                 double wavelength = 0.85) {
  const int nx = 2 * int(std::lround((width / 2 + margin) / step)) + 1;
  const int ny = 2 * int(std::lround((height / 2 + margin) / step)) + 1;
  const int cx = (nx - 1) / 2;
  const int cy = (ny - 1) / 2;
  Grid2D g{-cx * step, -cy * step, step, step, nx, ny};
  Eigen::VectorXd v(g.size());
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const bool core = std::abs((ix - cx) * step) < width / 2 && std::abs((iy - cy) * step) < height / 2;
      v[g.flat(ix, iy)] = core ? n1 : n2;
    }
  return IndexProfile(g, v, wavelength);
}

}  // namespace mmwg::testing

#pragma once

// Scalar finite-difference mode solver for 2D index profiles.
//
// The 5-point Helmholtz operator A = d2/dx2 + d2/dy2 + k0^2 n^2 acts on the
// interior samples; the window edge is held at zero. Guided modes are the
// eigenpairs A E = beta^2 E with beta/k0 above the cladding index. They are
// extracted with block Lanczos on (sigma - A)^-1, sigma = (k0 n_max)^2.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmwg/error.hpp"
#include "mmwg/format.hpp"
#include "mmwg/krylov.hpp"
#include "mmwg/profile.hpp"

namespace mmwg {

struct ModeSolverOptions {
  double guided_epsilon = 1e-5;       ///< n_eff must exceed n_clad by this much
  bool check_window_clipping = true;  ///< reject windows that truncate the fundamental
  double clipping_threshold = 1e-6;   ///< edge-ring |E| relative to peak
  double material_dn_dlambda = 0.0;   ///< uniform material dispersion, 1/um
  KrylovOptions krylov{};
};

struct WaveguideMode {
  double n_eff = 0.0;
  int index = 0;                  ///< ordinal, descending n_eff
  std::optional<double> n_group;  ///< filled by group_indices
  double residual = 0.0;          ///< ||A E - beta^2 E|| / ||beta^2 E||
  double centroid_y = 0.0;        ///< of |E|^2, um
};

/// Guided modes of one profile at one wavelength. Column i of `fields` is the
/// field of modes[i], normalised so that sum(E^2) dx dy = 1.
struct WaveguideModeSet {
  Grid2D grid{};
  double wavelength_um = 0.0;
  double n_clad = 0.0;
  std::vector<WaveguideMode> modes;
  Eigen::MatrixXd fields;

  [[nodiscard]] std::size_t size() const { return modes.size(); }
  [[nodiscard]] bool empty() const { return modes.empty(); }
  [[nodiscard]] auto field(std::size_t i) const { return fields.col(Eigen::Index(i)); }
  [[nodiscard]] bool has_group_indices() const {
    return std::all_of(modes.begin(), modes.end(), [](const auto& m) { return m.n_group.has_value(); });
  }
  [[nodiscard]] std::vector<double> n_groups() const {
    std::vector<double> out;
    out.reserve(modes.size());
    for (const auto& m : modes) {
      if (!m.n_group) throw ValidationError("mode set has no group indices");
      out.push_back(*m.n_group);
    }
    return out;
  }
};

/// Discrete Helmholtz operator on the interior (nx-2)(ny-2) samples.
inline Eigen::SparseMatrix<double> helmholtz_operator(const IndexProfile& p, double k0) {
  const auto& g = p.grid();
  const int mx = g.nx - 2;
  const int my = g.ny - 2;
  if (mx <= 0 || my <= 0) throw ValidationError("solve_modes: window has no interior samples");
  const double cx = 1.0 / (g.dx * g.dx);
  const double cy = 1.0 / (g.dy * g.dy);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(std::size_t(mx) * my * 5);
  const auto id = [mx](int ix, int iy) { return iy * mx + ix; };
  for (int iy = 0; iy < my; ++iy) {
    for (int ix = 0; ix < mx; ++ix) {
      const double n = p.at(ix + 1, iy + 1);
      const int k = id(ix, iy);
      trip.emplace_back(k, k, -2 * cx - 2 * cy + k0 * k0 * n * n);
      if (ix > 0) trip.emplace_back(k, id(ix - 1, iy), cx);
      if (ix + 1 < mx) trip.emplace_back(k, id(ix + 1, iy), cx);
      if (iy > 0) trip.emplace_back(k, id(ix, iy - 1), cy);
      if (iy + 1 < my) trip.emplace_back(k, id(ix, iy + 1), cy);
    }
  }
  Eigen::SparseMatrix<double> a(mx * my, mx * my);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

namespace detail {

inline IndexProfile profile_at_wavelength(const IndexProfile& p, double wavelength, const ModeSolverOptions& opt) {
  if (opt.material_dn_dlambda == 0.0) return p;
  return p.shifted(opt.material_dn_dlambda * (wavelength - p.wavelength_ref()));
}

/// Core solver: modes with n_eff > n_threshold, at most max_modes of them.
inline WaveguideModeSet solve_modes_above(const IndexProfile& profile, double wavelength, int max_modes,
                                          double n_threshold, const ModeSolverOptions& opt, bool check_clip) {
  if (!(wavelength > 0) || !std::isfinite(wavelength)) throw ValidationError("solve_modes: wavelength must be positive");
  if (max_modes < 0) throw ValidationError("solve_modes: max_modes must be non-negative");
  const auto& g = profile.grid();
  WaveguideModeSet set;
  set.grid = g;
  set.wavelength_um = wavelength;
  set.n_clad = profile.cladding_index();
  set.fields.resize(g.size(), 0);

  const double k0 = 2 * M_PI / wavelength;
  const double n_max = profile.max_index();
  if (n_max <= n_threshold || max_modes == 0) return set;

  const Eigen::SparseMatrix<double> a = helmholtz_operator(profile, k0);
  const double sigma = k0 * k0 * n_max * n_max;
  Eigen::SparseMatrix<double> shifted = -a;
  for (Eigen::Index k = 0; k < shifted.rows(); ++k) shifted.coeffRef(k, k) += sigma;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(shifted);
  if (llt.info() != Eigen::Success) throw NumericalError("solve_modes: factorisation of shifted operator failed");

  const double lambda_min = k0 * k0 * n_threshold * n_threshold;
  const double theta_min = 1.0 / (sigma - lambda_min);
  const BlockOperator op = [&llt](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) { out = llt.solve(in); };
  const KrylovResult kr = block_lanczos_largest(op, a.rows(), max_modes, theta_min, opt.krylov);

  const int mx = g.nx - 2;
  const double scale = 1.0 / std::sqrt(g.cell_area());
  struct Found {
    double n_eff;
    double centroid_y;
    double residual;
    Eigen::VectorXd field;
  };
  std::vector<Found> found;
  for (Eigen::Index k = 0; k < kr.values.size(); ++k) {
    const double beta2 = sigma - 1.0 / kr.values[k];
    if (!(beta2 > 0)) continue;
    const double n_eff = std::sqrt(beta2) / k0;
    if (!(n_eff > n_threshold)) continue;
    const Eigen::VectorXd v = kr.vectors.col(k).normalized();
    const double resid = (a * v - beta2 * v).norm() / std::abs(beta2);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(g.size());
    for (Eigen::Index q = 0; q < v.size(); ++q) {
      const int ix = int(q % mx) + 1;
      const int iy = int(q / mx) + 1;
      e[g.flat(ix, iy)] = v[q] * scale;
    }
    Eigen::Index imax = 0;
    e.cwiseAbs().maxCoeff(&imax);
    if (e[imax] < 0) e = -e;
    double wsum = 0.0;
    double ysum = 0.0;
    for (int iy = 0; iy < g.ny; ++iy) {
      const double row = e.segment(Eigen::Index(iy) * g.nx, g.nx).squaredNorm();
      wsum += row;
      ysum += row * g.y(iy);
    }
    found.push_back({n_eff, ysum / wsum, resid, std::move(e)});
  }
  std::stable_sort(found.begin(), found.end(), [](const Found& l, const Found& r) {
    if (std::abs(l.n_eff - r.n_eff) > 1e-12) return l.n_eff > r.n_eff;
    return l.centroid_y > r.centroid_y;
  });

  set.fields.resize(g.size(), Eigen::Index(found.size()));
  for (std::size_t i = 0; i < found.size(); ++i) {
    WaveguideMode m;
    m.n_eff = found[i].n_eff;
    m.index = int(i);
    m.residual = found[i].residual;
    m.centroid_y = found[i].centroid_y;
    set.modes.push_back(m);
    set.fields.col(Eigen::Index(i)) = found[i].field;
  }

  if (check_clip && !set.empty()) {
    const auto f = set.field(0);
    const double peak = f.cwiseAbs().maxCoeff();
    double edge = 0.0;
    for (int ix = 1; ix < g.nx - 1; ++ix) {
      edge = std::max({edge, std::abs(f[g.flat(ix, 1)]), std::abs(f[g.flat(ix, g.ny - 2)])});
    }
    for (int iy = 1; iy < g.ny - 1; ++iy) {
      edge = std::max({edge, std::abs(f[g.flat(1, iy)]), std::abs(f[g.flat(g.nx - 2, iy)])});
    }
    if (edge > opt.clipping_threshold * peak) {
      throw ValidationError("solve_modes: window clipping (fundamental field at window edge is " +
                            format_double(edge / peak) + " of its peak)");
    }
  }
  return set;
}

}  // namespace detail

/// All guided modes (n_eff > n_clad + epsilon), strongest first, at most max_modes.
inline WaveguideModeSet solve_modes(const IndexProfile& profile, double wavelength_um, int max_modes,
                                    const ModeSolverOptions& opt = {}) {
  const IndexProfile p = detail::profile_at_wavelength(profile, wavelength_um, opt);
  return detail::solve_modes_above(p, wavelength_um, max_modes, p.cladding_index() + opt.guided_epsilon, opt,
                                   opt.check_window_clipping);
}

/// Overlap integrals sum(E_a E_b) dx dy between every pair of modes.
inline Eigen::MatrixXd mode_overlaps(const WaveguideModeSet& a, const WaveguideModeSet& b) {
  if (!a.grid.compatible(b.grid)) throw ValidationError("mode sets are on different grids");
  return (a.fields.transpose() * b.fields) * a.grid.cell_area();
}

/// Greedy maximum-|overlap| pairing. Entry i is the position in `b` of the mode
/// matching a.modes[i]. Every mode of `a` must find a partner with
/// |<E_a, E_b>|^2 >= 0.5.
inline std::vector<int> match_modes(const WaveguideModeSet& a, const WaveguideModeSet& b) {
  const Eigen::MatrixXd ov = mode_overlaps(a, b).cwiseAbs2();
  struct Cand {
    double w;
    int i;
    int j;
  };
  std::vector<Cand> cands;
  for (int i = 0; i < int(a.size()); ++i)
    for (int j = 0; j < int(b.size()); ++j)
      if (ov(i, j) >= 0.5) cands.push_back({ov(i, j), i, j});
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& l, const Cand& r) { return l.w > r.w; });
  std::vector<int> map(a.size(), -1);
  std::vector<bool> used(b.size(), false);
  for (const auto& c : cands) {
    if (map[std::size_t(c.i)] >= 0 || used[std::size_t(c.j)]) continue;
    map[std::size_t(c.i)] = c.j;
    used[std::size_t(c.j)] = true;
  }
  std::string missing;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] < 0) missing += (missing.empty() ? "" : ", ") + std::to_string(i);
  }
  if (!missing.empty()) throw NumericalError("match_modes: unmatched mode(s) " + missing);
  return map;
}

/// Group indices n_g = n_eff - lambda0 dn_eff/dlambda by central differences.
/// Modes at lambda0 +- dlambda are paired to the reference set by field overlap.
inline WaveguideModeSet group_indices(const IndexProfile& profile, double lambda0_um, double dlambda_um,
                                      WaveguideModeSet modeset, const ModeSolverOptions& opt = {}) {
  if (!(dlambda_um > 0)) throw ValidationError("group_indices: delta lambda must be positive");
  if (!(lambda0_um > dlambda_um)) throw ValidationError("group_indices: wavelength must exceed delta lambda");
  if (modeset.empty()) return modeset;

  // Neighbouring solves reach below the cut-off so that modes close to it at
  // lambda0 are still present after the shift.
  const double margin = 1e-4 + std::abs(opt.material_dn_dlambda) * dlambda_um;
  const int wanted = int(modeset.size()) + 8;
  const auto neighbour = [&](double lam) {
    const IndexProfile p = detail::profile_at_wavelength(profile, lam, opt);
    auto s = detail::solve_modes_above(p, lam, wanted, p.cladding_index() + opt.guided_epsilon - margin, opt, false);
    if (!s.grid.compatible(modeset.grid)) throw ValidationError("group_indices: profile grid differs from mode set");
    return s;
  };
  const WaveguideModeSet plus = neighbour(lambda0_um + dlambda_um);
  const WaveguideModeSet minus = neighbour(lambda0_um - dlambda_um);

  std::vector<int> map_plus;
  std::vector<int> map_minus;
  try {
    map_plus = match_modes(modeset, plus);
    map_minus = match_modes(modeset, minus);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("group_indices: unresolved branch; ") + e.what());
  }
  for (std::size_t i = 0; i < modeset.size(); ++i) {
    const double np = plus.modes[std::size_t(map_plus[i])].n_eff;
    const double nm = minus.modes[std::size_t(map_minus[i])].n_eff;
    modeset.modes[i].n_group = modeset.modes[i].n_eff - lambda0_um * (np - nm) / (2 * dlambda_um);
  }
  return modeset;
}

/// Mode-set CSV: mode_index,n_eff,n_group (n_group blank until computed).
inline void write_modeset_csv(std::ostream& out, const WaveguideModeSet& s) {
  out << "mode_index,n_eff,n_group\n";
  for (const auto& m : s.modes) {
    out << m.index << ',' << format_double(m.n_eff) << ',';
    if (m.n_group) out << format_double(*m.n_group);
    out << '\n';
  }
}

}  // namespace mmwg

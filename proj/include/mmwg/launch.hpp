#pragma once

// Launch conditions and overlap-integral coupling into waveguide modes.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "mmwg/error.hpp"
#include "mmwg/fibermodes.hpp"
#include "mmwg/format.hpp"
#include "mmwg/modesolver.hpp"
#include "mmwg/profile.hpp"

namespace mmwg {

/// Power per mode. Entries are non-negative and sum to at most one.
class ModePowerDistribution {
 public:
  ModePowerDistribution() = default;
  explicit ModePowerDistribution(std::vector<double> p) : p_(std::move(p)) {
    double sum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("mode power distribution: negative or non-finite entry");
      sum += v;
    }
    if (sum > 1.0 + 1e-9) throw ValidationError("mode power distribution: total power exceeds one");
  }

  [[nodiscard]] const std::vector<double>& powers() const { return p_; }
  [[nodiscard]] std::size_t size() const { return p_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return p_[i]; }
  [[nodiscard]] double total() const { return std::accumulate(p_.begin(), p_.end(), 0.0); }

 private:
  std::vector<double> p_;
};

enum class MpdPreset { NoModeMixer, ModeMixer };

/// Highest principal mode number carrying power under each preset.
inline int preset_pmn_cutoff(MpdPreset k) { return k == MpdPreset::NoModeMixer ? 15 : 22; }

inline MpdPreset parse_mpd_preset(const std::string& s) {
  if (s == "no_mm") return MpdPreset::NoModeMixer;
  if (s == "mm") return MpdPreset::ModeMixer;
  throw ValidationError("unknown MPD preset '" + s + "' (expected no_mm or mm)");
}

/// Equal power in every fibre mode with PMN at or below the preset cut-off.
inline ModePowerDistribution mpd_preset(MpdPreset kind, const FiberModeSet& fibre) {
  const int cutoff = preset_pmn_cutoff(kind);
  const auto included =
      std::count_if(fibre.modes.begin(), fibre.modes.end(), [&](const FiberMode& m) { return m.pmn <= cutoff; });
  if (included == 0) throw ValidationError("mpd_preset: no fibre modes under the PMN cut-off");
  std::vector<double> p(fibre.size(), 0.0);
  for (std::size_t j = 0; j < fibre.size(); ++j)
    if (fibre.modes[j].pmn <= cutoff) p[j] = 1.0 / double(included);
  return ModePowerDistribution(std::move(p));
}

/// c(i, j): power fraction coupled from launch field j into waveguide mode i.
class CouplingMatrix {
 public:
  CouplingMatrix() = default;
  explicit CouplingMatrix(Eigen::MatrixXd c) : c_(std::move(c)) {
    for (Eigen::Index k = 0; k < c_.size(); ++k) {
      double& v = c_.data()[k];
      if (!(v >= 0.0) || v > 1.0 + 1e-9) throw ValidationError("coupling matrix entry outside [0, 1]");
      v = std::min(v, 1.0);
    }
  }
  [[nodiscard]] const Eigen::MatrixXd& values() const { return c_; }
  [[nodiscard]] Eigen::Index rows() const { return c_.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return c_.cols(); }
  [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return c_(i, j); }

 private:
  Eigen::MatrixXd c_;
};

struct GaussianLaunch {
  double fwhm_um = 4.0;  ///< FWHM of |E|^2
};

struct FiberLaunch {
  std::shared_ptr<const FiberModeSet> fibre;
  ModePowerDistribution mpd;
};

struct LaunchSpec {
  std::variant<GaussianLaunch, FiberLaunch> kind = GaussianLaunch{};
  Offset offset{};

  [[nodiscard]] bool is_gaussian() const { return std::holds_alternative<GaussianLaunch>(kind); }
  /// Power carried by each launch basis field.
  [[nodiscard]] std::vector<double> basis_powers() const {
    if (is_gaussian()) return {1.0};
    return std::get<FiberLaunch>(kind).mpd.powers();
  }
};

/// 1/e field radius of a Gaussian beam whose intensity FWHM is `fwhm`.
inline double gaussian_waist(double fwhm) { return fwhm / std::sqrt(2 * std::log(2.0)); }

/// E = sqrt(2 / (pi w^2)) exp(-r^2 / w^2); analytically normalised to unit power.
inline Eigen::VectorXd gaussian_field(double fwhm_um, Offset offset, const Grid2D& grid) {
  if (!(fwhm_um > 0)) throw ValidationError("gaussian_field: fwhm must be positive");
  if (fwhm_um < 8 * std::max(grid.dx, grid.dy)) {
    throw ValidationError("gaussian_field: grid under-resolves the beam (fewer than 8 samples per FWHM)");
  }
  const double w = gaussian_waist(fwhm_um);
  const double amp = std::sqrt(2 / (M_PI * w * w));
  Eigen::VectorXd e(grid.size());
  for (int iy = 0; iy < grid.ny; ++iy) {
    const double dy = grid.y(iy) - offset.y;
    for (int ix = 0; ix < grid.nx; ++ix) {
      const double dx = grid.x(ix) - offset.x;
      e[grid.flat(ix, iy)] = amp * std::exp(-(dx * dx + dy * dy) / (w * w));
    }
  }
  return e;
}

/// Fibre mode fields sampled on the grid, one column per mode, about `offset`.
inline Eigen::MatrixXd fiber_fields(const FiberModeSet& fibre, Offset offset, const Grid2D& grid) {
  if (!grid.contains(offset.x, offset.y)) {
    throw ValidationError("coupling: launch offset (" + format_double(offset.x) + ", " + format_double(offset.y) +
                          ") lies outside the waveguide window");
  }
  const Eigen::Index np = grid.size();
  int max_m = 0;
  for (const auto& md : fibre.modes) max_m = std::max(max_m, md.m);

  Eigen::VectorXd r(np);
  Eigen::MatrixXd cosm(np, max_m + 1);
  Eigen::MatrixXd sinm(np, max_m + 1);
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const Eigen::Index k = grid.flat(ix, iy);
      const double dx = grid.x(ix) - offset.x;
      const double dy = grid.y(iy) - offset.y;
      const double rr = std::hypot(dx, dy);
      r[k] = rr;
      const double c1 = rr > 0 ? dx / rr : 1.0;
      const double s1 = rr > 0 ? dy / rr : 0.0;
      cosm(k, 0) = 1.0;
      sinm(k, 0) = 0.0;
      for (int m = 1; m <= max_m; ++m) {
        cosm(k, m) = cosm(k, m - 1) * c1 - sinm(k, m - 1) * s1;
        sinm(k, m) = sinm(k, m - 1) * c1 + cosm(k, m - 1) * s1;
      }
    }
  }

  Eigen::MatrixXd out(np, Eigen::Index(fibre.size()));
  std::map<const RadialTable*, Eigen::VectorXd> radial_cache;
  for (std::size_t j = 0; j < fibre.size(); ++j) {
    const auto& md = fibre.modes[j];
    auto it = radial_cache.find(md.radial.get());
    if (it == radial_cache.end()) {
      Eigen::VectorXd rv(np);
      for (Eigen::Index k = 0; k < np; ++k) rv[k] = (*md.radial)(r[k]);
      it = radial_cache.emplace(md.radial.get(), std::move(rv)).first;
    }
    const auto& ang = md.orientation == Orientation::Cos ? cosm : sinm;
    out.col(Eigen::Index(j)) = it->second.cwiseProduct(ang.col(md.m));
  }
  return out;
}

/// Launch basis fields on the grid (one column for a Gaussian launch).
inline Eigen::MatrixXd launch_fields(const LaunchSpec& launch, const Grid2D& grid) {
  if (const auto* g = std::get_if<GaussianLaunch>(&launch.kind)) {
    return gaussian_field(g->fwhm_um, launch.offset, grid);
  }
  const auto& f = std::get<FiberLaunch>(launch.kind);
  if (!f.fibre) throw ValidationError("fibre launch without a fibre mode set");
  return fiber_fields(*f.fibre, launch.offset, grid);
}

/// |sum E_w E_l dA|^2 / (sum |E_w|^2 dA * sum |E_l|^2 dA) by grid quadrature.
inline double coupling_coefficient(const Eigen::Ref<const Eigen::VectorXd>& e_w,
                                   const Eigen::Ref<const Eigen::VectorXd>& e_l, double cell_area = 1.0) {
  if (e_w.size() != e_l.size()) throw ValidationError("coupling_coefficient: fields are on different grids");
  const double ww = e_w.squaredNorm() * cell_area;
  const double ll = e_l.squaredNorm() * cell_area;
  if (!(ww > 0) || !(ll > 0)) throw ValidationError("coupling_coefficient: zero-energy field");
  const double ov = e_w.dot(e_l) * cell_area;
  return std::min(ov * ov / (ww * ll), 1.0);
}

/// Coupling of every waveguide mode to precomputed launch fields. Each launch
/// field is normalised by the larger of its unit analytic power and its grid
/// power: light falling outside the window counts as lost, and Bessel's
/// inequality keeps every column sum at or below one.
inline CouplingMatrix coupling_matrix_from_fields(const WaveguideModeSet& modes, const Eigen::MatrixXd& fields) {
  if (fields.rows() != modes.grid.size()) throw ValidationError("coupling: launch fields are on a different grid");
  const double da = modes.grid.cell_area();
  const Eigen::MatrixXd ov = (modes.fields.transpose() * fields) * da;
  Eigen::MatrixXd c = ov.cwiseAbs2();
  for (Eigen::Index j = 0; j < fields.cols(); ++j) {
    const double norm = std::max(1.0, fields.col(j).squaredNorm() * da);
    c.col(j) /= norm;
  }
  return CouplingMatrix(c.cwiseMin(1.0));
}

inline CouplingMatrix coupling_matrix(const WaveguideModeSet& modes, const LaunchSpec& launch) {
  return coupling_matrix_from_fields(modes, launch_fields(launch, modes.grid));
}

struct WaveguidePower {
  ModePowerDistribution mpd;
  double coupling_efficiency = 0.0;  ///< sum over waveguide modes
};

/// p_w(i) = sum_j c(i, j) p_f(j).
inline WaveguidePower waveguide_mpd(const CouplingMatrix& c, const ModePowerDistribution& p_f) {
  if (std::size_t(c.cols()) != p_f.size()) {
    throw ValidationError("waveguide_mpd: coupling matrix has " + std::to_string(c.cols()) + " columns but MPD has " +
                          std::to_string(p_f.size()) + " entries");
  }
  const Eigen::VectorXd pf = Eigen::Map<const Eigen::VectorXd>(p_f.powers().data(), Eigen::Index(p_f.size()));
  const Eigen::VectorXd pw = c.values() * pf;
  std::vector<double> out(pw.data(), pw.data() + pw.size());
  ModePowerDistribution mpd(std::move(out));
  const double eff = mpd.total();
  return {std::move(mpd), eff};
}

/// MPD CSV: mode_index,power.
inline void write_mpd_csv(std::ostream& out, const ModePowerDistribution& p) {
  out << "mode_index,power\n";
  for (std::size_t i = 0; i < p.size(); ++i) out << i << ',' << format_double(p[i]) << '\n';
}

}  // namespace mmwg

#pragma once

// Refractive-index profiles: sampled 2D maps for waveguides and the
// power-law radial model used for the launch fibre.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mmwg/error.hpp"
#include "mmwg/format.hpp"

namespace mmwg {

/// Lateral position in micrometres.
struct Offset {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Uniform rectangular sampling. Row iy holds y = y0 + iy*dy, column ix
/// holds x = x0 + ix*dx; flat storage is row-major (iy*nx + ix).
struct Grid2D {
  double x0 = 0.0;
  double y0 = 0.0;
  double dx = 1.0;
  double dy = 1.0;
  int nx = 0;
  int ny = 0;

  [[nodiscard]] double x(int ix) const { return x0 + ix * dx; }
  [[nodiscard]] double y(int iy) const { return y0 + iy * dy; }
  [[nodiscard]] Eigen::Index size() const { return Eigen::Index(nx) * ny; }
  [[nodiscard]] Eigen::Index flat(int ix, int iy) const { return Eigen::Index(iy) * nx + ix; }
  [[nodiscard]] double cell_area() const { return dx * dy; }
  [[nodiscard]] double x_max() const { return x(nx - 1); }
  [[nodiscard]] double y_max() const { return y(ny - 1); }
  [[nodiscard]] bool contains(double px, double py) const {
    return px >= x0 && px <= x_max() && py >= y0 && py <= y_max();
  }

  /// Same shape and spacing; origins may differ by rounding noise only.
  [[nodiscard]] bool compatible(const Grid2D& o) const {
    const auto close = [](double a, double b, double s) { return std::abs(a - b) <= 1e-9 * s; };
    return nx == o.nx && ny == o.ny && close(dx, o.dx, dx) && close(dy, o.dy, dy) &&
           close(x0, o.x0, dx) && close(y0, o.y0, dy);
  }
};

/// 2D sampled refractive index n(x, y) stated at a reference wavelength.
class IndexProfile {
 public:
  IndexProfile() = default;

  IndexProfile(Grid2D grid, Eigen::VectorXd index, double wavelength_ref_um)
      : grid_(grid), index_(std::move(index)), wavelength_ref_(wavelength_ref_um) {
    if (!(grid_.dx > 0.0) || !(grid_.dy > 0.0)) throw ValidationError("profile: dx and dy must be positive");
    if (grid_.nx <= 0 || grid_.ny <= 0) throw ValidationError("profile: empty grid");
    if (index_.size() != grid_.size()) throw ValidationError("profile: sample count does not match grid");
    for (Eigen::Index k = 0; k < index_.size(); ++k) {
      const double v = index_[k];
      if (!std::isfinite(v) || v < 1.0 || v > 3.0) {
        throw ValidationError("profile: index " + format_double(v) + " out of [1.0, 3.0] at sample " +
                              std::to_string(k));
      }
    }
    if (!(wavelength_ref_ > 0.0) || !std::isfinite(wavelength_ref_)) {
      throw ValidationError("profile: wavelength must be positive");
    }
  }

  [[nodiscard]] const Grid2D& grid() const { return grid_; }
  [[nodiscard]] const Eigen::VectorXd& values() const { return index_; }
  [[nodiscard]] double wavelength_ref() const { return wavelength_ref_; }
  [[nodiscard]] double at(int ix, int iy) const { return index_[grid_.flat(ix, iy)]; }
  [[nodiscard]] double max_index() const { return index_.maxCoeff(); }
  [[nodiscard]] double min_index() const { return index_.minCoeff(); }

  /// Cladding reference: the lowest index found on the window boundary.
  [[nodiscard]] double cladding_index() const {
    double m = std::numeric_limits<double>::infinity();
    for (int ix = 0; ix < grid_.nx; ++ix) m = std::min({m, at(ix, 0), at(ix, grid_.ny - 1)});
    for (int iy = 0; iy < grid_.ny; ++iy) m = std::min({m, at(0, iy), at(grid_.nx - 1, iy)});
    return m;
  }

  /// Location of the maximum sample (first in row-major order on ties).
  [[nodiscard]] Offset peak_location() const {
    Eigen::Index k = 0;
    index_.maxCoeff(&k);
    return {grid_.x(int(k % grid_.nx)), grid_.y(int(k / grid_.nx))};
  }

  /// Bilinear interpolation; clamps to the window.
  [[nodiscard]] double index_at(double x, double y) const {
    const double fx = std::clamp((x - grid_.x0) / grid_.dx, 0.0, double(grid_.nx - 1));
    const double fy = std::clamp((y - grid_.y0) / grid_.dy, 0.0, double(grid_.ny - 1));
    const int ix = std::min(int(fx), std::max(grid_.nx - 2, 0));
    const int iy = std::min(int(fy), std::max(grid_.ny - 2, 0));
    const double tx = grid_.nx > 1 ? fx - ix : 0.0;
    const double ty = grid_.ny > 1 ? fy - iy : 0.0;
    const int ix1 = std::min(ix + 1, grid_.nx - 1);
    const int iy1 = std::min(iy + 1, grid_.ny - 1);
    return (1 - tx) * (1 - ty) * at(ix, iy) + tx * (1 - ty) * at(ix1, iy) + (1 - tx) * ty * at(ix, iy1) +
           tx * ty * at(ix1, iy1);
  }

  /// Uniform material shift, used for a linear dn/dlambda model.
  [[nodiscard]] IndexProfile shifted(double delta_n) const {
    return IndexProfile(grid_, (index_.array() + delta_n).matrix(), wavelength_ref_);
  }

 private:
  Grid2D grid_{};
  Eigen::VectorXd index_{};
  double wavelength_ref_ = 1.0;
};

// ---------------------------------------------------------------------------
// CSV grid format
//
//   # x0,y0,dx,dy,wavelength_um
//   n(x0, y0), n(x0+dx, y0), ...
//   n(x0, y0+dy), ...

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline IndexProfile parse_profile_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source + ": empty profile file");
  std::string_view header = trim(line);
  if (header.empty() || header.front() != '#') throw ValidationError(source + ": malformed header (missing '#')");
  header.remove_prefix(1);
  const auto fields = detail::split_commas(header);
  if (fields.size() != 5) throw ValidationError(source + ": malformed header (expected x0,y0,dx,dy,wavelength_um)");
  double h[5];
  for (int i = 0; i < 5; ++i) {
    const auto v = parse_double(fields[std::size_t(i)]);
    if (!v || !std::isfinite(*v)) throw ValidationError(source + ": malformed header field " + std::to_string(i + 1));
    h[i] = *v;
  }

  std::vector<double> values;
  int nx = -1;
  int ny = 0;
  while (std::getline(in, line)) {
    const auto row = trim(line);
    if (row.empty()) continue;
    const auto cells = detail::split_commas(row);
    if (nx < 0) nx = int(cells.size());
    if (int(cells.size()) != nx) {
      throw ValidationError(source + ": non-rectangular grid (row " + std::to_string(ny + 1) + " has " +
                            std::to_string(cells.size()) + " columns, expected " + std::to_string(nx) + ")");
    }
    for (const auto c : cells) {
      const auto v = parse_double(c);
      if (!v) throw ValidationError(source + ": unparsable value in row " + std::to_string(ny + 1));
      values.push_back(*v);
    }
    ++ny;
  }
  if (ny == 0) throw ValidationError(source + ": profile has no data rows");
  Grid2D g{h[0], h[1], h[2], h[3], nx, ny};
  return IndexProfile(g, Eigen::Map<Eigen::VectorXd>(values.data(), Eigen::Index(values.size())), h[4]);
}

inline IndexProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open profile file: " + path);
  return parse_profile_csv(in, path);
}

/// Writes any grid-shaped array in the profile CSV layout (also used for field dumps).
inline void write_grid_csv(std::ostream& out, const Grid2D& g, const Eigen::VectorXd& v, double wavelength_um) {
  out << "# " << format_double(g.x0) << ',' << format_double(g.y0) << ',' << format_double(g.dx) << ','
      << format_double(g.dy) << ',' << format_double(wavelength_um) << '\n';
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      if (ix) out << ',';
      out << format_double(v[g.flat(ix, iy)]);
    }
    out << '\n';
  }
}

inline void save_profile(const IndexProfile& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write profile file: " + path);
  write_grid_csv(out, p.grid(), p.values(), p.wavelength_ref());
}

// ---------------------------------------------------------------------------
// Synthetic graded-index channel

/// Power-law exponents of the normalised grading g(x, y) = gx(x) * gy(y).
/// Each factor is 1 - (distance from peak / distance from peak to core edge)^p,
/// zero outside the core, so g is continuous and peaks at exactly 1.
struct GradingShape {
  double exponent_x = 2.0;
  double exponent_below = 2.0;  ///< from the peak down to the lower core edge
  double exponent_above = 2.0;  ///< from the peak up to the upper core edge
};

struct SyntheticProfileParams {
  double core_width_um = 35.0;
  double core_height_um = 35.0;
  double n_clad = 1.51;
  double delta_n = 0.01;
  Offset peak{0.0, 10.0};
  GradingShape shape{};
  double step_um = 0.25;
  double padding_um = 15.0;
  double wavelength_ref_um = 0.85;
};

namespace detail {

inline double grading_factor(double s, double peak, double half, double exp_lo, double exp_hi) {
  if (s < -half || s > half) return 0.0;
  const double d = s - peak;
  const double reach = d >= 0 ? half - peak : half + peak;
  const double p = d >= 0 ? exp_hi : exp_lo;
  const double t = std::abs(d) / reach;
  return t >= 1.0 ? 0.0 : 1.0 - std::pow(t, p);
}

}  // namespace detail

/// Core centred on the origin. Coordinates are generated as (i - c) * step so
/// mirrored samples are exact negations of each other.
inline IndexProfile synth_gi_profile(const SyntheticProfileParams& prm) {
  if (!(prm.delta_n >= 0.0)) throw ValidationError("synth_gi_profile: delta_n must be non-negative");
  if (!(prm.core_width_um > 0.0) || !(prm.core_height_um > 0.0)) {
    throw ValidationError("synth_gi_profile: core size must be positive");
  }
  if (!(prm.step_um > 0.0)) throw ValidationError("synth_gi_profile: step must be positive");
  if (prm.padding_um < 10.0) throw ValidationError("synth_gi_profile: padding must be at least 10 um");
  const double hw = prm.core_width_um / 2;
  const double hh = prm.core_height_um / 2;
  if (!(std::abs(prm.peak.x) < hw) || !(std::abs(prm.peak.y) < hh)) {
    throw ValidationError("synth_gi_profile: peak_offset outside core");
  }
  const auto& s = prm.shape;
  if (!(s.exponent_x > 0) || !(s.exponent_below > 0) || !(s.exponent_above > 0)) {
    throw ValidationError("synth_gi_profile: grading exponents must be positive");
  }

  const int nx = 2 * int(std::ceil((hw + prm.padding_um) / prm.step_um - 1e-9)) + 1;
  const int ny = 2 * int(std::ceil((hh + prm.padding_um) / prm.step_um - 1e-9)) + 1;
  const int cx = (nx - 1) / 2;
  const int cy = (ny - 1) / 2;
  Grid2D g{-cx * prm.step_um, -cy * prm.step_um, prm.step_um, prm.step_um, nx, ny};

  Eigen::VectorXd shape_vals(g.size());
  for (int iy = 0; iy < ny; ++iy) {
    const double y = (iy - cy) * prm.step_um;
    const double fy = detail::grading_factor(y, prm.peak.y, hh, s.exponent_below, s.exponent_above);
    for (int ix = 0; ix < nx; ++ix) {
      const double x = (ix - cx) * prm.step_um;
      const double fx = detail::grading_factor(x, prm.peak.x, hw, s.exponent_x, s.exponent_x);
      shape_vals[g.flat(ix, iy)] = fx * fy;
    }
  }
  const double gmax = shape_vals.maxCoeff();
  if (gmax > 0) shape_vals /= gmax;
  Eigen::VectorXd n = (prm.n_clad + prm.delta_n * shape_vals.array()).matrix();
  return IndexProfile(g, std::move(n), prm.wavelength_ref_um);
}

// ---------------------------------------------------------------------------
// Radial fibre profile

/// Circular fibre with a power-law core. alpha = +inf selects step index.
struct RadialFiberSpec {
  double core_radius_um = 25.0;
  double numerical_aperture = 0.2;
  double n_clad = 1.45;
  double alpha = 2.0;

  static constexpr double step_index = std::numeric_limits<double>::infinity();

  [[nodiscard]] bool is_step() const { return std::isinf(alpha); }
  [[nodiscard]] double n_core() const {
    return std::sqrt(n_clad * n_clad + numerical_aperture * numerical_aperture);
  }
  [[nodiscard]] double v_number(double wavelength_um) const {
    return 2 * M_PI * core_radius_um * numerical_aperture / wavelength_um;
  }

  void validate() const {
    if (!(core_radius_um > 0)) throw ValidationError("fiber: core radius must be positive");
    if (!(numerical_aperture > 0 && numerical_aperture < 1)) throw ValidationError("fiber: NA must lie in (0, 1)");
    if (!(n_clad >= 1.0)) throw ValidationError("fiber: cladding index must be >= 1");
    if (!(alpha > 0)) throw ValidationError("fiber: grading exponent must be positive");
  }
};

/// n(r)^2 = n1^2 - NA^2 (r/a)^alpha inside the core, n_clad outside.
inline double fiber_index_squared(const RadialFiberSpec& f, double r) {
  const double na2 = f.numerical_aperture * f.numerical_aperture;
  const double n1sq = f.n_clad * f.n_clad + na2;
  if (r > f.core_radius_um) return f.n_clad * f.n_clad;
  if (f.is_step()) return n1sq;
  return n1sq - na2 * std::pow(r / f.core_radius_um, f.alpha);
}

inline double fiber_index(const RadialFiberSpec& f, double r) {
  if (r > f.core_radius_um) return f.n_clad;
  return std::sqrt(fiber_index_squared(f, r));
}

}  // namespace mmwg

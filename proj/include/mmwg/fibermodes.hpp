#pragma once

// LP modes of circular fibres. Step-index fibres use the Bessel characteristic
// equation; power-law profiles use a cell-centred finite-difference radial
// eigenproblem per azimuthal order, closed by a zero field at r = 3a.

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "mmwg/error.hpp"
#include "mmwg/format.hpp"
#include "mmwg/profile.hpp"

namespace mmwg {

enum class Orientation { Cos, Sin };

inline const char* to_string(Orientation o) { return o == Orientation::Cos ? "cos" : "sin"; }

/// Principal mode number of LP(m, n) with radial order n counted from zero.
inline int pmn(int m, int n) {
  if (m < 0 || n < 0) throw ValidationError("pmn: negative mode index");
  return m + 2 * n + 1;
}

/// R(r) tabulated at r_i = (i + 1/2) h; linear in between, zero past the end.
class RadialTable {
 public:
  RadialTable(double h, std::vector<double> values, int m) : h_(h), v_(std::move(values)), m_(m) {}

  [[nodiscard]] double step() const { return h_; }
  [[nodiscard]] double r_max() const { return h_ * double(v_.size()); }
  [[nodiscard]] const std::vector<double>& values() const { return v_; }

  [[nodiscard]] double operator()(double r) const {
    if (v_.empty()) return 0.0;
    const double s = r / h_ - 0.5;
    if (s <= 0.0) {
      // Regular behaviour at the axis: flat for m = 0, ~r otherwise.
      return m_ == 0 ? v_[0] : v_[0] * std::max(r, 0.0) / (0.5 * h_);
    }
    const auto i = std::size_t(s);
    if (i + 1 >= v_.size()) {
      return i + 1 == v_.size() ? v_.back() * (1.0 - (s - double(i))) : 0.0;
    }
    const double t = s - double(i);
    return (1 - t) * v_[i] + t * v_[i + 1];
  }

  /// Number of sign changes between r = 0 and the end of the table, ignoring
  /// the numerically negligible tail.
  [[nodiscard]] int zero_crossings() const {
    double peak = 0.0;
    for (double x : v_) peak = std::max(peak, std::abs(x));
    int count = 0;
    double prev = 0.0;
    for (double x : v_) {
      if (std::abs(x) < 1e-8 * peak) continue;
      if (prev * x < 0) ++count;
      prev = x;
    }
    return count;
  }

 private:
  double h_;
  std::vector<double> v_;
  int m_;
};

struct FiberMode {
  int m = 0;
  int n = 0;
  Orientation orientation = Orientation::Cos;
  double n_eff = 0.0;
  int pmn = 1;
  std::shared_ptr<const RadialTable> radial;
};

struct FiberModeSet {
  RadialFiberSpec spec{};
  double wavelength_um = 0.0;
  std::vector<FiberMode> modes;
  int max_pmn = 0;

  [[nodiscard]] std::size_t size() const { return modes.size(); }
};

struct FiberSolverOptions {
  double radial_step_um = 0.0;  ///< 0 selects a/400
  double outer_radius_factor = 3.0;
  bool step_index_analytic = true;  ///< Bessel equation for step profiles
};

/// E(x, y) = R(r') * {cos|sin}(m phi') about the offset centre.
inline double eval_field(const FiberMode& mode, double x, double y, Offset offset = {}) {
  const double dx = x - offset.x;
  const double dy = y - offset.y;
  const double r = std::hypot(dx, dy);
  const double rad = (*mode.radial)(r);
  if (mode.m == 0) return rad;
  const double phi = std::atan2(dy, dx);
  return rad * (mode.orientation == Orientation::Cos ? std::cos(mode.m * phi) : std::sin(mode.m * phi));
}

namespace detail {

/// Symmetric tridiagonal matrix: diagonal d, off-diagonal e (size n-1).
struct Tridiagonal {
  std::vector<double> d;
  std::vector<double> e;

  /// Number of eigenvalues strictly below x (Sturm sequence).
  [[nodiscard]] std::size_t count_below(double x) const {
    std::size_t neg = 0;
    double q = d[0] - x;
    if (q < 0) ++neg;
    for (std::size_t i = 1; i < d.size(); ++i) {
      if (q == 0.0) q = 1e-300;
      q = d[i] - x - e[i - 1] * e[i - 1] / q;
      if (q < 0) ++neg;
    }
    return neg;
  }

  [[nodiscard]] std::pair<double, double> gershgorin() const {
    double lo = HUGE_VAL;
    double hi = -HUGE_VAL;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double rad = (i > 0 ? std::abs(e[i - 1]) : 0.0) + (i + 1 < d.size() ? std::abs(e[i]) : 0.0);
      lo = std::min(lo, d[i] - rad);
      hi = std::max(hi, d[i] + rad);
    }
    return {lo, hi};
  }

  /// k-th largest eigenvalue (k = 0 is the largest) by bisection.
  [[nodiscard]] double eigenvalue_from_top(std::size_t k) const {
    auto [lo, hi] = gershgorin();
    const std::size_t below_target = d.size() - 1 - k;  // eigenvalue index from the bottom
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (count_below(mid) > below_target) hi = mid;
      else lo = mid;
    }
    return 0.5 * (lo + hi);
  }

  /// Eigenvector by inverse iteration; LU with partial pivoting as in LAPACK gttrf.
  [[nodiscard]] std::vector<double> eigenvector(double lambda) const {
    const std::size_t n = d.size();
    const double shift = lambda + 1e-10 * std::max(1.0, std::abs(lambda));
    std::vector<double> dg(d), dl(e), du(e), du2(n > 2 ? n - 2 : 0, 0.0);
    std::vector<char> swapped(n, 0);
    for (auto& x : dg) x -= shift;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (std::abs(dg[i]) >= std::abs(dl[i])) {
        if (dg[i] == 0.0) dg[i] = 1e-300;
        const double fact = dl[i] / dg[i];
        dl[i] = fact;
        dg[i + 1] -= fact * du[i];
      } else {
        const double fact = dg[i] / dl[i];
        dg[i] = dl[i];
        dl[i] = fact;
        const double tmp = du[i];
        du[i] = dg[i + 1];
        dg[i + 1] = tmp - fact * dg[i + 1];
        if (i + 2 < n) {
          du2[i] = du[i + 1];
          du[i + 1] = -fact * du[i + 1];
        }
        swapped[i] = 1;
      }
    }
    if (dg[n - 1] == 0.0) dg[n - 1] = 1e-300;

    std::vector<double> x(n, 1.0);
    for (int iter = 0; iter < 3; ++iter) {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!swapped[i]) {
          x[i + 1] -= dl[i] * x[i];
        } else {
          const double tmp = x[i];
          x[i] = x[i + 1];
          x[i + 1] = tmp - dl[i] * x[i];
        }
      }
      for (std::size_t i = n; i-- > 0;) {
        double s = x[i];
        if (i + 1 < n) s -= du[i] * x[i + 1];
        if (i + 2 < n) s -= du2[i] * x[i + 2];
        x[i] = s / dg[i];
      }
      double nrm = 0.0;
      for (double v : x) nrm += v * v;
      nrm = std::sqrt(nrm);
      for (double& v : x) v /= nrm;
    }
    return x;
  }
};

inline FiberMode make_mode(int m, int n, Orientation o, double n_eff, std::shared_ptr<const RadialTable> t) {
  return FiberMode{m, n, o, n_eff, pmn(m, n), std::move(t)};
}

/// Scales R so that the 2D integral of |E|^2 equals one.
inline void normalise_radial(std::vector<double>& r_vals, double h, int m) {
  double s = 0.0;
  for (std::size_t i = 0; i < r_vals.size(); ++i) s += r_vals[i] * r_vals[i] * (double(i) + 0.5) * h * h;
  const double ang = m == 0 ? 2 * M_PI : M_PI;
  const double scale = 1.0 / std::sqrt(s * ang);
  double lead = 0.0;
  for (double v : r_vals) {
    if (std::abs(v) > 1e-6 * std::sqrt(s / h)) {
      lead = v;
      break;
    }
  }
  const double sign = lead < 0 ? -1.0 : 1.0;
  for (double& v : r_vals) v *= scale * sign;
}

inline void push_orientations(std::vector<FiberMode>& out, int m, int n, double n_eff,
                              const std::shared_ptr<const RadialTable>& t) {
  out.push_back(make_mode(m, n, Orientation::Cos, n_eff, t));
  if (m > 0) out.push_back(make_mode(m, n, Orientation::Sin, n_eff, t));
}

inline void solve_radial_fd(const RadialFiberSpec& f, double k0, double h, double r_out, std::vector<FiberMode>& out) {
  const auto cells = std::size_t(std::lround(r_out / h));
  std::vector<double> r(cells), nsq(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    r[i] = (double(i) + 0.5) * h;
    nsq[i] = fiber_index_squared(f, r[i]);
  }
  const double threshold = k0 * k0 * f.n_clad * f.n_clad;
  for (int m = 0;; ++m) {
    Tridiagonal t;
    t.d.resize(cells);
    t.e.resize(cells - 1);
    for (std::size_t i = 0; i < cells; ++i) {
      const double r_lo = double(i) * h;
      const double r_hi = double(i + 1) * h;
      t.d[i] = -(r_lo + r_hi) / (h * h * r[i]) + k0 * k0 * nsq[i] - double(m * m) / (r[i] * r[i]);
      if (i + 1 < cells) t.e[i] = r_hi / (h * h * std::sqrt(r[i] * r[i + 1]));
    }
    const std::size_t guided = cells - t.count_below(threshold);
    if (guided == 0) break;
    for (std::size_t n = 0; n < guided; ++n) {
      const double beta2 = t.eigenvalue_from_top(n);
      if (!(beta2 > threshold)) continue;
      auto y = t.eigenvector(beta2);
      for (std::size_t i = 0; i < cells; ++i) y[i] /= std::sqrt(r[i]);
      normalise_radial(y, h, m);
      auto table = std::make_shared<const RadialTable>(h, std::move(y), m);
      push_orientations(out, m, int(n), std::sqrt(beta2) / k0, table);
    }
  }
}

/// Pole-free form of the LP characteristic equation,
/// u J_{m-1}(u) + w K_{m-1}(w)/K_m(w) J_m(u) with J_{-1} = -J_1, K_{-1} = K_1.
inline double lp_characteristic(int m, double u, double v) {
  const double w = std::sqrt(std::max(v * v - u * u, 0.0));
  const double jm1 = m == 0 ? -std::cyl_bessel_j(1.0, u) : std::cyl_bessel_j(double(m - 1), u);
  const double km1 = m == 0 ? std::cyl_bessel_k(1.0, w) : std::cyl_bessel_k(double(m - 1), w);
  const double km = std::cyl_bessel_k(double(m), w);
  return u * jm1 + w * (km1 / km) * std::cyl_bessel_j(double(m), u);
}

inline void solve_step_bessel(const RadialFiberSpec& f, double k0, double h, double r_out_factor,
                              std::vector<FiberMode>& out) {
  const double a = f.core_radius_um;
  const double v = k0 * a * f.numerical_aperture;
  const double n1 = f.n_core();
  for (int m = 0;; ++m) {
    std::vector<double> roots;
    const int samples = 4000 + int(200 * v);
    const double u_hi = v * (1 - 1e-12);
    double u_prev = 1e-9 * v;
    double g_prev = lp_characteristic(m, u_prev, v);
    for (int s = 1; s <= samples; ++s) {
      const double u = u_prev + (u_hi - 1e-9 * v) / samples;
      const double g = lp_characteristic(m, u, v);
      if (std::isfinite(g) && std::isfinite(g_prev) && (g < 0) != (g_prev < 0)) {
        double lo = u_prev, hi = u, glo = g_prev;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * v; ++it) {
          const double mid = 0.5 * (lo + hi);
          const double gm = lp_characteristic(m, mid, v);
          if ((gm < 0) == (glo < 0)) {
            lo = mid;
            glo = gm;
          } else {
            hi = mid;
          }
        }
        const double root = 0.5 * (lo + hi);
        if (!std::isfinite(root) || hi - lo > 1e-9 * v) {
          throw NumericalError("solve_lp_modes: root finder failed at m=" + std::to_string(m) +
                               ", n=" + std::to_string(roots.size()));
        }
        roots.push_back(root);
      }
      u_prev = u;
      g_prev = g;
    }
    if (roots.empty()) break;
    for (std::size_t n = 0; n < roots.size(); ++n) {
      const double u = roots[n];
      const double w = std::sqrt(v * v - u * u);
      const double r_out = a * std::min(std::max(r_out_factor, 1.0 + 30.0 / std::max(w, 1e-3)), 40.0);
      const auto cells = std::size_t(std::lround(r_out / h));
      std::vector<double> y(cells);
      const double jm = std::cyl_bessel_j(double(m), u);
      const double km = std::cyl_bessel_k(double(m), w);
      for (std::size_t i = 0; i < cells; ++i) {
        const double r = (double(i) + 0.5) * h;
        y[i] = r <= a ? std::cyl_bessel_j(double(m), u * r / a) / jm : std::cyl_bessel_k(double(m), w * r / a) / km;
      }
      normalise_radial(y, h, m);
      auto table = std::make_shared<const RadialTable>(h, std::move(y), m);
      const double beta2 = k0 * k0 * n1 * n1 - u * u / (a * a);
      push_orientations(out, m, int(n), std::sqrt(beta2) / k0, table);
    }
  }
}

}  // namespace detail

/// All guided LP modes, ordered by ascending PMN, then m, then orientation.
inline FiberModeSet solve_lp_modes(const RadialFiberSpec& spec, double wavelength_um,
                                   const FiberSolverOptions& opt = {}) {
  spec.validate();
  if (!(wavelength_um > 0)) throw ValidationError("solve_lp_modes: wavelength must be positive");
  if (!(spec.v_number(wavelength_um) > 0)) throw ValidationError("solve_lp_modes: non-guided request (V <= 0)");
  const double k0 = 2 * M_PI / wavelength_um;
  const double h = opt.radial_step_um > 0 ? opt.radial_step_um : spec.core_radius_um / 400.0;

  FiberModeSet set;
  set.spec = spec;
  set.wavelength_um = wavelength_um;
  if (spec.is_step() && opt.step_index_analytic) {
    detail::solve_step_bessel(spec, k0, h, opt.outer_radius_factor, set.modes);
  } else {
    detail::solve_radial_fd(spec, k0, h, opt.outer_radius_factor * spec.core_radius_um, set.modes);
  }
  std::stable_sort(set.modes.begin(), set.modes.end(), [](const FiberMode& l, const FiberMode& r) {
    if (l.pmn != r.pmn) return l.pmn < r.pmn;
    if (l.m != r.m) return l.m < r.m;
    return int(l.orientation) < int(r.orientation);
  });
  for (const auto& md : set.modes) set.max_pmn = std::max(set.max_pmn, md.pmn);
  return set;
}

/// Fibre mode-set CSV: m,n,orientation,pmn,n_eff.
inline void write_fiber_modeset_csv(std::ostream& out, const FiberModeSet& s) {
  out << "m,n,orientation,pmn,n_eff\n";
  for (const auto& md : s.modes) {
    out << md.m << ',' << md.n << ',' << to_string(md.orientation) << ',' << md.pmn << ','
        << format_double(md.n_eff) << '\n';
  }
}

}  // namespace mmwg

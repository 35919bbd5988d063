#pragma once

// Autocorrelation trace fitting (sech^2, Gaussian, Lorentzian candidates),
// RMSE model selection and back-to-back deconvolution of link bandwidth.

#include <Eigen/Core>
#include <unsupported/Eigen/LevenbergMarquardt>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mmwg/error.hpp"
#include "mmwg/format.hpp"

namespace mmwg {

enum class PulseShape { Sech2, Gaussian, Lorentzian };

inline constexpr std::array<PulseShape, 3> all_pulse_shapes{PulseShape::Sech2, PulseShape::Gaussian,
                                                            PulseShape::Lorentzian};

inline std::string to_string(PulseShape s) {
  switch (s) {
    case PulseShape::Sech2: return "sech2";
    case PulseShape::Gaussian: return "gaussian";
    case PulseShape::Lorentzian: return "lorentzian";
  }
  return "?";
}

inline PulseShape parse_pulse_shape(const std::string& s) {
  for (auto p : all_pulse_shapes)
    if (to_string(p) == s) return p;
  throw ValidationError("unknown pulse shape '" + s + "' (expected sech2, gaussian or lorentzian)");
}

namespace detail {

// Intensity autocorrelation of sech^2(t/T0) at x = tau/T0, normalised to 1 at 0.
inline double sech2_ac(double x) {
  x = std::abs(x);
  if (x < 1e-3) return 1.0 - 0.4 * x * x;
  if (x > 20.0) return 12.0 * (x - 1.0) * std::exp(-2.0 * x);
  const double s = std::sinh(x);
  return 3.0 * (x * std::cosh(x) - s) / (s * s * s);
}

struct Sech2Constants {
  double x_half;         // sech2_ac(x_half) = 1/2
  double pulse_half;     // sech^2(pulse_half) = 1/2
  double ac_to_pulse;    // FWHM_AC / FWHM_pulse
};

inline const Sech2Constants& sech2_constants() {
  static const Sech2Constants c = [] {
    double lo = 0.5, hi = 3.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (sech2_ac(mid) > 0.5 ? lo : hi) = mid;
    }
    const double xh = 0.5 * (lo + hi);
    const double ph = std::acosh(std::sqrt(2.0));
    return Sech2Constants{xh, ph, xh / ph};
  }();
  return c;
}

}  // namespace detail

/// FWHM_AC / FWHM_pulse for each shape.
inline double ac_width_ratio(PulseShape s) {
  switch (s) {
    case PulseShape::Gaussian: return std::sqrt(2.0);
    case PulseShape::Lorentzian: return 2.0;
    case PulseShape::Sech2: return detail::sech2_constants().ac_to_pulse;
  }
  return 1.0;
}

/// Autocorrelation profile of unit peak with AC FWHM 1, evaluated at u = tau / FWHM_AC.
inline double unit_autocorrelation(PulseShape s, double u) {
  switch (s) {
    case PulseShape::Gaussian: return std::exp(-4.0 * std::log(2.0) * u * u);
    case PulseShape::Lorentzian: return 1.0 / (1.0 + 4.0 * u * u);
    case PulseShape::Sech2: return detail::sech2_ac(2.0 * detail::sech2_constants().x_half * u);
  }
  return 0.0;
}

/// Fourier transform of the pulse intensity, normalised to 1 at f = 0.
/// fwhm in ps, f in GHz.
inline double pulse_spectrum(PulseShape s, double fwhm_ps, double f_ghz) {
  const double f = std::abs(f_ghz) * 1e-3;  // THz
  switch (s) {
    case PulseShape::Gaussian: return std::exp(-M_PI * M_PI * f * f * fwhm_ps * fwhm_ps / (4.0 * std::log(2.0)));
    case PulseShape::Lorentzian: return std::exp(-M_PI * fwhm_ps * f);
    case PulseShape::Sech2: {
      const double x = M_PI * M_PI * f * fwhm_ps / (2.0 * detail::sech2_constants().pulse_half);
      if (x < 1e-8) return 1.0;
      if (x > 700.0) return 0.0;
      return x / std::sinh(x);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Trace

struct Trace {
  std::vector<double> delay_ps;
  std::vector<double> amplitude;

  Trace() = default;
  Trace(std::vector<double> d, std::vector<double> a) : delay_ps(std::move(d)), amplitude(std::move(a)) {
    validate();
  }

  [[nodiscard]] std::size_t size() const { return delay_ps.size(); }

  void validate() const {
    if (delay_ps.size() != amplitude.size()) throw ValidationError("trace: delay and amplitude columns differ in length");
    if (delay_ps.size() < 16) throw ValidationError("trace: at least 16 samples required");
    for (std::size_t i = 0; i < size(); ++i) {
      if (!std::isfinite(delay_ps[i]) || !std::isfinite(amplitude[i]))
        throw ValidationError("trace: non-finite sample at row " + std::to_string(i + 1));
      if (amplitude[i] < 0) throw ValidationError("trace: negative amplitude at row " + std::to_string(i + 1));
      if (i > 0 && !(delay_ps[i] > delay_ps[i - 1]))
        throw ValidationError("trace: delay must be strictly increasing (row " + std::to_string(i + 1) + ")");
    }
  }
};

inline Trace parse_trace_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!trim(line).empty()) break;
  }
  if (trim(line) != "delay_ps,amplitude") throw ValidationError(source + ": expected header 'delay_ps,amplitude'");
  std::vector<double> d, a;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw ValidationError(source + ": line " + std::to_string(row) + ": expected two columns");
    const auto x = parse_double(std::string_view(line).substr(0, comma));
    const auto y = parse_double(std::string_view(line).substr(comma + 1));
    if (!x || !y) throw ValidationError(source + ": line " + std::to_string(row) + ": malformed number");
    d.push_back(*x);
    a.push_back(*y);
  }
  try {
    return Trace(std::move(d), std::move(a));
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

inline Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trace file '" + path + "'");
  return parse_trace_csv(in, path);
}

inline void write_trace_csv(std::ostream& out, const Trace& t) {
  out << "delay_ps,amplitude\n";
  for (std::size_t i = 0; i < t.size(); ++i) out << format_double(t.delay_ps[i]) << ',' << format_double(t.amplitude[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Fitting

struct PulseFit {
  PulseShape shape = PulseShape::Gaussian;
  double pulse_fwhm_ps = 0.0;
  double ac_fwhm_ps = 0.0;
  double center_ps = 0.0;
  double scale = 0.0;
  double baseline = 0.0;
  double rmse = 0.0;
  bool poor_fit = false;
  std::array<double, 3> candidate_rmse{};  ///< indexed like all_pulse_shapes; NaN if that fit failed

  [[nodiscard]] double model(double delay_ps) const {
    return baseline + scale * unit_autocorrelation(shape, (delay_ps - center_ps) / ac_fwhm_ps);
  }
};

struct PulseFitOptions {
  double poor_fit_threshold = 0.15;  ///< rmse / scale above this sets poor_fit
  int max_evaluations = 4000;
};

namespace detail {

struct AcResidual : Eigen::DenseFunctor<double> {
  PulseShape shape;
  const Eigen::VectorXd* t;
  const Eigen::VectorXd* y;

  AcResidual(PulseShape s, const Eigen::VectorXd& tt, const Eigen::VectorXd& yy)
      : Eigen::DenseFunctor<double>(4, int(tt.size())), shape(s), t(&tt), y(&yy) {}

  // p = (scale, centre, AC FWHM, baseline)
  int operator()(const InputType& p, ValueType& r) const {
    const double w = std::abs(p[2]) + 1e-300;
    for (Eigen::Index i = 0; i < t->size(); ++i)
      r[i] = p[3] + p[0] * unit_autocorrelation(shape, ((*t)[i] - p[1]) / w) - (*y)[i];
    return 0;
  }
};

struct NormalisedTrace {
  Eigen::VectorXd t, y;
  double t_ref, t_unit, y_unit;
  double w0, b0;
};

inline NormalisedTrace normalise(const Trace& tr) {
  const std::size_t n = tr.size();
  const auto peak_it = std::max_element(tr.amplitude.begin(), tr.amplitude.end());
  const std::size_t ip = std::size_t(peak_it - tr.amplitude.begin());
  const double peak = *peak_it;
  const double low = *std::min_element(tr.amplitude.begin(), tr.amplitude.end());
  if (!(peak - low > 1e-12 * std::max(std::abs(peak), 1e-300)) || peak <= 0)
    throw ValidationError("fit_autocorrelation: degenerate flat trace");
  if (ip == 0 || ip + 1 == n) throw ValidationError("fit_autocorrelation: peak is not interior to the delay range");

  // Half-maximum crossings walking outward from the peak.
  const double half = low + 0.5 * (peak - low);
  auto crossing = [&](int dir) -> double {
    for (std::ptrdiff_t i = std::ptrdiff_t(ip); i + dir >= 0 && i + dir < std::ptrdiff_t(n); i += dir) {
      const double a = tr.amplitude[std::size_t(i)], b = tr.amplitude[std::size_t(i + dir)];
      if (b <= half) {
        const double f = (a - half) / (a - b);
        return tr.delay_ps[std::size_t(i)] + f * (tr.delay_ps[std::size_t(i + dir)] - tr.delay_ps[std::size_t(i)]);
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double tp = tr.delay_ps[ip];
  const double l = crossing(-1), r = crossing(+1);
  double w;
  if (std::isfinite(l) && std::isfinite(r)) w = r - l;
  else if (std::isfinite(l)) w = 2 * (tp - l);
  else if (std::isfinite(r)) w = 2 * (r - tp);
  else w = 0.5 * (tr.delay_ps.back() - tr.delay_ps.front());
  w = std::max(w, tr.delay_ps[ip + 1] - tr.delay_ps[ip - 1]);

  NormalisedTrace out;
  out.t_ref = tp;
  out.t_unit = w;
  out.y_unit = peak;
  out.t.resize(Eigen::Index(n));
  out.y.resize(Eigen::Index(n));
  for (std::size_t i = 0; i < n; ++i) {
    out.t[Eigen::Index(i)] = (tr.delay_ps[i] - tp) / w;
    out.y[Eigen::Index(i)] = tr.amplitude[i] / peak;
  }
  out.w0 = 1.0;
  out.b0 = low / peak;
  return out;
}

}  // namespace detail

/// Least-squares fit of one candidate autocorrelation (scale, centre, width, baseline).
inline PulseFit fit_shape(const Trace& tr, PulseShape shape, const PulseFitOptions& opt = {}) {
  tr.validate();
  const auto nt = detail::normalise(tr);
  detail::AcResidual f(shape, nt.t, nt.y);
  Eigen::NumericalDiff<detail::AcResidual, Eigen::Central> nd(f);
  Eigen::LevenbergMarquardt<decltype(nd)> lm(nd);
  lm.setXtol(1e-13);
  lm.setFtol(1e-15);
  lm.setMaxfev(opt.max_evaluations);
  Eigen::VectorXd p(4);
  p << 1.0 - nt.b0, 0.0, nt.w0, nt.b0;
  const auto status = lm.minimize(p);
  using S = Eigen::LevenbergMarquardtSpace::Status;
  const bool ok = status != S::ImproperInputParameters && status != S::TooManyFunctionEvaluation &&
                  p.allFinite() && std::abs(p[2]) > 0 && p[0] > 0;
  if (!ok) throw NumericalError("fit_autocorrelation: " + to_string(shape) + " fit did not converge");

  Eigen::VectorXd r(nt.t.size());
  f(p, r);
  PulseFit fit;
  fit.shape = shape;
  fit.ac_fwhm_ps = std::abs(p[2]) * nt.t_unit;
  fit.pulse_fwhm_ps = fit.ac_fwhm_ps / ac_width_ratio(shape);
  fit.center_ps = nt.t_ref + p[1] * nt.t_unit;
  fit.scale = p[0] * nt.y_unit;
  fit.baseline = p[3] * nt.y_unit;
  fit.rmse = std::sqrt(r.squaredNorm() / double(r.size())) * nt.y_unit;
  fit.poor_fit = fit.rmse > opt.poor_fit_threshold * fit.scale;
  return fit;
}

/// Fits all three candidates and returns the minimum-RMSE one.
inline PulseFit fit_autocorrelation(const Trace& tr, const PulseFitOptions& opt = {}) {
  tr.validate();
  std::array<double, 3> rmse;
  rmse.fill(std::numeric_limits<double>::quiet_NaN());
  PulseFit best;
  bool any = false;
  std::string last_error;
  for (std::size_t k = 0; k < all_pulse_shapes.size(); ++k) {
    try {
      const PulseFit f = fit_shape(tr, all_pulse_shapes[k], opt);
      rmse[k] = f.rmse;
      if (!any || f.rmse < best.rmse) best = f;
      any = true;
    } catch (const NumericalError& e) {
      last_error = e.what();
    }
  }
  if (!any) throw NumericalError("fit_autocorrelation: no candidate shape converged (" + last_error + ")");
  best.candidate_rmse = rmse;
  for (double v : rmse)
    if (std::isfinite(v) && v < best.rmse) throw NumericalError("fit_autocorrelation: selection is not the minimum RMSE");
  return best;
}

// ---------------------------------------------------------------------------
// Deconvolution

struct DeconvolutionOptions {
  double floor = 1e-3;      ///< ignore frequencies where the back-to-back spectrum is below this
  double threshold = 0.5;   ///< |H_wg| level defining the bandwidth
};

/// Link -3 dB bandwidth (GHz) from back-to-back and output fits; infinite when the
/// widths are equal or the response stays above threshold up to the floor.
inline double link_bandwidth(const PulseFit& b2b, const PulseFit& out, const DeconvolutionOptions& opt = {}) {
  if (!(b2b.pulse_fwhm_ps > 0) || !(out.pulse_fwhm_ps > 0))
    throw ValidationError("link_bandwidth: pulse widths must be positive");
  if (out.pulse_fwhm_ps < b2b.pulse_fwhm_ps)
    throw ValidationError("link_bandwidth: nonphysical narrowing (output pulse narrower than back-to-back)");
  if (out.pulse_fwhm_ps == b2b.pulse_fwhm_ps) return std::numeric_limits<double>::infinity();
  if (!(opt.floor > 0 && opt.floor < 1) || !(opt.threshold > 0 && opt.threshold < 1))
    throw ValidationError("link_bandwidth: floor and threshold must lie in (0, 1)");

  const auto pb = [&](double f) { return pulse_spectrum(b2b.shape, b2b.pulse_fwhm_ps, f); };
  const auto h = [&](double f) { return pulse_spectrum(out.shape, out.pulse_fwhm_ps, f) / pb(f); };

  // Edge of the usable band: where the back-to-back spectrum meets the floor.
  double f_hi = 1.0;
  while (pb(f_hi) >= opt.floor) f_hi *= 2;
  double f_lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (f_lo + f_hi);
    (pb(mid) >= opt.floor ? f_lo : f_hi) = mid;
  }
  const double f_edge = f_lo;

  const int steps = 20000;
  double a = 0.0;
  for (int k = 1; k <= steps; ++k) {
    double b = f_edge * k / steps;
    if (h(b) <= opt.threshold) {
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (a + b);
        (h(mid) > opt.threshold ? a : b) = mid;
      }
      return 0.5 * (a + b);
    }
    a = b;
  }
  return std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Synthetic traces

struct SyntheticTraceSpec {
  PulseShape shape = PulseShape::Gaussian;
  double pulse_fwhm_ps = 10.0;
  double center_ps = 0.0;
  double scale = 1.0;
  double baseline = 0.5;        ///< pedestal keeping noisy samples non-negative
  std::size_t samples = 1001;
  double half_span_ac = 3.0;    ///< half window in units of the AC FWHM
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
};

/// Analytic autocorrelation on a uniform delay grid with optional white Gaussian
/// noise. SNR is mean signal power over noise variance, the signal being the
/// autocorrelation above the pedestal on the generated window. Noisy samples are
/// clamped at zero.
inline Trace synth_autocorrelation(const SyntheticTraceSpec& s) {
  if (!(s.pulse_fwhm_ps > 0)) throw ValidationError("synth trace: pulse_fwhm_ps must be positive");
  if (s.samples < 16) throw ValidationError("synth trace: at least 16 samples required");
  if (!(s.half_span_ac > 0)) throw ValidationError("synth trace: half_span_ac must be positive");
  if (!(s.scale > 0) || s.baseline < 0) throw ValidationError("synth trace: scale must be positive and baseline non-negative");
  const double w = s.pulse_fwhm_ps * ac_width_ratio(s.shape);
  const double half = s.half_span_ac * w;
  std::vector<double> d(s.samples), a(s.samples);
  double power = 0.0;
  for (std::size_t i = 0; i < s.samples; ++i) {
    d[i] = s.center_ps - half + 2 * half * double(i) / double(s.samples - 1);
    a[i] = s.scale * unit_autocorrelation(s.shape, (d[i] - s.center_ps) / w);
    power += a[i] * a[i];
  }
  power /= double(s.samples);
  const double sigma = std::isinf(s.snr_db) ? 0.0 : std::sqrt(power * std::pow(10.0, -s.snr_db / 10.0));
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto& v : a) {
    v += s.baseline;
    if (sigma > 0) v = std::max(0.0, v + sigma * noise(rng));
  }
  return Trace(std::move(d), std::move(a));
}

}  // namespace mmwg

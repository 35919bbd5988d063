#pragma once

// Modal dispersion: delays, binned impulse responses, frequency responses,
// -3 dB bandwidths, offset scans and the step mode-selective loss fit.

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mmwg/error.hpp"
#include "mmwg/format.hpp"
#include "mmwg/launch.hpp"
#include "mmwg/modesolver.hpp"

namespace mmwg {

inline constexpr double speed_of_light = 2.99792458e8;  // m/s

/// Step transmission: the first `cutoff_index` modes (descending n_eff) pass.
struct LossModel {
  int cutoff_index = std::numeric_limits<int>::max();

  static LossModel lossless() { return {}; }
  [[nodiscard]] double transmission(std::size_t mode) const {
    return mode < std::size_t(std::max(cutoff_index, 0)) ? 1.0 : 0.0;
  }
};

struct ResponseOptions {
  double bin_width_ps = 0.0;     ///< 0: max(delay spread / 2048, 0.01 ps)
  int padding_factor = 64;       ///< zero padding relative to the impulse support (>= 8)
  double threshold = 0.5;        ///< |H(f)|/|H(0)| defining the bandwidth
};

struct ChannelResponse {
  double bin_width_ps = 0.0;
  std::vector<double> h;  ///< power per bin; bin k is centred on t = k * bin_width
  std::vector<double> f_ghz;
  std::vector<std::complex<double>> H;
  double f3db_ghz = std::numeric_limits<double>::infinity();
  bool exceeds_nyquist = false;
  double length_m = 0.0;
  double blp_ghz_m = std::numeric_limits<double>::infinity();
  double coupled_power = 0.0;   ///< before mode-selective loss
  double received_power = 0.0;  ///< after loss, equals sum(h)

  [[nodiscard]] double t_ps(std::size_t k) const { return double(k) * bin_width_ps; }
};

/// t_i = L n_g / c, in picoseconds.
inline std::vector<double> delays(const std::vector<double>& n_group, double length_m) {
  if (!(length_m >= 0)) throw ValidationError("delays: length must be non-negative");
  std::vector<double> t(n_group.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = length_m * n_group[i] / speed_of_light * 1e12;
  return t;
}

inline double default_bin_width(double spread_ps) { return std::max(spread_ps / 2048.0, 0.01); }

/// Deposits p_i a_i into the bin nearest t_i; the earliest carrier sits at t = 0.
inline ChannelResponse impulse_response(const ModePowerDistribution& p_w, const LossModel& loss,
                                        const std::vector<double>& t_ps, double bin_width_ps) {
  if (p_w.size() != t_ps.size()) throw ValidationError("impulse_response: power and delay vectors differ in length");
  if (!(bin_width_ps > 0)) throw ValidationError("impulse_response: bin width must be positive");
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t i = 0; i < t_ps.size(); ++i) {
    const double w = p_w[i] * loss.transmission(i);
    if (w > 0) {
      t_min = std::min(t_min, t_ps[i]);
      t_max = std::max(t_max, t_ps[i]);
      total += w;
    }
  }
  if (!(total > 0)) throw NumericalError("impulse_response: no propagating power");
  ChannelResponse r;
  r.bin_width_ps = bin_width_ps;
  r.h.assign(std::size_t(std::llround((t_max - t_min) / bin_width_ps)) + 1, 0.0);
  for (std::size_t i = 0; i < t_ps.size(); ++i) {
    const double w = p_w[i] * loss.transmission(i);
    if (w > 0) r.h[std::size_t(std::llround((t_ps[i] - t_min) / bin_width_ps))] += w;
  }
  r.received_power = total;
  r.coupled_power = p_w.total();
  return r;
}

/// Fills H by a zero-padded FFT of h and locates the lowest frequency where
/// |H|/|H(0)| falls to the threshold (linear interpolation between samples).
inline void bandwidth(ChannelResponse& r, const ResponseOptions& opt = {}) {
  if (r.h.empty()) throw ValidationError("bandwidth: empty impulse response");
  const std::size_t support = r.h.size();
  const std::size_t want = support * std::size_t(std::max(opt.padding_factor, 8));
  std::size_t n = 256;
  while (n < want) n *= 2;
  std::vector<double> padded(n, 0.0);
  std::copy(r.h.begin(), r.h.end(), padded.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);

  const std::size_t half = n / 2;
  const double df_ghz = 1e3 / (double(n) * r.bin_width_ps);
  r.f_ghz.resize(half + 1);
  r.H.assign(spec.begin(), spec.begin() + std::ptrdiff_t(half + 1));
  for (std::size_t k = 0; k <= half; ++k) r.f_ghz[k] = double(k) * df_ghz;

  const double h0 = std::abs(r.H[0]);
  r.f3db_ghz = std::numeric_limits<double>::infinity();
  r.exceeds_nyquist = true;
  double prev = 1.0;
  for (std::size_t k = 1; k <= half; ++k) {
    const double mag = std::abs(r.H[k]) / h0;
    if (mag <= opt.threshold) {
      const double frac = (prev - opt.threshold) / (prev - mag);
      r.f3db_ghz = (double(k - 1) + frac) * df_ghz;
      r.exceeds_nyquist = false;
      break;
    }
    prev = mag;
  }
  r.blp_ghz_m = r.f3db_ghz * r.length_m;
}

// ---------------------------------------------------------------------------
// Link simulation

/// Everything needed to evaluate a link at arbitrary launch offsets. The mode
/// set (with group indices) is solved once and shared read-only.
struct LinkScenario {
  WaveguideModeSet modes;
  double length_m = 1.0;
  LaunchSpec launch{};
  LossModel loss{};
  ResponseOptions response{};
  std::vector<Offset> scan;  ///< offsets of the scan grid
};

/// Power coupled into each waveguide mode for the scenario launch at `offset`.
inline WaveguidePower coupled_power(const LinkScenario& s, Offset offset) {
  LaunchSpec l = s.launch;
  l.offset = offset;
  const CouplingMatrix c = coupling_matrix(s.modes, l);
  return waveguide_mpd(c, ModePowerDistribution(l.basis_powers()));
}

inline ChannelResponse response_from_power(const LinkScenario& s, const ModePowerDistribution& p_w) {
  const auto t = delays(s.modes.n_groups(), s.length_m);
  double t_lo = std::numeric_limits<double>::infinity();
  double t_hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (p_w[i] * s.loss.transmission(i) > 0) {
      t_lo = std::min(t_lo, t[i]);
      t_hi = std::max(t_hi, t[i]);
    }
  }
  const double bw = s.response.bin_width_ps > 0 ? s.response.bin_width_ps
                                                 : default_bin_width(std::isfinite(t_hi) ? t_hi - t_lo : 0.0);
  ChannelResponse r = impulse_response(p_w, s.loss, t, bw);
  r.length_m = s.length_m;
  bandwidth(r, s.response);
  return r;
}

inline ChannelResponse simulate_at(const LinkScenario& s, Offset offset) {
  if (!s.modes.has_group_indices()) throw ValidationError("simulate: mode set lacks group indices");
  return response_from_power(s, coupled_power(s, offset).mpd);
}

struct SimulationSettings {
  int max_modes = 400;
  double delta_lambda_um = 1e-3;
  ModeSolverOptions solver{};
  ResponseOptions response{};
};

/// Solves the guide, computes group indices and evaluates the launch.
inline LinkScenario build_scenario(const IndexProfile& profile, double wavelength_um, double length_m,
                                   const LaunchSpec& launch, const LossModel& loss,
                                   const SimulationSettings& cfg = {}) {
  LinkScenario s;
  s.modes = solve_modes(profile, wavelength_um, cfg.max_modes, cfg.solver);
  if (s.modes.empty()) throw NumericalError("simulate: the profile guides no modes at this wavelength");
  s.modes = group_indices(profile, wavelength_um, cfg.delta_lambda_um, std::move(s.modes), cfg.solver);
  s.length_m = length_m;
  s.launch = launch;
  s.loss = loss;
  s.response = cfg.response;
  return s;
}

inline ChannelResponse simulate_link(const IndexProfile& profile, double wavelength_um, double length_m,
                                     const LaunchSpec& launch, const LossModel& loss,
                                     const SimulationSettings& cfg = {}) {
  const LinkScenario s = build_scenario(profile, wavelength_um, length_m, launch, loss, cfg);
  return simulate_at(s, launch.offset);
}

struct ScanRow {
  Offset offset;
  double f3db_ghz = 0.0;
  double blp_ghz_m = 0.0;
  double received_power = 0.0;
  double coupled_power_db = 0.0;  ///< relative to the best offset of the scan
};

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::size_t(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline int default_thread_count() { return int(std::max(1u, std::thread::hardware_concurrency())); }

/// One row per offset, in input order.
inline std::vector<ScanRow> scan_offsets(const LinkScenario& s, const std::vector<Offset>& offsets,
                                         int threads = default_thread_count()) {
  std::vector<ScanRow> rows(offsets.size());
  parallel_for(offsets.size(), threads, [&](std::size_t i) {
    ScanRow row;
    row.offset = offsets[i];
    const WaveguidePower p = coupled_power(s, offsets[i]);
    double received = 0.0;
    for (std::size_t k = 0; k < p.mpd.size(); ++k) received += p.mpd[k] * s.loss.transmission(k);
    row.received_power = received;
    if (received > 0) {
      const ChannelResponse r = response_from_power(s, p.mpd);
      row.f3db_ghz = r.f3db_ghz;
      row.blp_ghz_m = r.blp_ghz_m;
    } else {
      row.f3db_ghz = std::numeric_limits<double>::quiet_NaN();
      row.blp_ghz_m = std::numeric_limits<double>::quiet_NaN();
    }
    rows[i] = row;
  });
  double best = 0.0;
  for (const auto& r : rows) best = std::max(best, r.received_power);
  for (auto& r : rows) {
    r.coupled_power_db = (best > 0 && r.received_power > 0) ? 10 * std::log10(r.received_power / best)
                                                            : -std::numeric_limits<double>::infinity();
  }
  return rows;
}

/// Scan CSV: offset_x_um,offset_y_um,f3db_ghz,blp_ghz_m,coupled_power_db.
inline void write_scan_csv(std::ostream& out, const std::vector<ScanRow>& rows) {
  out << "offset_x_um,offset_y_um,f3db_ghz,blp_ghz_m,coupled_power_db\n";
  for (const auto& r : rows) {
    out << format_fixed(r.offset.x, 4) << ',' << format_fixed(r.offset.y, 4) << ',' << format_fixed(r.f3db_ghz, 6)
        << ',' << format_fixed(r.blp_ghz_m, 6) << ',' << format_fixed(r.coupled_power_db, 6) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Mode-selective loss fit

struct PowerSample {
  Offset offset;
  double power_db = 0.0;  ///< normalised received power
};

struct LossFit {
  LossModel model;
  double rmse_db = 0.0;
  std::vector<double> rmse_by_cutoff;  ///< entry k-1 for cutoff k
};

/// Grid search over the step cut-off. `mode_power[s][i]` is the power coupled
/// into waveguide mode i at sample s. Both curves are renormalised to their own
/// maximum; ties go to the lowest cut-off.
inline LossFit fit_loss_cutoff(const std::vector<double>& measured_db,
                               const std::vector<std::vector<double>>& mode_power) {
  if (measured_db.size() < 3) throw ValidationError("fit_loss_model: at least three measured points are required");
  if (mode_power.size() != measured_db.size()) throw ValidationError("fit_loss_model: sample count mismatch");
  const std::size_t n_modes = mode_power.front().size();
  if (n_modes == 0) throw ValidationError("fit_loss_model: no waveguide modes");
  const double meas_max = *std::max_element(measured_db.begin(), measured_db.end());
  constexpr double floor_db = -200.0;

  LossFit fit;
  fit.rmse_by_cutoff.assign(n_modes, std::numeric_limits<double>::infinity());
  std::vector<double> cumulative(measured_db.size(), 0.0);
  double best = std::numeric_limits<double>::infinity();
  int best_k = 1;
  for (std::size_t k = 1; k <= n_modes; ++k) {
    double sim_max = 0.0;
    for (std::size_t s = 0; s < measured_db.size(); ++s) {
      cumulative[s] += mode_power[s][k - 1];
      sim_max = std::max(sim_max, cumulative[s]);
    }
    if (!(sim_max > 0)) continue;
    double sse = 0.0;
    for (std::size_t s = 0; s < measured_db.size(); ++s) {
      const double sim_db = cumulative[s] > 0 ? std::max(10 * std::log10(cumulative[s] / sim_max), floor_db) : floor_db;
      const double d = sim_db - (measured_db[s] - meas_max);
      sse += d * d;
    }
    const double rmse = std::sqrt(sse / double(measured_db.size()));
    fit.rmse_by_cutoff[k - 1] = rmse;
    if (!std::isfinite(best) || rmse < best - 1e-12 * (1.0 + best)) {
      best = rmse;
      best_k = int(k);
    }
  }
  if (!std::isfinite(best)) throw NumericalError("fit_loss_model: no cut-off produces received power");
  fit.model.cutoff_index = best_k;
  fit.rmse_db = best;
  return fit;
}

/// Fits the step cut-off of `s` to measured normalised power versus offset.
inline LossFit fit_loss_model(const std::vector<PowerSample>& measured, const LinkScenario& s) {
  if (measured.size() < 3) throw ValidationError("fit_loss_model: at least three measured points are required");
  if (!s.scan.empty()) {
    double x0 = HUGE_VAL, x1 = -HUGE_VAL, y0 = HUGE_VAL, y1 = -HUGE_VAL;
    for (const auto& o : s.scan) {
      x0 = std::min(x0, o.x);
      x1 = std::max(x1, o.x);
      y0 = std::min(y0, o.y);
      y1 = std::max(y1, o.y);
    }
    const double tol = 1e-9;
    for (const auto& m : measured) {
      if (m.offset.x < x0 - tol || m.offset.x > x1 + tol || m.offset.y < y0 - tol || m.offset.y > y1 + tol) {
        throw ValidationError("fit_loss_model: measured offset (" + format_double(m.offset.x) + ", " +
                              format_double(m.offset.y) + ") outside the scan range");
      }
    }
  }
  std::vector<double> db;
  std::vector<std::vector<double>> power;
  for (const auto& m : measured) {
    db.push_back(m.power_db);
    power.push_back(coupled_power(s, m.offset).mpd.powers());
  }
  return fit_loss_cutoff(db, power);
}

}  // namespace mmwg

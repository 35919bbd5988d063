#pragma once

// Optical link power budget: receiver sensitivity from NEP and bandwidth,
// margin after waveguide and other losses.

#include <cmath>

#include "mmwg/error.hpp"

namespace mmwg {

/// q such that sensitivity(nep, bw, q) equals target_dbm.
inline double calibrate_q(double target_dbm, double nep_pw_rthz, double bw_ghz) {
  if (!(nep_pw_rthz > 0) || !(bw_ghz > 0)) throw ValidationError("calibrate_q: nep and bandwidth must be positive");
  return std::pow(10.0, target_dbm / 10.0) * 1e-3 / (nep_pw_rthz * 1e-12 * std::sqrt(bw_ghz * 1e9));
}

/// Receiver reference point: -3 dBm at 38 pW/sqrt(Hz) over 60 GHz.
inline const double default_q_factor = calibrate_q(-3.0, 38.0, 60.0);

/// 10 log10(q NEP sqrt(BW) / 1 mW), in dBm.
inline double sensitivity(double nep_pw_rthz, double bw_ghz, double q) {
  if (!(nep_pw_rthz > 0) || !(bw_ghz > 0) || !(q > 0))
    throw ValidationError("sensitivity: nep, bandwidth and q must be positive");
  return 10.0 * std::log10(q * nep_pw_rthz * 1e-12 * std::sqrt(bw_ghz * 1e9) / 1e-3);
}

struct BudgetSpec {
  double launch_power = 6.0;              ///< dBm
  double nep = 38.0;                      ///< pW/sqrt(Hz)
  double rx_bandwidth = 60.0;             ///< GHz
  double q_factor = default_q_factor;
  double wg_loss = 0.04;                  ///< dB/cm
  double length = 100.0;                  ///< cm
  double other_losses = 0.0;              ///< dB

  void validate() const {
    if (!std::isfinite(launch_power)) throw ValidationError("budget: launch_power must be finite");
    if (!(nep >= 0) || !std::isfinite(nep)) throw ValidationError("budget: nep must be non-negative");
    if (!(rx_bandwidth > 0) || !std::isfinite(rx_bandwidth)) throw ValidationError("budget: rx_bandwidth must be positive");
    if (!(q_factor > 0) || !std::isfinite(q_factor)) throw ValidationError("budget: q_factor must be positive");
    if (!(length >= 0) || !std::isfinite(length)) throw ValidationError("budget: length must be non-negative");
    if (!std::isfinite(wg_loss) || !std::isfinite(other_losses)) throw ValidationError("budget: losses must be finite");
  }
};

struct BudgetReport {
  double sensitivity_dbm;
  double budget_db;
  double path_loss_db;
  double margin_db;
  bool feasible;
};

inline BudgetReport budget(const BudgetSpec& s) {
  s.validate();
  BudgetReport r;
  // A noiseless receiver (nep = 0) has unbounded sensitivity.
  r.sensitivity_dbm = s.nep > 0 ? sensitivity(s.nep, s.rx_bandwidth, s.q_factor) : -HUGE_VAL;
  r.budget_db = s.launch_power - r.sensitivity_dbm;
  r.path_loss_db = s.wg_loss * s.length + s.other_losses;
  r.margin_db = r.budget_db - r.path_loss_db;
  r.feasible = r.margin_db >= 0;
  return r;
}

}  // namespace mmwg

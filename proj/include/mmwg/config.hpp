#pragma once

// JSON scenario and budget configs, measured-power CSV, and JSON reports.
// Every schema error names the offending field path.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmwg/dispersion.hpp"
#include "mmwg/error.hpp"
#include "mmwg/fibermodes.hpp"
#include "mmwg/launch.hpp"
#include "mmwg/linkbudget.hpp"
#include "mmwg/profile.hpp"
#include "mmwg/pulse.hpp"

namespace mmwg {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace cfg {

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ValidationError("config: " + path + ": " + what);
}

inline void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
}

inline void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  expect_object(j, path);
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) fail(join(path, k), "unknown field");
  }
}

inline const json& require(const json& j, const std::string& path, const char* key) {
  expect_object(j, path);
  if (!j.contains(key)) fail(join(path, key), "missing required field");
  return j.at(key);
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

inline double number(const json& j, const std::string& path, const char* key) {
  return number(require(j, path, key), join(path, key));
}

inline double number_or(const json& j, const std::string& path, const char* key, double fallback) {
  return j.contains(key) ? number(j.at(key), join(path, key)) : fallback;
}

inline int integer_or(const json& j, const std::string& path, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
  return v.get<int>();
}

inline std::string string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

inline Offset offset(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected [x, y]");
  return {number(v[0], index_path(path, 0)), number(v[1], index_path(path, 1))};
}

inline double positive(double v, const std::string& path) {
  if (!(v > 0) || !std::isfinite(v)) fail(path, "must be positive");
  return v;
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path + ": malformed JSON (" + e.what() + ")");
  }
}

}  // namespace cfg

// ---------------------------------------------------------------------------
// Scenario

struct ProfileSource {
  std::optional<std::string> file;
  std::optional<SyntheticProfileParams> synthetic;
};

struct LaunchConfig {
  enum class Kind { Gaussian, Fiber } kind = Kind::Gaussian;
  double fwhm_um = 4.0;
  RadialFiberSpec fiber{};
  std::optional<MpdPreset> preset = MpdPreset::NoModeMixer;
  std::vector<double> mpd;  ///< explicit per-mode powers when no preset
  Offset offset{};
};

struct ScanGrid {
  std::vector<double> x_um, y_um;

  [[nodiscard]] bool empty() const { return x_um.empty() || y_um.empty(); }
  /// Row-major: x varies fastest.
  [[nodiscard]] std::vector<Offset> offsets() const {
    std::vector<Offset> out;
    for (double y : y_um)
      for (double x : x_um) out.push_back({x, y});
    return out;
  }
};

struct Scenario {
  ProfileSource profile;
  double wavelength_um = 0.85;
  double length_m = 1.0;
  LaunchConfig launch;
  LossModel loss{};
  std::optional<std::string> loss_fit_file;  ///< measured power CSV to fit the cut-off from
  SimulationSettings settings{};
  ScanGrid scan;
  std::map<std::string, std::string> output;
};

namespace cfg {

inline std::string resolve(const std::string& file, const std::filesystem::path& base) {
  const std::filesystem::path p(file);
  return p.is_absolute() || base.empty() ? p.string() : (base / p).string();
}

inline RadialFiberSpec fiber_spec(const json& j, const std::string& path) {
  only_keys(j, path, {"core_radius_um", "numerical_aperture", "n_clad", "alpha"});
  RadialFiberSpec f;
  f.core_radius_um = number_or(j, path, "core_radius_um", f.core_radius_um);
  f.numerical_aperture = number_or(j, path, "numerical_aperture", f.numerical_aperture);
  f.n_clad = number_or(j, path, "n_clad", f.n_clad);
  if (j.contains("alpha")) {
    const auto& a = j.at("alpha");
    if (a.is_string() && a.get<std::string>() == "step") f.alpha = RadialFiberSpec::step_index;
    else if (a.is_number()) f.alpha = a.get<double>();
    else fail(join(path, "alpha"), "expected a number or \"step\"");
  }
  try {
    f.validate();
  } catch (const ValidationError& e) {
    fail(path, e.what());
  }
  return f;
}

inline std::vector<double> axis(const json& v, const std::string& path) {
  std::vector<double> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], index_path(path, i)));
  } else if (v.is_object()) {
    only_keys(v, path, {"start", "stop", "step"});
    const double a = number(v, path, "start");
    const double b = number(v, path, "stop");
    const double s = positive(number(v, path, "step"), join(path, "step"));
    if (b < a) fail(join(path, "stop"), "must not be below start");
    const auto n = std::size_t(std::floor((b - a) / s + 1e-9)) + 1;
    if (n > 100000) fail(path, "too many points");
    for (std::size_t i = 0; i < n; ++i) out.push_back(a + double(i) * s);
  } else {
    fail(path, "expected a list of offsets or {start, stop, step}");
  }
  if (out.empty()) fail(path, "must not be empty");
  return out;
}

inline SyntheticProfileParams synthetic(const json& j, const std::string& path) {
  only_keys(j, path, {"core_width_um", "core_height_um", "n_clad", "delta_n", "peak_um", "exponent_x",
                      "exponent_below", "exponent_above", "step_um", "padding_um", "wavelength_ref_um"});
  SyntheticProfileParams p;
  p.core_width_um = number_or(j, path, "core_width_um", p.core_width_um);
  p.core_height_um = number_or(j, path, "core_height_um", p.core_height_um);
  p.n_clad = number_or(j, path, "n_clad", p.n_clad);
  p.delta_n = number_or(j, path, "delta_n", p.delta_n);
  if (j.contains("peak_um")) p.peak = offset(j.at("peak_um"), join(path, "peak_um"));
  p.shape.exponent_x = number_or(j, path, "exponent_x", p.shape.exponent_x);
  p.shape.exponent_below = number_or(j, path, "exponent_below", p.shape.exponent_below);
  p.shape.exponent_above = number_or(j, path, "exponent_above", p.shape.exponent_above);
  p.step_um = number_or(j, path, "step_um", p.step_um);
  p.padding_um = number_or(j, path, "padding_um", p.padding_um);
  p.wavelength_ref_um = number_or(j, path, "wavelength_ref_um", p.wavelength_ref_um);
  return p;
}

}  // namespace cfg

/// Parses a scenario; relative file references resolve against `base_dir`.
inline Scenario parse_scenario(const json& j, const std::filesystem::path& base_dir = {}) {
  using namespace cfg;
  only_keys(j, "", {"profile", "wavelength_um", "length_m", "launch", "loss", "solver", "response", "scan", "output"});
  Scenario s;

  const auto& prof = require(j, "", "profile");
  only_keys(prof, "profile", {"file", "synthetic"});
  if (prof.contains("file") == prof.contains("synthetic"))
    fail("profile", "exactly one of 'file' or 'synthetic' is required");
  if (prof.contains("file")) s.profile.file = resolve(string(prof.at("file"), "profile.file"), base_dir);
  else s.profile.synthetic = synthetic(prof.at("synthetic"), "profile.synthetic");

  s.wavelength_um = positive(number(j, "", "wavelength_um"), "wavelength_um");
  s.length_m = number_or(j, "", "length_m", s.length_m);
  if (!(s.length_m >= 0) || !std::isfinite(s.length_m)) fail("length_m", "must be non-negative");

  if (j.contains("launch")) {
    const auto& l = j.at("launch");
    only_keys(l, "launch", {"type", "fwhm_um", "fiber", "mpd", "offset_um"});
    const std::string type = l.contains("type") ? string(l.at("type"), "launch.type") : "gaussian";
    if (l.contains("offset_um")) s.launch.offset = offset(l.at("offset_um"), "launch.offset_um");
    if (type == "gaussian") {
      s.launch.kind = LaunchConfig::Kind::Gaussian;
      if (l.contains("fiber") || l.contains("mpd")) fail("launch", "'fiber' and 'mpd' apply to fiber launches only");
      s.launch.fwhm_um = positive(number_or(l, "launch", "fwhm_um", s.launch.fwhm_um), "launch.fwhm_um");
    } else if (type == "fiber") {
      s.launch.kind = LaunchConfig::Kind::Fiber;
      if (l.contains("fwhm_um")) fail("launch.fwhm_um", "applies to gaussian launches only");
      if (l.contains("fiber")) s.launch.fiber = fiber_spec(l.at("fiber"), "launch.fiber");
      if (l.contains("mpd")) {
        const auto& m = l.at("mpd");
        if (m.is_string()) {
          try {
            s.launch.preset = parse_mpd_preset(m.get<std::string>());
          } catch (const ValidationError& e) {
            fail("launch.mpd", e.what());
          }
        } else if (m.is_array()) {
          s.launch.preset.reset();
          for (std::size_t i = 0; i < m.size(); ++i) s.launch.mpd.push_back(number(m[i], index_path("launch.mpd", i)));
        } else {
          fail("launch.mpd", "expected \"no_mm\", \"mm\" or a list of mode powers");
        }
      }
    } else {
      fail("launch.type", "expected \"gaussian\" or \"fiber\"");
    }
  }

  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    only_keys(l, "loss", {"cutoff_index", "fit"});
    if (l.contains("cutoff_index") && l.contains("fit")) fail("loss", "give either 'cutoff_index' or 'fit', not both");
    if (l.contains("cutoff_index")) {
      s.loss.cutoff_index = integer_or(l, "loss", "cutoff_index", 0);
      if (s.loss.cutoff_index < 1) fail("loss.cutoff_index", "must be at least 1");
    }
    if (l.contains("fit")) s.loss_fit_file = resolve(string(l.at("fit"), "loss.fit"), base_dir);
  }

  if (j.contains("solver")) {
    const auto& o = j.at("solver");
    only_keys(o, "solver", {"max_modes", "delta_lambda_um", "guided_epsilon", "material_dn_dlambda", "check_window_clipping"});
    s.settings.max_modes = integer_or(o, "solver", "max_modes", s.settings.max_modes);
    if (s.settings.max_modes < 1) fail("solver.max_modes", "must be at least 1");
    s.settings.delta_lambda_um = positive(number_or(o, "solver", "delta_lambda_um", s.settings.delta_lambda_um),
                                          "solver.delta_lambda_um");
    s.settings.solver.guided_epsilon = number_or(o, "solver", "guided_epsilon", s.settings.solver.guided_epsilon);
    s.settings.solver.material_dn_dlambda =
        number_or(o, "solver", "material_dn_dlambda", s.settings.solver.material_dn_dlambda);
    if (o.contains("check_window_clipping")) {
      if (!o.at("check_window_clipping").is_boolean()) fail("solver.check_window_clipping", "expected a boolean");
      s.settings.solver.check_window_clipping = o.at("check_window_clipping").get<bool>();
    }
  }

  if (j.contains("response")) {
    const auto& r = j.at("response");
    only_keys(r, "response", {"bin_width_ps", "padding_factor", "threshold"});
    s.settings.response.bin_width_ps = number_or(r, "response", "bin_width_ps", 0.0);
    if (s.settings.response.bin_width_ps < 0) fail("response.bin_width_ps", "must be non-negative (0 selects the default)");
    s.settings.response.padding_factor = integer_or(r, "response", "padding_factor", s.settings.response.padding_factor);
    if (s.settings.response.padding_factor < 8) fail("response.padding_factor", "must be at least 8");
    s.settings.response.threshold = number_or(r, "response", "threshold", s.settings.response.threshold);
    if (!(s.settings.response.threshold > 0 && s.settings.response.threshold < 1))
      fail("response.threshold", "must lie in (0, 1)");
  }

  if (j.contains("scan")) {
    const auto& sc = j.at("scan");
    only_keys(sc, "scan", {"x_um", "y_um"});
    s.scan.x_um = axis(require(sc, "scan", "x_um"), "scan.x_um");
    s.scan.y_um = axis(require(sc, "scan", "y_um"), "scan.y_um");
  }

  if (j.contains("output")) {
    const auto& o = j.at("output");
    only_keys(o, "output", {"modes_csv", "scan_csv", "report_json", "impulse_csv", "profile_csv"});
    for (const auto& [k, v] : o.items()) s.output[k] = resolve(string(v, join("output", k)), base_dir);
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  return parse_scenario(cfg::load_json(path), std::filesystem::path(path).parent_path());
}

inline IndexProfile scenario_profile(const Scenario& s) {
  if (s.profile.file) return load_profile(*s.profile.file);
  return synth_gi_profile(*s.profile.synthetic);
}

/// Builds the launch; fiber launches solve the fiber's LP modes at the scenario wavelength.
inline LaunchSpec scenario_launch(const Scenario& s) {
  LaunchSpec l;
  l.offset = s.launch.offset;
  if (s.launch.kind == LaunchConfig::Kind::Gaussian) {
    l.kind = GaussianLaunch{s.launch.fwhm_um};
    return l;
  }
  auto fibre = std::make_shared<FiberModeSet>(solve_lp_modes(s.launch.fiber, s.wavelength_um));
  if (s.launch.preset) {
    l.kind = FiberLaunch{fibre, mpd_preset(*s.launch.preset, *fibre)};
  } else {
    if (s.launch.mpd.size() != fibre->size())
      cfg::fail("launch.mpd", "has " + std::to_string(s.launch.mpd.size()) + " entries but the fiber guides " +
                                  std::to_string(fibre->size()) + " modes");
    l.kind = FiberLaunch{fibre, ModePowerDistribution(s.launch.mpd)};
  }
  return l;
}

// ---------------------------------------------------------------------------
// Measured power CSV: offset_x_um,offset_y_um,power_db

inline std::vector<PowerSample> parse_power_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!trim(line).empty()) break;
  }
  if (trim(line) != "offset_x_um,offset_y_um,power_db")
    throw ValidationError(source + ": expected header 'offset_x_um,offset_y_um,power_db'");
  std::vector<PowerSample> out;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cols = detail::split_commas(line);
    if (cols.size() != 3) throw ValidationError(source + ": line " + std::to_string(row) + ": expected three columns");
    const auto x = parse_double(cols[0]), y = parse_double(cols[1]), p = parse_double(cols[2]);
    if (!x || !y || !p || !std::isfinite(*x) || !std::isfinite(*y) || !std::isfinite(*p))
      throw ValidationError(source + ": line " + std::to_string(row) + ": malformed number");
    out.push_back({{*x, *y}, *p});
  }
  return out;
}

inline std::vector<PowerSample> load_power_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open measured power file '" + path + "'");
  return parse_power_csv(in, path);
}

// ---------------------------------------------------------------------------
// Budget config

inline BudgetSpec parse_budget(const json& j) {
  using namespace cfg;
  only_keys(j, "", {"launch_power", "nep", "rx_bandwidth", "q_factor", "wg_loss", "length", "other_losses"});
  BudgetSpec b;
  b.launch_power = number(j, "", "launch_power");
  b.nep = number(j, "", "nep");
  b.rx_bandwidth = number(j, "", "rx_bandwidth");
  b.q_factor = number_or(j, "", "q_factor", default_q_factor);
  b.wg_loss = number(j, "", "wg_loss");
  b.length = number(j, "", "length");
  b.other_losses = number_or(j, "", "other_losses", 0.0);
  b.validate();
  return b;
}

// ---------------------------------------------------------------------------
// Reports. Non-finite numbers are written as null.

namespace report {

inline ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

inline ordered_json budget(const BudgetSpec& s, const BudgetReport& r) {
  ordered_json j;
  j["sensitivity_dbm"] = num(r.sensitivity_dbm);
  j["q_factor"] = s.q_factor;
  j["budget_db"] = num(r.budget_db);
  j["path_loss_db"] = r.path_loss_db;
  j["margin_db"] = num(r.margin_db);
  j["feasible"] = r.feasible;
  return j;
}

inline ordered_json pulse(const PulseFit& f) {
  ordered_json j;
  j["shape"] = to_string(f.shape);
  j["pulse_fwhm_ps"] = f.pulse_fwhm_ps;
  j["rmse"] = f.rmse;
  j["baseline"] = f.baseline;
  j["scale"] = f.scale;
  j["ac_fwhm_ps"] = f.ac_fwhm_ps;
  j["center_ps"] = f.center_ps;
  j["poor_fit"] = f.poor_fit;
  ordered_json c;
  for (std::size_t k = 0; k < all_pulse_shapes.size(); ++k) c[to_string(all_pulse_shapes[k])] = num(f.candidate_rmse[k]);
  j["candidate_rmse"] = c;
  return j;
}

inline ordered_json response(const ChannelResponse& r, Offset offset, std::size_t n_modes, const LossModel& loss) {
  ordered_json j;
  j["offset_um"] = {offset.x, offset.y};
  j["length_m"] = r.length_m;
  j["n_modes"] = n_modes;
  j["loss_cutoff_index"] = loss.cutoff_index == LossModel{}.cutoff_index ? ordered_json(nullptr) : ordered_json(loss.cutoff_index);
  j["bin_width_ps"] = r.bin_width_ps;
  j["f3db_ghz"] = num(r.f3db_ghz);
  j["blp_ghz_m"] = num(r.blp_ghz_m);
  j["exceeds_nyquist"] = r.exceeds_nyquist;
  j["coupled_power"] = r.coupled_power;
  j["received_power"] = r.received_power;
  return j;
}

inline ordered_json loss_fit(const LossFit& f) {
  ordered_json j;
  j["cutoff_index"] = f.model.cutoff_index;
  j["rmse_db"] = f.rmse_db;
  ordered_json all = ordered_json::array();
  for (double v : f.rmse_by_cutoff) all.push_back(num(v));
  j["rmse_by_cutoff"] = all;
  return j;
}

}  // namespace report

}  // namespace mmwg

// mmwg: command-line front end.
//
// Exit status: 0 success, 1 validation error (bad input, config or usage),
// 2 numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "mmwg/config.hpp"
#include "mmwg/dispersion.hpp"
#include "mmwg/fibermodes.hpp"
#include "mmwg/linkbudget.hpp"
#include "mmwg/modesolver.hpp"
#include "mmwg/pulse.hpp"

using namespace mmwg;

namespace {

struct Globals {
  int threads = default_thread_count();
  std::uint64_t seed = 1;
};

// Content is assembled first so a failure never leaves a truncated file.
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write output file '" + path + "'");
  out << content;
  if (!out) throw ValidationError("failed writing output file '" + path + "'");
}

std::string pick_output(const std::string& flag, const Scenario& s, const char* key) {
  if (!flag.empty()) return flag;
  const auto it = s.output.find(key);
  return it == s.output.end() ? std::string() : it->second;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

LinkScenario prepare(const Scenario& sc, LossFit* fit_out = nullptr) {
  const IndexProfile profile = scenario_profile(sc);
  LinkScenario s = build_scenario(profile, sc.wavelength_um, sc.length_m, scenario_launch(sc), sc.loss, sc.settings);
  if (!sc.scan.empty()) s.scan = sc.scan.offsets();
  if (sc.loss_fit_file) {
    const LossFit f = fit_loss_model(load_power_csv(*sc.loss_fit_file), s);
    s.loss = f.model;
    if (fit_out) *fit_out = f;
  }
  return s;
}

int cmd_profile(const std::string& config, const std::string& out) {
  const Scenario sc = load_scenario(config);
  const IndexProfile p = scenario_profile(sc);
  std::ostringstream os;
  write_grid_csv(os, p.grid(), p.values(), p.wavelength_ref());
  emit(pick_output(out, sc, "profile_csv"), os.str());
  return 0;
}

int cmd_modes(const std::string& config, const std::string& out, bool skip_group) {
  const Scenario sc = load_scenario(config);
  const IndexProfile p = scenario_profile(sc);
  WaveguideModeSet modes = solve_modes(p, sc.wavelength_um, sc.settings.max_modes, sc.settings.solver);
  if (!skip_group && !modes.empty())
    modes = group_indices(p, sc.wavelength_um, sc.settings.delta_lambda_um, std::move(modes), sc.settings.solver);
  std::ostringstream os;
  write_modeset_csv(os, modes);
  emit(pick_output(out, sc, "modes_csv"), os.str());
  return 0;
}

int cmd_fiber_modes(const std::string& config, const std::string& out) {
  const json j = cfg::load_json(config);
  cfg::only_keys(j, "", {"fiber", "wavelength_um"});
  const RadialFiberSpec f = j.contains("fiber") ? cfg::fiber_spec(j.at("fiber"), "fiber") : RadialFiberSpec{};
  const double wl = cfg::positive(cfg::number(j, "", "wavelength_um"), "wavelength_um");
  std::ostringstream os;
  write_fiber_modeset_csv(os, solve_lp_modes(f, wl));
  emit(out, os.str());
  return 0;
}

int cmd_scan(const std::string& config, const std::string& out, const Globals& g) {
  const Scenario sc = load_scenario(config);
  if (sc.scan.empty()) throw ValidationError("config: scan: missing required field (needed by the scan command)");
  const LinkScenario s = prepare(sc);
  std::ostringstream os;
  write_scan_csv(os, scan_offsets(s, s.scan, g.threads));
  emit(pick_output(out, sc, "scan_csv"), os.str());
  return 0;
}

int cmd_simulate(const std::string& config, const std::string& out, const std::string& impulse) {
  const Scenario sc = load_scenario(config);
  const LinkScenario s = prepare(sc);
  const ChannelResponse r = simulate_at(s, sc.launch.offset);
  ordered_json j = report::response(r, sc.launch.offset, s.modes.size(), s.loss);
  emit(pick_output(out, sc, "report_json"), dump(j));
  const std::string ipath = pick_output(impulse, sc, "impulse_csv");
  if (!ipath.empty()) {
    std::ostringstream os;
    os << "t_ps,power\n";
    for (std::size_t k = 0; k < r.h.size(); ++k) os << format_double(r.t_ps(k)) << ',' << format_double(r.h[k]) << '\n';
    emit(ipath, os.str());
  }
  return 0;
}

int cmd_fit_loss(const std::string& config, const std::string& measured, const std::string& out) {
  Scenario sc = load_scenario(config);
  if (!measured.empty()) sc.loss_fit_file = measured;
  if (!sc.loss_fit_file) throw ValidationError("config: loss.fit: missing required field (or pass --measured)");
  LossFit f;
  prepare(sc, &f);
  emit(pick_output(out, sc, "report_json"), dump(report::loss_fit(f)));
  return 0;
}

int cmd_fit_pulse(const std::string& trace, const std::string& b2b, double threshold, double floor,
                  const std::string& out) {
  PulseFitOptions opt;
  opt.poor_fit_threshold = threshold;
  const PulseFit fit = fit_autocorrelation(load_trace(trace), opt);
  ordered_json j = report::pulse(fit);
  if (!b2b.empty()) {
    const PulseFit ref = fit_autocorrelation(load_trace(b2b), opt);
    DeconvolutionOptions d;
    d.floor = floor;
    j["back_to_back"] = report::pulse(ref);
    j["link_f3db_ghz"] = report::num(link_bandwidth(ref, fit, d));
  }
  emit(out, dump(j));
  return 0;
}

int cmd_budget(const std::string& config, const std::string& out) {
  const BudgetSpec spec = parse_budget(cfg::load_json(config));
  emit(out, dump(report::budget(spec, budget(spec))));
  return 0;
}

int cmd_synth_trace(const SyntheticTraceSpec& base, const std::string& shape, const std::string& out, const Globals& g) {
  SyntheticTraceSpec s = base;
  s.shape = parse_pulse_shape(shape);
  s.seed = g.seed;
  std::ostringstream os;
  write_trace_csv(os, synth_autocorrelation(s));
  emit(out, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modal dispersion simulator and measurement analysis for multimode waveguides"};
  app.set_version_flag("--version", std::string("mmwg ") + MMWG_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--threads", g.threads, "Worker threads for offset scans")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Noise seed for synthetic traces");

  std::string config, out, impulse, measured, trace, b2b, shape = "gaussian";
  bool skip_group = false;
  double threshold = PulseFitOptions{}.poor_fit_threshold;
  double floor = DeconvolutionOptions{}.floor;
  SyntheticTraceSpec synth;
  synth.snr_db = std::numeric_limits<double>::infinity();

  auto* profile = app.add_subcommand("profile", "Export the scenario's index profile as CSV");
  auto* modes = app.add_subcommand("modes", "Solve waveguide modes and export n_eff / n_group CSV");
  auto* fiber = app.add_subcommand("fiber-modes", "List LP modes of a circular fiber");
  auto* scan = app.add_subcommand("scan", "Bandwidth and BLP versus launch offset (CSV)");
  auto* simulate = app.add_subcommand("simulate", "Channel response at the configured launch offset (JSON)");
  auto* fitloss = app.add_subcommand("fit-loss", "Fit the step mode-selective loss to measured power (JSON)");
  auto* fitpulse = app.add_subcommand("fit-pulse", "Fit an autocorrelation trace (JSON)");
  auto* budget_cmd = app.add_subcommand("budget", "Link power budget (JSON)");
  auto* synthtrace = app.add_subcommand("synth-trace", "Generate a synthetic autocorrelation trace (CSV)");

  for (auto* c : {profile, modes, fiber, scan, simulate, fitloss, budget_cmd}) {
    c->add_option("config", config, "JSON config")->required()->check(CLI::ExistingFile);
  }
  for (auto* c : {profile, modes, fiber, scan, simulate, fitloss, fitpulse, budget_cmd, synthtrace}) {
    c->add_option("-o,--output", out, "Output path (default: config output block or stdout)");
  }
  modes->add_flag("--no-group-index", skip_group, "Skip the group-index solves");
  simulate->add_option("--impulse", impulse, "Also write the binned impulse response CSV");
  fitloss->add_option("--measured", measured, "Measured power CSV (overrides loss.fit)")->check(CLI::ExistingFile);
  fitpulse->add_option("trace", trace, "Output trace CSV")->required()->check(CLI::ExistingFile);
  fitpulse->add_option("--b2b", b2b, "Back-to-back trace CSV; adds the deconvolved link bandwidth")
      ->check(CLI::ExistingFile);
  fitpulse->add_option("--poor-fit-threshold", threshold, "Flag fits with rmse/scale above this");
  fitpulse->add_option("--floor", floor, "Deconvolution floor relative to the back-to-back spectrum peak");
  synthtrace->add_option("--shape", shape, "sech2, gaussian or lorentzian");
  synthtrace->add_option("--fwhm", synth.pulse_fwhm_ps, "Pulse FWHM, ps");
  synthtrace->add_option("--snr", synth.snr_db, "Signal-to-noise ratio, dB (omit for a noiseless trace)");
  synthtrace->add_option("--samples", synth.samples, "Number of samples");
  synthtrace->add_option("--baseline", synth.baseline, "Pedestal added under the trace");
  synthtrace->add_option("--center", synth.center_ps, "Trace centre, ps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*profile) return cmd_profile(config, out);
    if (*modes) return cmd_modes(config, out, skip_group);
    if (*fiber) return cmd_fiber_modes(config, out);
    if (*scan) return cmd_scan(config, out, g);
    if (*simulate) return cmd_simulate(config, out, impulse);
    if (*fitloss) return cmd_fit_loss(config, measured, out);
    if (*fitpulse) return cmd_fit_pulse(trace, b2b, threshold, floor, out);
    if (*budget_cmd) return cmd_budget(config, out);
    if (*synthtrace) return cmd_synth_trace(synth, shape, out, g);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mmwg/config.hpp"

namespace fs = std::filesystem;
using namespace mmwg;

namespace {

struct Run {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("mmwg_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run run(const std::string& args) {
  const fs::path o = scratch() / "stdout.txt", e = scratch() / "stderr.txt";
  const std::string cmd = std::string(MMWG_CLI) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

std::string config(const std::string& name) { return (fs::path(MMWG_CONFIGS) / name).string(); }

fs::path write(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

Scenario parse(const std::string& text) { return parse_scenario(json::parse(text)); }

std::string validation_message(const std::string& text) {
  try {
    parse(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Cli, BudgetPaperScenario) {
  const auto r = run("budget " + config("budget_paper.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"margin_db\": 5.0"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("\"budget_db\": 9.0"), std::string::npos);
  EXPECT_NE(r.out.find("\"feasible\": true"), std::string::npos);
}

TEST(Cli, MissingWavelengthIsValidationError) {
  const auto p = write("nowl.json", R"({"profile": {"synthetic": {}}, "length_m": 1})");
  const auto r = run("simulate " + p.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("wavelength_um"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("frobnicate x").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("budget /nonexistent/config.json").code, 1);
  EXPECT_EQ(run("--version").code, 0);
}

TEST(Cli, NumericalFailureExitCode) {
  const auto p = write("flat.json", R"({"profile": {"synthetic": {"delta_n": 0}}, "wavelength_um": 0.85})");
  const auto r = run("simulate " + p.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("guides no modes"), std::string::npos);
}

TEST(Cli, ScanIsThreadCountIndependent) {
  const auto a = run("scan --threads 1 " + config("small_channel.json"));
  const auto b = run("scan --threads 3 " + config("small_channel.json"));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.rfind("offset_x_um,offset_y_um,f3db_ghz,blp_ghz_m,coupled_power_db\n-6.0000,-4.0000,", 0), 0u);
}

TEST(Cli, FitPulseReportFields) {
  const auto t = scratch() / "trace.csv";
  ASSERT_EQ(run("synth-trace --shape sech2 --fwhm 3 --snr 25 --seed 9 -o " + t.string()).code, 0);
  const auto r = run("fit-pulse " + t.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  for (const char* k : {"shape", "pulse_fwhm_ps", "rmse", "baseline", "scale"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["shape"], "sech2");
  EXPECT_NEAR(j["pulse_fwhm_ps"].get<double>(), 3.0, 0.06);
}

TEST(Cli, FitLossFromMeasuredFile) {
  // Measured curve taken from the simulator itself with every mode passing.
  const auto scan = run("scan " + config("small_channel.json"));
  ASSERT_EQ(scan.code, 0);
  std::istringstream in(scan.out);
  std::string line;
  std::getline(in, line);
  std::ostringstream m;
  m << "offset_x_um,offset_y_um,power_db\n";
  while (std::getline(in, line)) {
    std::vector<std::string> c;
    std::stringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) c.push_back(f);
    m << c[0] << ',' << c[1] << ',' << c[4] << '\n';
  }
  const auto measured = write("measured.csv", m.str());
  const auto r = run("fit-loss " + config("small_channel.json") + " --measured " + measured.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_LT(j["rmse_db"].get<double>(), 1e-3);
}

TEST(Cli, EverySubcommandIsDeterministic) {
  const auto trace = scratch() / "det_trace.csv";
  ASSERT_EQ(run("synth-trace --snr 20 --seed 3 -o " + trace.string()).code, 0);
  const auto measured = write("det_measured.csv",
                              "offset_x_um,offset_y_um,power_db\n-4,0,-3\n0,0,0\n4,0,-3\n2,4,-5\n");
  const std::vector<std::string> cmds = {
      "profile " + config("small_channel.json"),
      "modes " + config("small_channel.json"),
      "fiber-modes " + config("fiber_paper.json"),
      "scan --threads 2 " + config("small_channel.json"),
      "simulate " + config("small_channel.json"),
      "fit-loss " + config("small_channel.json") + " --measured " + measured.string(),
      "fit-pulse " + trace.string(),
      "budget " + config("budget_paper.json"),
      "synth-trace --seed 5 --snr 20",
  };
  for (const auto& c : cmds) {
    const auto a = run(c), b = run(c);
    EXPECT_EQ(a.code, 0) << c << "\n" << a.err;
    EXPECT_FALSE(a.out.empty()) << c;
    EXPECT_EQ(a.out, b.out) << c;
  }
}

TEST(Cli, InputsAreNotModified) {
  const std::string before = slurp(config("small_channel.json"));
  const auto t = fs::last_write_time(config("small_channel.json"));
  run("simulate " + config("small_channel.json"));
  EXPECT_EQ(slurp(config("small_channel.json")), before);
  EXPECT_EQ(fs::last_write_time(config("small_channel.json")), t);
}

TEST(Cli, OutputBlockAndFlag) {
  const auto out = scratch() / "report.json";
  ASSERT_EQ(run("budget " + config("budget_paper.json") + " -o " + out.string()).code, 0);
  EXPECT_NE(slurp(out).find("margin_db"), std::string::npos);
}

TEST(ScenarioConfig, FieldPathsInErrors) {
  EXPECT_NE(validation_message(R"({"profile": {"synthetic": {}}})").find("wavelength_um"), std::string::npos);
  EXPECT_NE(validation_message(R"({"profile": {"synthetic": {}}, "wavelength_um": 0.85,
                                   "launch": {"offset_um": [0, "a"]}})")
                .find("launch.offset_um[1]"),
            std::string::npos);
  EXPECT_NE(validation_message(R"({"profile": {"synthetic": {"delta": 1}}, "wavelength_um": 0.85})")
                .find("profile.synthetic.delta"),
            std::string::npos);
  EXPECT_NE(validation_message(R"({"profile": {}, "wavelength_um": 0.85})").find("exactly one"), std::string::npos);
  EXPECT_NE(validation_message(R"({"profile": {"file": "a.csv", "synthetic": {}}, "wavelength_um": 0.85})")
                .find("exactly one"),
            std::string::npos);
  EXPECT_NE(validation_message(R"({"profile": {"synthetic": {}}, "wavelength_um": 0.85,
                                   "scan": {"x_um": [], "y_um": [0]}})")
                .find("scan.x_um"),
            std::string::npos);
  EXPECT_NE(validation_message(R"({"profile": {"synthetic": {}}, "wavelength_um": 0.85,
                                   "launch": {"type": "fiber", "mpd": "mixer"}})")
                .find("launch.mpd"),
            std::string::npos);
}

TEST(ScenarioConfig, ParsesFullScenario) {
  const Scenario s = parse(R"({
    "profile": {"synthetic": {"peak_um": [0, -8], "exponent_above": 1.5}},
    "wavelength_um": 0.9, "length_m": 2.5,
    "launch": {"type": "fiber", "fiber": {"alpha": "step"}, "mpd": "mm", "offset_um": [1, 2]},
    "loss": {"cutoff_index": 7},
    "solver": {"max_modes": 50},
    "response": {"threshold": 0.7071},
    "scan": {"x_um": {"start": -2, "stop": 2, "step": 1}, "y_um": [0, 5]}
  })");
  EXPECT_EQ(s.profile.synthetic->peak.y, -8);
  EXPECT_EQ(s.profile.synthetic->shape.exponent_above, 1.5);
  EXPECT_EQ(s.wavelength_um, 0.9);
  EXPECT_EQ(s.length_m, 2.5);
  EXPECT_EQ(s.launch.kind, LaunchConfig::Kind::Fiber);
  EXPECT_TRUE(s.launch.fiber.is_step());
  EXPECT_EQ(*s.launch.preset, MpdPreset::ModeMixer);
  EXPECT_EQ(s.loss.cutoff_index, 7);
  EXPECT_EQ(s.settings.max_modes, 50);
  EXPECT_EQ(s.settings.response.threshold, 0.7071);
  const auto off = s.scan.offsets();
  ASSERT_EQ(off.size(), 10u);
  EXPECT_EQ(off[0].x, -2);
  EXPECT_EQ(off[1].x, -1);
  EXPECT_EQ(off[5].y, 5);
}

TEST(BudgetConfig, FieldsAndDefaults) {
  const auto b = parse_budget(json::parse(R"({"launch_power": 6, "nep": 38, "rx_bandwidth": 60,
                                              "wg_loss": 0.04, "length": 100})"));
  EXPECT_EQ(b.q_factor, default_q_factor);
  EXPECT_EQ(b.other_losses, 0.0);
  try {
    parse_budget(json::parse(R"({"launch_power": 6, "nep": 38, "wg_loss": 0.04, "length": 100})"));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("rx_bandwidth"), std::string::npos);
  }
}

TEST(PowerCsv, ParseAndReject) {
  std::istringstream ok("offset_x_um,offset_y_um,power_db\n1,2,-3.5\n");
  const auto v = parse_power_csv(ok);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].offset.y, 2);
  EXPECT_EQ(v[0].power_db, -3.5);
  std::istringstream bad("offset_x_um,offset_y_um,power_db\n1,2\n");
  EXPECT_THROW(parse_power_csv(bad), ValidationError);
}

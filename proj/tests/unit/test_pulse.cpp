#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mmwg/pulse.hpp"
#include "oracles.hpp"

using namespace mmwg;

namespace {

template <class F>
Trace sampled(F&& g, double lo, double hi, std::size_t n) {
  std::vector<double> d(n), a(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = lo + (hi - lo) * double(i) / double(n - 1);
    a[i] = g(d[i]);
  }
  return Trace(d, a);
}

Trace gaussian_ac(double fwhm_ac, std::size_t n = 401) {
  return sampled([&](double t) { return std::exp(-4 * std::log(2.0) * t * t / (fwhm_ac * fwhm_ac)); }, -3 * fwhm_ac,
                 3 * fwhm_ac, n);
}

// Pedestal plus white noise with variance = mean(signal^2) / 10^(snr/10).
Trace with_noise(const Trace& clean, double pedestal, double snr_db, unsigned seed) {
  double p = 0;
  for (double v : clean.amplitude) p += v * v;
  const double sigma = std::sqrt(p / double(clean.size()) / std::pow(10.0, snr_db / 10));
  std::mt19937 rng(seed * 7919u + 17u);
  std::normal_distribution<double> n(0.0, sigma);
  Trace out = clean;
  for (auto& v : out.amplitude) v = std::max(0.0, v + pedestal + n(rng));
  return out;
}

}  // namespace

TEST(PulseFit, NoiselessGaussian) {
  const auto f = fit_autocorrelation(gaussian_ac(10.0));
  EXPECT_EQ(f.shape, PulseShape::Gaussian);
  EXPECT_NEAR(f.pulse_fwhm_ps, 10.0 / std::sqrt(2.0), 7.071e-3);
  EXPECT_NEAR(f.ac_fwhm_ps, 10.0, 1e-6);
  EXPECT_LT(f.rmse, 1e-8);
  EXPECT_FALSE(f.poor_fit);
}

TEST(PulseFit, NoiselessSech2FromQuadrature) {
  const double t0 = 4.0;
  const double pulse_fwhm = 2 * std::acosh(std::sqrt(2.0)) * t0;
  const auto tr = sampled([&](double t) { return mmwg::testing::sech2_autocorrelation(t, t0); }, -15 * t0, 15 * t0, 241);
  const auto f = fit_autocorrelation(tr);
  EXPECT_EQ(f.shape, PulseShape::Sech2);
  EXPECT_NEAR(f.pulse_fwhm_ps, pulse_fwhm, 5e-3 * pulse_fwhm);
  EXPECT_NEAR(f.ac_fwhm_ps / f.pulse_fwhm_ps, 1.5427, 5e-4);
}

TEST(PulseFit, NoiselessLorentzian) {
  const double w = 6.0;
  const auto tr = sampled([&](double t) { return 3.0 / (1 + 4 * t * t / (w * w)) + 0.2; }, -40, 40, 321);
  const auto f = fit_autocorrelation(tr);
  EXPECT_EQ(f.shape, PulseShape::Lorentzian);
  EXPECT_NEAR(f.pulse_fwhm_ps, w / 2, 1e-6);
  EXPECT_NEAR(f.baseline, 0.2, 1e-6);
  EXPECT_NEAR(f.scale, 3.0, 1e-6);
}

TEST(PulseFit, SelectedRmseIsMinimum) {
  const auto f = fit_autocorrelation(with_noise(gaussian_ac(12.0), 0.5, 20, 3));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(f.rmse, f.candidate_rmse[k]);
  for (auto s : all_pulse_shapes) EXPECT_GE(fit_shape(with_noise(gaussian_ac(12.0), 0.5, 20, 3), s).rmse, f.rmse);
}

TEST(PulseFit, MonteCarloTwentyDbSnr) {
  const double pulse = 7.0;
  for (auto shape : {PulseShape::Gaussian, PulseShape::Sech2}) {
    const double t0 = pulse / (2 * std::acosh(std::sqrt(2.0)));
    const double wac = pulse * std::sqrt(2.0);
    const Trace clean = shape == PulseShape::Gaussian
                            ? gaussian_ac(wac, 1001)
                            : sampled([&](double t) { return mmwg::testing::sech2_autocorrelation(t, t0); },
                                      -3 * 1.5427 * pulse, 3 * 1.5427 * pulse, 1001);
    int wrong = 0;
    double worst = 0;
    for (unsigned seed = 1; seed <= 100; ++seed) {
      const auto f = fit_autocorrelation(with_noise(clean, 0.5, 20, seed));
      if (f.shape != shape) ++wrong;
      worst = std::max(worst, std::abs(f.pulse_fwhm_ps / pulse - 1));
    }
    EXPECT_EQ(wrong, 0) << to_string(shape);
    EXPECT_LT(worst, 0.02) << to_string(shape);
  }
}

TEST(PulseFit, InvariantUnderScaleAndShift) {
  const Trace base = with_noise(gaussian_ac(9.0), 0.5, 20, 11);
  const auto ref = fit_autocorrelation(base);
  Trace moved = base;
  for (auto& d : moved.delay_ps) d += 123.4;
  for (auto& a : moved.amplitude) a *= 37.5;
  const auto f = fit_autocorrelation(moved);
  EXPECT_EQ(f.shape, ref.shape);
  EXPECT_NEAR(f.pulse_fwhm_ps / ref.pulse_fwhm_ps, 1.0, 1e-6);
  EXPECT_NEAR(f.center_ps - 123.4, ref.center_ps, 1e-6);
  EXPECT_NEAR(f.rmse / ref.rmse, 37.5, 37.5e-6);
}

TEST(PulseFit, RoundTrip) {
  for (unsigned seed : {2u, 5u, 9u}) {
    const auto first = fit_autocorrelation(with_noise(gaussian_ac(8.0), 0.5, 20, seed));
    const auto regenerated = sampled([&](double t) { return first.model(t); }, -30, 30, 301);
    const auto second = fit_autocorrelation(regenerated);
    EXPECT_EQ(second.shape, first.shape);
    EXPECT_NEAR(second.pulse_fwhm_ps, first.pulse_fwhm_ps, 1e-3 * first.pulse_fwhm_ps);
  }
}

TEST(PulseFit, StructuredTraceIsFlagged) {
  const auto tr = sampled([](double t) { return std::exp(-t * t / 4) + 0.9 * std::exp(-(t - 9) * (t - 9) / 4); }, -30, 40,
                          351);
  EXPECT_TRUE(fit_autocorrelation(tr).poor_fit);
  EXPECT_FALSE(fit_autocorrelation(gaussian_ac(5.0)).poor_fit);
}

TEST(PulseFit, Rejections) {
  EXPECT_THROW(fit_autocorrelation(sampled([](double) { return 2.0; }, 0, 10, 40)), ValidationError);
  EXPECT_THROW(fit_autocorrelation(sampled([](double t) { return t; }, 0, 10, 40)), ValidationError);
  EXPECT_THROW(Trace(std::vector<double>(10, 0.0), std::vector<double>(10, 1.0)), ValidationError);
  std::vector<double> d(20), a(20, 1.0);
  for (int i = 0; i < 20; ++i) d[std::size_t(i)] = i;
  d[7] = d[6];
  EXPECT_THROW(Trace(d, a), ValidationError);
  d[7] = 6.5;
  a[3] = -0.1;
  EXPECT_THROW(Trace(d, a), ValidationError);
}

TEST(TraceCsv, RoundTripAndErrors) {
  const Trace t = gaussian_ac(4.0, 33);
  std::ostringstream out;
  write_trace_csv(out, t);
  std::istringstream in(out.str());
  const Trace back = parse_trace_csv(in);
  EXPECT_EQ(back.delay_ps, t.delay_ps);
  EXPECT_EQ(back.amplitude, t.amplitude);
  std::istringstream bad("delay,amp\n0,1\n");
  EXPECT_THROW(parse_trace_csv(bad), ValidationError);
  std::istringstream ragged("delay_ps,amplitude\n0,1,2\n");
  EXPECT_THROW(parse_trace_csv(ragged), ValidationError);
}

TEST(SynthTrace, NoiseLevelAndDeterminism) {
  SyntheticTraceSpec s;
  s.snr_db = 20;
  s.seed = 42;
  const Trace a = synth_autocorrelation(s);
  EXPECT_EQ(a.amplitude, synth_autocorrelation(s).amplitude);
  SyntheticTraceSpec clean = s;
  clean.snr_db = std::numeric_limits<double>::infinity();
  const Trace c = synth_autocorrelation(clean);
  double sig = 0, res = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    sig += std::pow(c.amplitude[i] - s.baseline, 2);
    res += std::pow(a.amplitude[i] - c.amplitude[i], 2);
  }
  EXPECT_NEAR(10 * std::log10(sig / res), 20.0, 0.5);
  s.seed = 43;
  EXPECT_NE(a.amplitude, synth_autocorrelation(s).amplitude);
}

TEST(LinkBandwidth, GaussianClosedForm) {
  PulseFit b2b, out;
  b2b.pulse_fwhm_ps = 1.0;
  out.pulse_fwhm_ps = 20.0;
  // |H| = exp(-2 pi^2 f^2 sigma^2) = 1/2 with sigma = FWHM / (2 sqrt(2 ln 2)).
  const double k = 2 * std::sqrt(2 * std::log(2.0));
  const double sigma = std::sqrt(std::pow(20.0 / k, 2) - std::pow(1.0 / k, 2));
  const double f_thz = std::sqrt(std::log(2.0) / 2) / (M_PI * sigma);
  EXPECT_NEAR(link_bandwidth(b2b, out), f_thz * 1e3, 1e-2 * f_thz * 1e3);
}

TEST(LinkBandwidth, LorentzianClosedForm) {
  PulseFit b2b, out;
  b2b.shape = out.shape = PulseShape::Lorentzian;
  b2b.pulse_fwhm_ps = 2.0;
  out.pulse_fwhm_ps = 12.0;
  EXPECT_NEAR(link_bandwidth(b2b, out), std::log(2.0) / (M_PI * 10.0) * 1e3, 1e-6);
}

TEST(LinkBandwidth, IdenticalNarrowingAndMonotone) {
  PulseFit a;
  a.shape = PulseShape::Sech2;
  a.pulse_fwhm_ps = 1.0;
  EXPECT_TRUE(std::isinf(link_bandwidth(a, a)));
  PulseFit narrow = a;
  narrow.pulse_fwhm_ps = 0.9;
  try {
    link_bandwidth(a, narrow);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("nonphysical narrowing"), std::string::npos);
  }
  double prev = std::numeric_limits<double>::infinity();
  for (double w : {1.5, 3.0, 6.0, 12.0}) {
    PulseFit o = a;
    o.pulse_fwhm_ps = w;
    const double f = link_bandwidth(a, o);
    EXPECT_LT(f, prev);
    prev = f;
  }
}

TEST(LinkBandwidth, FloorLimitsTheSearch) {
  // A slightly broader output whose -3 dB point lies beyond where the
  // back-to-back spectrum has fallen under the floor.
  PulseFit b2b, out;
  b2b.pulse_fwhm_ps = 1.0;
  out.pulse_fwhm_ps = 1.03;
  EXPECT_TRUE(std::isinf(link_bandwidth(b2b, out)));
  DeconvolutionOptions loose;
  loose.floor = 1e-8;
  EXPECT_TRUE(std::isfinite(link_bandwidth(b2b, out, loose)));
}

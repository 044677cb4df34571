#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "approx.hpp"
#include "opll/analysis.hpp"
#include "opll/noise.hpp"
#include "opll/simengine.hpp"
#include "support.hpp"

using namespace opll;

namespace {

PhaseSeries tone(double amplitude, double f, double fs, std::size_t n) {
  PhaseSeries s;
  s.sample_rate = fs;
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.samples[i] = amplitude * std::sin(test::kTwoPi * f * s.time(i));
  return s;
}

PhaseSeries white(double sigma, double fs, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  PhaseSeries s;
  s.sample_rate = fs;
  s.samples.resize(n);
  for (double& x : s.samples) x = g(rng);
  return s;
}

// carrier at f0 plus white Gaussian phase noise of the given variance
PhaseSeries noisy_carrier(double variance, double f0, double fs, std::size_t n, std::uint64_t seed) {
  auto s = white(std::sqrt(variance), fs, n, seed);
  for (std::size_t i = 0; i < n; ++i) s.samples[i] += test::kTwoPi * f0 * s.time(i);
  return s;
}

// textbook double sum for Mod sigma_y^2 at n tau0
double mvar_direct(const std::vector<double>& phase, double tau0, double nu0, std::size_t n) {
  const std::size_t m = phase.size();
  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = phase[i] / (test::kTwoPi * nu0);
  double acc = 0.0;
  for (std::size_t j = 0; j + 3 * n <= m; ++j) {
    double inner = 0.0;
    for (std::size_t i = j; i < j + n; ++i) inner += x[i + 2 * n] - 2.0 * x[i + n] + x[i];
    acc += inner * inner;
  }
  const double nn = static_cast<double>(n);
  return acc / (2.0 * nn * nn * nn * nn * tau0 * tau0 * static_cast<double>(m - 3 * n + 1));
}

double mvar_slope(const PowerLawNoiseSpec& spec, int seeds) {
  const std::size_t m = std::size_t{1} << 18;
  const auto taus = log_spaced_taus(1.0, 8.0, 2000.0, 8);
  std::vector<double> mean_var(taus.size(), 0.0);
  std::vector<double> snapped;
  for (int seed = 1; seed <= seeds; ++seed) {
    const auto s = synthesize_power_law(spec, m, 1.0, seed);
    const auto curve = mod_allan(s, 1.0, taus);
    snapped = curve.taus;
    for (std::size_t i = 0; i < taus.size(); ++i) mean_var[i] += curve.mdev[i] * curve.mdev[i] / seeds;
  }
  std::vector<double> mdev;
  for (double v : mean_var) mdev.push_back(std::sqrt(v));
  return fit_loglog_slope(snapped, mdev, 8.0, 2000.0).slope;
}

}  // namespace

TEST_CASE("Welch: a tone integrates to A^2 / 2") {
  const double fs = 1e4, a = 2.0;
  const auto s = tone(a, 1234.5, fs, 1 << 16);
  const auto sp = welch_psd(s, 4096, 0.5);
  CHECK(sp.integral() == test::approx(a * a / 2.0).epsilon(0.02));
  CHECK_FALSE(sp.two_sided);
  CHECK(sp.freqs.front() == 0.0);
  CHECK(sp.freqs.back() == test::approx(fs / 2.0));
  const double df = sp.bin_width();
  for (std::size_t i = 1; i < sp.freqs.size(); ++i) {
    REQUIRE(sp.freqs[i] - sp.freqs[i - 1] == test::approx(df).epsilon(1e-12));
  }
  for (double p : sp.psd) REQUIRE(p >= 0.0);
  CHECK(sp.rbw_equivalent == test::approx(1.5 * df).epsilon(1e-3));  // Hann
}

TEST_CASE("Welch: white noise is flat at sigma^2 / (fs / 2)") {
  const double fs = 1e3, sigma = 0.7;
  const auto sp = welch_psd(white(sigma, fs, 1 << 18, 3), 1024, 0.5);
  double acc = 0.0;
  for (std::size_t i = 1; i + 1 < sp.psd.size(); ++i) acc += sp.psd[i];
  acc /= static_cast<double>(sp.psd.size() - 2);
  CHECK(acc == test::approx(sigma * sigma / (fs / 2.0)).epsilon(0.05));
}

TEST_CASE("Welch: tone plus noise is the sum of the parts") {
  const double fs = 1e4;
  const auto t = tone(1.0, 1000.0, fs, 1 << 16);
  const auto w = white(0.3, fs, 1 << 16, 8);
  auto both = t;
  for (std::size_t i = 0; i < both.size(); ++i) both.samples[i] += w.samples[i];
  const auto st = welch_psd(t, 2048, 0.5), sw = welch_psd(w, 2048, 0.5), sb = welch_psd(both, 2048, 0.5);
  CHECK(sb.integral() == test::approx(st.integral() + sw.integral()).epsilon(0.02));
  // away from the tone the sum is the noise alone, within the estimator scatter
  double got = 0.0, want = 0.0;
  for (std::size_t i = 0; i < sb.psd.size(); ++i) {
    if (std::abs(sb.freqs[i] - 1000.0) < 50.0) continue;
    got += sb.psd[i];
    want += st.psd[i] + sw.psd[i];
  }
  CHECK(got == test::approx(want).epsilon(0.02));
}

TEST_CASE("Welch: Parseval on synthesized power-law noise") {
  for (const auto& spec : {PowerLawNoiseSpec::single(0, 1e-6), PowerLawNoiseSpec{{{0, 1e-8}, {-2, 1.0}}}}) {
    const auto s = synthesize_power_law(spec, 1 << 18, 1e5, 12);
    double ms = 0.0;
    for (double x : s.samples) ms += x * x;
    ms /= static_cast<double>(s.size());
    const auto sp = welch_psd(s, 1 << 15, 0.5, Detrend::none);
    // a single realization of red noise has scatter of its own; compare the estimator to it
    CHECK(sp.integral() == test::approx(ms).epsilon(0.1));
  }
  const auto w = synthesize_power_law(PowerLawNoiseSpec::single(0, 1e-6), 1 << 18, 1e5, 13);
  double ms = 0.0;
  for (double x : w.samples) ms += x * x;
  CHECK(welch_psd(w, 4096, 0.5).integral() == test::approx(ms / double(w.size())).epsilon(0.02));
}

TEST_CASE("Welch: bad segment requests") {
  const auto s = white(1.0, 1.0, 100, 1);
  CHECK_THROWS_AS(welch_psd(s, 101, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(welch_psd(s, 1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(welch_psd(s, 50, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(welch_psd(s, 50, -0.1), std::invalid_argument);
}

TEST_CASE("carrier fraction: exact spectra") {
  Spectrum sp;
  sp.two_sided = true;
  const std::size_t n = 1001;
  for (std::size_t i = 0; i < n; ++i) {
    sp.freqs.push_back(-500.0 + static_cast<double>(i));
    sp.psd.push_back(0.0);
  }
  sp.psd[500] = 1.0;
  auto r = carrier_phase_variance(sp);
  CHECK(r.phase_variance == 0.0);
  CHECK(r.carrier_fraction == 1.0);

  // carrier holds e^-0.08 of the power, the rest is spread evenly
  const double fraction = std::exp(-0.08);
  sp.psd.assign(n, (1.0 - fraction) / static_cast<double>(n - 3));
  sp.psd[499] = sp.psd[501] = 0.0;
  sp.psd[500] = fraction;
  r = carrier_phase_variance(sp);
  CHECK(r.carrier_fraction == test::approx(0.9231).epsilon(1e-4));
  CHECK(r.phase_variance == test::approx(0.08).epsilon(1e-9));
  CHECK(r.carrier_dominant);

  auto scaled = sp;
  for (double& p : scaled.psd) p *= 7.3e-5;
  CHECK(carrier_phase_variance(scaled).phase_variance == test::approx(0.08).epsilon(1e-9));

  // a narrower span drops part of the pedestal
  CHECK(carrier_phase_variance(sp, 0.0, 100.0).phase_variance < 0.08);

  sp.psd.assign(n, 1.0);
  CHECK_FALSE(carrier_phase_variance(sp).carrier_dominant);
  sp.psd.assign(n, 0.0);
  CHECK_THROWS_AS(carrier_phase_variance(sp), std::invalid_argument);
}

TEST_CASE("carrier fraction round trip on synthesized carriers") {
  for (double v : {0.01, 0.08, 0.19, 0.33}) {
    CAPTURE(v);
    double est = 0.0, sample_var = 0.0;
    for (int seed = 1; seed <= 10; ++seed) {
      const auto s = noisy_carrier(v, 1e5, 1e6, 1 << 16, 100 + seed);
      est += carrier_phase_variance(s, 4096).phase_variance / 10.0;
      sample_var += test::variance(detrend_linear(s).samples) / 10.0;
    }
    CHECK(est == test::approx(v).epsilon(0.2));
    CHECK(est == test::approx(sample_var).epsilon(0.2));
  }
}

TEST_CASE("carrier fraction ignores the phase series amplitude convention") {
  const auto s = noisy_carrier(0.0, 1e5, 1e6, 1 << 14, 1);
  const auto r = carrier_phase_variance(s, 1024);
  CHECK(r.phase_variance < 1e-9);
  const auto heavy = noisy_carrier(10.0, 1e5, 1e6, 1 << 14, 1);
  CHECK_FALSE(carrier_phase_variance(heavy, 1024).carrier_dominant);
}

TEST_CASE("analyzer corrections") {
  CHECK(sa_noise_corrections(-60.0, 3000.0) == test::approx(-92.78).epsilon(1e-4));
  CHECK(sa_noise_corrections(0.0, 1.0) == test::approx(1.99));
  CHECK(kLogDetectorCorrectionDb == 2.51);
  CHECK(kRbwShapeCorrectionDb == 0.52);
}

TEST_CASE("corrected density does not depend on the RBW") {
  // log-averaged envelope of Gaussian noise in a filter whose noise bandwidth
  // is 0.52 dB above its RBW
  const double density_mw_per_hz = 1e-9;
  std::mt19937_64 rng(21);
  std::exponential_distribution<double> power(1.0);
  auto reading = [&](double rbw) {
    const double mean_mw = density_mw_per_hz * rbw * std::pow(10.0, 0.052);
    double acc = 0.0;
    const int samples = 20000;
    for (int i = 0; i < samples; ++i) acc += 10.0 * std::log10(mean_mw * power(rng));
    return acc / samples;
  };
  const double c3000 = sa_noise_corrections(reading(3000.0), 3000.0);
  const double c300 = sa_noise_corrections(reading(300.0), 300.0);
  CHECK(std::abs(c3000 - c300) < 0.15);
  CHECK(c3000 == test::approx(10.0 * std::log10(density_mw_per_hz)).epsilon(0.15 / 90.0));
}

TEST_CASE("analyzer trace with a known carrier fraction") {
  const double rbw = 3000.0, spacing = 1000.0, carrier_mw = 1e-3;
  std::vector<double> f, dbm;
  const int half = 5000;
  // pedestal outside +-rbw carries carrier (e^0.08 - 1) in total
  int outside = 0;
  for (int i = -half; i <= half; ++i) outside += std::abs(i * spacing) > rbw ? 1 : 0;
  const double density = carrier_mw * (std::exp(0.08) - 1.0) / (outside * spacing);
  for (int i = -half; i <= half; ++i) {
    f.push_back(5e6 + i * spacing);
    // invert the corrections so each noise point reads back as `density`
    dbm.push_back(i == 0 ? 10.0 * std::log10(carrier_mw)
                         : 10.0 * std::log10(density) - 2.51 + 0.52 + 10.0 * std::log10(rbw));
  }
  const auto r = carrier_phase_variance_sa_trace(f, dbm, rbw);
  CHECK(r.phase_variance == test::approx(0.08).epsilon(1e-9));
}

TEST_CASE("modified Allan deviation: sliding sum equals the direct double sum") {
  const auto s = synthesize_power_law(PowerLawNoiseSpec{{{0, 1e-3}, {-2, 1.0}}}, 3000, 10.0, 4);
  const std::vector<double> taus = {0.1, 0.3, 1.0, 5.0, 30.0};
  const auto curve = mod_allan(s, 1e3, taus);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const auto n = static_cast<std::size_t>(std::llround(taus[i] * 10.0));
    CHECK(curve.mdev[i] * curve.mdev[i] == test::approx(mvar_direct(s.samples, 0.1, 1e3, n)).epsilon(1e-9));
    CHECK(curve.n_samples_per_tau[i] == s.size() - 3 * n + 1);
  }
  CHECK(curve.annotations.empty());
}

TEST_CASE("modified Allan deviation of a frequency offset is zero") {
  PhaseSeries s;
  s.sample_rate = 1e3;
  for (int i = 0; i < 10000; ++i) s.samples.push_back(test::kTwoPi * 12.345 * s.time(i) + 0.7);
  const auto curve = mod_allan(s, 1e6, log_spaced_taus(s.dt(), 1e-3, 3.0, 10));
  for (double m : curve.mdev) CHECK(m == 0.0);
}

TEST_CASE("modified Allan deviation slopes of the five power-law noises") {
  CHECK(mvar_slope(PowerLawNoiseSpec::single(0, 1.0), 2) == test::approx(-1.5).epsilon(0.1));
  CHECK(mvar_slope(PowerLawNoiseSpec::single(-1, 1.0), 2) == test::approx(-1.0).epsilon(0.15));
  CHECK(mvar_slope(PowerLawNoiseSpec::single(-2, 1.0), 2) == test::approx(-0.5).epsilon(0.3));
  CHECK(std::abs(mvar_slope(PowerLawNoiseSpec::single(-3, 1.0), 4)) < 0.15);
  CHECK(mvar_slope(PowerLawNoiseSpec::single(-4, 1.0), 4) == test::approx(0.5).epsilon(0.3));
}

TEST_CASE("modified Allan deviation: snapping and errors") {
  const auto s = synthesize_power_law(PowerLawNoiseSpec::single(0, 1.0), 100, 1.0, 1);
  const std::vector<double> taus = {2.4};
  const auto curve = mod_allan(s, 1.0, taus);
  CHECK(curve.taus[0] == 2.0);
  CHECK(curve.annotations.size() == 1);
  const std::vector<double> too_long = {34.0};
  CHECK_THROWS_AS(mod_allan(s, 1.0, too_long), std::invalid_argument);
  CHECK_THROWS_AS(mod_allan(s, 0.0, taus), std::invalid_argument);
}

TEST_CASE("log-spaced taus are unique multiples of tau0") {
  const auto t = log_spaced_taus(0.01, 0.01, 100.0, 10);
  CHECK(t.front() == test::approx(0.01));
  CHECK(t.back() <= 100.0 * (1.0 + 1e-12));
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(std::abs(t[i] / 0.01 - std::round(t[i] / 0.01)) < 1e-9);
    if (i > 0) CHECK(t[i] > t[i - 1]);
  }
  CHECK(t.size() >= 35);
}

TEST_CASE("log-log slope fits") {
  std::vector<double> x, y;
  for (double v = 1.0; v <= 1e6; v *= 1.3) {
    x.push_back(v);
    y.push_back(3.0 * std::pow(v, -0.75));
  }
  const auto fit = fit_loglog_slope(x, y, 1.0, 1e6);
  CHECK(fit.slope == test::approx(-0.75).epsilon(1e-12));
  CHECK(fit.intercept == test::approx(std::log10(3.0)).epsilon(1e-12));
  CHECK(fit.half_width < 1e-9);

  // y ~ x^-1 up to 100, then x^0.5
  y.clear();
  for (double v : x) y.push_back(v < 100.0 ? 1.0 / v : 1e-2 * std::pow(v / 100.0, 0.5));
  CHECK(fit_loglog_slope(x, y, 1.0, 50.0).slope == test::approx(-1.0).epsilon(0.1));
  CHECK(fit_loglog_slope(x, y, 1e3, 1e6).slope == test::approx(0.5).epsilon(0.2));

  CHECK_THROWS_AS(fit_loglog_slope(x, y, 1.0, 2.0), std::invalid_argument);
  y[3] = 0.0;
  CHECK_THROWS_AS(fit_loglog_slope(x, y, 1.0, 1e6), std::invalid_argument);
}

TEST_CASE("RMS phase variance") {
  PhaseSeries s;
  s.sample_rate = 1e8;
  s.samples.assign(100000, 1.25);
  CHECK(rms_phase_variance(s, 5e6) == 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) s.samples[i] = 3.0 + 1e4 * s.time(i);
  CHECK(rms_phase_variance(s, 5e6) < 1e-20);
  // bin means of 20 white samples carry a twentieth of the variance
  const auto w = white(1.0, 1e8, 2000000, 6);
  CHECK(rms_phase_variance(w, 5e6) == test::approx(1.0 / 20.0).epsilon(0.05));
}

TEST_CASE("RMS phase of two slaves falls with the reference noise") {
  SimConfig c;
  c.duration_s = 2e-3;
  auto b = c;
  b.seed = 2;
  double last = INFINITY;
  for (double level : {-90.0, -115.0}) {
    c.ref_noise = DbcSpec::flat(level);
    b.ref_noise = DbcSpec::flat(level);
    const auto r = two_slave_experiment(c, b, {9, std::nullopt});
    REQUIRE(r.ok());
    PhaseSeries d = r.measured;
    d.samples.erase(d.samples.begin(), d.samples.begin() + static_cast<std::ptrdiff_t>(d.size() / 5));
    const double v = rms_phase_variance(d, 5e6);
    CHECK(std::isfinite(v));
    CHECK(v < last);
    last = v;
  }
}

TEST_CASE("detrending and the drift high-pass") {
  PhaseSeries s;
  s.sample_rate = 1e3;
  for (int i = 0; i < 1000; ++i) s.samples.push_back(2.0 - 0.5 * s.time(i));
  for (double x : detrend_linear(s).samples) CHECK(std::abs(x) < 1e-12);

  PhaseSeries dc;
  dc.sample_rate = 1e3;
  dc.samples.assign(20000, 4.0);
  dc.samples[0] = 0.0;
  const auto h = highpass_phase(dc, 10.0);
  CHECK(std::abs(h.samples.back()) < 1e-12);

  for (auto [f, gain] : {std::pair{10.0, 1.0 / std::sqrt(2.0)}, {200.0, 1.0}}) {
    const auto t = tone(1.0, f, 1e3, 100000);
    const auto out = highpass_phase(t, 10.0);
    const double rms = std::sqrt(2.0 * test::variance(test::tail(out.samples, 0.5)));
    CHECK(rms == test::approx(gain).epsilon(0.01));
  }
  CHECK_THROWS_AS(highpass_phase(dc, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(highpass_phase(dc, 600.0), std::invalid_argument);
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace opll {

/// Uniformly sampled, unwrapped instantaneous phase in radians.
struct PhaseSeries {
  std::vector<double> samples;
  double sample_rate = 1.0;  // Hz
  double t0 = 0.0;           // s

  std::size_t size() const { return samples.size(); }
  double dt() const { return 1.0 / sample_rate; }
  double time(std::size_t i) const { return t0 + static_cast<double>(i) / sample_rate; }

  /// Throws std::invalid_argument unless sample_rate > 0 and the series is non-empty.
  void validate() const;
};

/// One term b * f^alpha of a one-sided phase PSD.
struct PowerLawTerm {
  int exponent = 0;          // alpha in {0, -1, -2, -3, -4}
  double coefficient = 0.0;  // b_alpha in rad^2 Hz^(-alpha-1)
};

/// One-sided phase PSD S_phi(f) = sum_alpha b_alpha f^alpha.
///
/// The exponents map onto the usual oscillator noise taxonomy:
///   0 white PM, -1 flicker PM, -2 white FM, -3 flicker FM, -4 random-walk FM.
struct PowerLawNoiseSpec {
  std::vector<PowerLawTerm> terms;

  void validate() const;
  bool empty() const;
  double psd(double f) const;

  /// Returns a copy with every coefficient multiplied by `factor`.
  PowerLawNoiseSpec scaled(double factor) const;

  static PowerLawNoiseSpec single(int exponent, double coefficient);
};

struct DbcPoint {
  double offset_hz = 0.0;
  double dbc_per_hz = 0.0;
};

/// Single-sideband phase noise L(f) given at a few offsets.
struct DbcSpec {
  std::vector<DbcPoint> points;

  void validate() const;
  static DbcSpec flat(double dbc_per_hz);
};

/// Shapes white Gaussian noise in the frequency domain so that the returned
/// series has one-sided PSD `psd(f)` on the bins k*fs/n, k = 1..n/2.
/// The DC bin is zero, so the series has zero mean. Bins are drawn in order of
/// increasing frequency, so two calls with the same seed and the same bin
/// spacing fs/n share their low-frequency content.
PhaseSeries synthesize_phase_noise(const std::function<double(double)>& psd,
                                   std::size_t n, double fs, std::uint64_t seed);

PhaseSeries synthesize_power_law(const PowerLawNoiseSpec& spec, std::size_t n, double fs,
                                 std::uint64_t seed);

/// One-sided phase PSD in rad^2/Hz from L(f), S_phi = 2 * 10^(L/10).
/// Log-log interpolation between points, flat beyond the end points.
double dbc_to_phase_psd(const DbcSpec& spec, double f);

/// Discriminator phase-noise floor referred to the beat carrier, in dBc/Hz:
/// -219 + 10 log10(N * f_beat / Hz).
double pfd_noise_floor_dbc(double n_div, double f_beat_hz);

/// Discriminator figure of merit in dBc/Hz.
inline constexpr double kPfdFigureOfMerit = -219.0;

}  // namespace opll

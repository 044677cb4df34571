#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opll/noise.hpp"

namespace opll {

enum class PsdUnits { rad2_per_hz, power_per_hz };

/// PSD on a uniform frequency grid. One-sided spectra start at 0 Hz;
/// two-sided spectra run from -fs/2 upwards with the carrier near 0 Hz.
struct Spectrum {
  std::vector<double> freqs;
  std::vector<double> psd;
  PsdUnits units = PsdUnits::rad2_per_hz;
  double rbw_equivalent = 0.0;  // Hz, equivalent noise bandwidth of one bin
  bool two_sided = false;

  void validate() const;
  double bin_width() const;
  /// Riemann sum of psd over all bins.
  double integral() const;
};

enum class Detrend { none, mean, linear };

/// Welch estimate with a Hann window, one-sided, scaled so that the integral
/// of the PSD equals the mean square of the (detrended) segments.
Spectrum welch_psd(const PhaseSeries& series, std::size_t seg_len, double overlap,
                   Detrend detrend = Detrend::mean);

/// Two-sided Welch estimate of a complex baseband signal, bins centered on 0 Hz.
Spectrum welch_psd_complex(std::span<const std::complex<double>> x, double fs,
                           std::size_t seg_len, double overlap);

struct CarrierEstimate {
  double phase_variance = 0.0;    // rad^2
  double carrier_fraction = 1.0;  // P_carrier / total
  /// False when the carrier holds less than 1% of the power; the small-noise
  /// premise of the carrier-fraction method then no longer holds.
  bool carrier_dominant = true;
};

/// Mean-square phase error from the carrier power fraction,
/// <dphi^2> = -ln(P_carrier / integral P).
/// The carrier is the strongest bin together with its neighbours inside
/// `carrier_bin_width_hz` (0 selects three bins). The total is taken over the
/// whole spectrum, or over |f - f_carrier| <= span_hz / 2 when a span is given.
CarrierEstimate carrier_phase_variance(const Spectrum& spectrum, double carrier_bin_width_hz = 0.0,
                                       std::optional<double> span_hz = std::nullopt);

/// Same estimate from a phase record: the mean frequency is removed, the unit
/// field exp(i phi) is formed and its two-sided Welch spectrum analysed.
CarrierEstimate carrier_phase_variance(const PhaseSeries& series, std::size_t seg_len = 4096,
                                       double carrier_bin_width_hz = 0.0);

/// Spectrum-analyzer noise-marker corrections for a log-envelope detector:
/// +2.51 dB (log averaging of Rayleigh noise), -0.52 dB (RBW filter noise
/// bandwidth), -10 log10(rbw/Hz) (normalization to 1 Hz).
double sa_noise_corrections(double reading_db, double rbw_hz);

inline constexpr double kLogDetectorCorrectionDb = 2.51;
inline constexpr double kRbwShapeCorrectionDb = 0.52;

/// Carrier-fraction estimate from a swept-analyzer trace in dBm. The carrier is
/// the direct reading of the strongest point; every point farther than one RBW
/// from it is corrected to a density and integrated with the point spacing.
CarrierEstimate carrier_phase_variance_sa_trace(std::span<const double> freqs_hz,
                                                std::span<const double> readings_dbm,
                                                double rbw_hz);

struct AllanCurve {
  std::vector<double> taus;  // s
  std::vector<double> mdev;
  std::vector<std::size_t> n_samples_per_tau;  // number of terms averaged
  std::vector<std::string> annotations;        // one per snapped tau
};

/// Modified Allan deviation of the fractional frequency of a carrier at nu0,
/// using time error x = phi / (2 pi nu0). Requested taus are snapped to the
/// nearest multiple of the sample period. Deviations below the rounding
/// resolution of the input phase are reported as exactly 0.
AllanCurve mod_allan(const PhaseSeries& series, double nu0_hz, std::span<const double> taus);

/// Roughly `per_decade` log-spaced multiples of tau0 between lo and hi.
std::vector<double> log_spaced_taus(double tau0, double lo, double hi, int per_decade);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;   // log10(y) at log10(x) = 0
  double half_width = 0.0;  // 95% confidence half-width of the slope
  std::size_t points = 0;
};

/// Least-squares slope in log10-log10 coordinates over x in [lo, hi].
SlopeFit fit_loglog_slope(std::span<const double> x, std::span<const double> y, double lo,
                          double hi);
SlopeFit fit_loglog_slope(const AllanCurve& curve, double lo, double hi);
SlopeFit fit_loglog_slope(const Spectrum& spectrum, double lo, double hi);

/// Removes the least-squares line from a phase record.
PhaseSeries detrend_linear(const PhaseSeries& series);

/// First-order high-pass (bilinear, corner at `corner_hz`) for removing slow
/// interferometer drift from a differential phase record. The output starts
/// from zero.
PhaseSeries highpass_phase(const PhaseSeries& series, double corner_hz);

/// Bin-mean decimation to `sample_rate_out`, then variance about the
/// least-squares line.
double rms_phase_variance(const PhaseSeries& series, double sample_rate_out);

}  // namespace opll

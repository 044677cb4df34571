#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "opll/simengine.hpp"

namespace test {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

/// Least-squares slope of v against sample index times dt.
inline double fitted_slope(std::span<const double> v, double dt) {
  const double n = static_cast<double>(v.size());
  const double mi = (n - 1.0) / 2.0;
  const double mv = mean(v);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double di = static_cast<double>(i) - mi;
    sxy += di * (v[i] - mv);
    sxx += di * di;
  }
  return sxy / sxx / dt;
}

/// Everything off except the loop itself.
inline opll::SimConfig quiet_config() {
  opll::SimConfig c;
  c.ref_noise.reset();
  c.master_noise = {};
  c.detector_floor = {};
  c.laser.free_run_noise = {};
  c.pfd_floor_enabled = false;
  return c;
}

/// Samples [from * size, size) of a series.
inline std::span<const double> tail(const std::vector<double>& v, double from) {
  const auto skip = static_cast<std::size_t>(from * static_cast<double>(v.size()));
  return std::span<const double>(v).subspan(skip);
}

}  // namespace test

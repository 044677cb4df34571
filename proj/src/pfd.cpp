#include "opll/pfd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace opll {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double pump(const PfdState& s, double i_cp) {
  return i_cp * ((s.up ? 1.0 : 0.0) - (s.down ? 1.0 : 0.0));
}

// Walks two sorted edge-time lists in order, calling visit(t, ref, div) once
// per distinct instant.
template <typename Visit>
void merge_edges(std::span<const double> ref, std::span<const double> div, Visit&& visit) {
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < ref.size() || j < div.size()) {
    if (j == div.size() || (i < ref.size() && ref[i] < div[j])) {
      visit(ref[i++], true, false);
    } else if (i == ref.size() || div[j] < ref[i]) {
      visit(div[j++], false, true);
    } else {
      visit(ref[i], true, true);
      ++i;
      ++j;
    }
  }
}
}  // namespace

void PfdConfig::validate() const {
  if (prescaler_p < 1) throw std::invalid_argument("PfdConfig: prescaler must be >= 1");
  if (n_div < kMinN || n_div > kMaxN) {
    throw std::invalid_argument("PfdConfig: n_div " + std::to_string(n_div) +
                                " outside [24, 500000]");
  }
  if (r_div < kMinR || r_div > kMaxR) {
    throw std::invalid_argument("PfdConfig: r_div " + std::to_string(r_div) +
                                " outside [1, 16383]");
  }
  if (!(i_cp > 0.0) || !std::isfinite(i_cp)) {
    throw std::invalid_argument("PfdConfig: i_cp must be positive");
  }
}

PfdStepOutput pfd_step(const PfdState& state, const PfdConfig& cfg, bool ref_edge,
                       bool div_edge) {
  PfdStepOutput out{state, 0.0};
  if (ref_edge) out.state.up = true;
  if (div_edge) out.state.down = true;
  if (out.state.up && out.state.down) {
    out.state.up = false;
    out.state.down = false;
  }
  out.current = pump(out.state, cfg.i_cp);
  return out;
}

std::vector<double> edges_from_phase(const PhaseSeries& series, std::int64_t modulus) {
  series.validate();
  if (modulus < 1) throw std::invalid_argument("edges_from_phase: modulus must be >= 1");

  const auto& x = series.samples;
  const double period = kTwoPi * static_cast<double>(modulus);
  std::vector<double> edges;
  std::int64_t count = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] < x[i - 1]) {
      throw std::domain_error(
          "edges_from_phase: phase decreases at sample " + std::to_string(i) +
          "; a negative beat frequency is unphysical in the baseband model");
    }
    const double a = (x[i - 1] - x[0]) / period;
    const double b = (x[i] - x[0]) / period;
    const auto last = static_cast<std::int64_t>(std::floor(b));
    for (std::int64_t k = count + 1; k <= last; ++k) {
      const double frac = (static_cast<double>(k) - a) / (b - a);
      edges.push_back(series.time(i - 1) + frac * series.dt());
    }
    if (last > count) count = last;
  }
  return edges;
}

std::vector<double> divide_edges(std::span<const double> edges, std::int64_t modulus) {
  if (modulus < 1) throw std::invalid_argument("divide_edges: modulus must be >= 1");
  std::vector<double> out;
  out.reserve(edges.size() / static_cast<std::size_t>(modulus) + 1);
  for (std::size_t i = static_cast<std::size_t>(modulus) - 1; i < edges.size();
       i += static_cast<std::size_t>(modulus)) {
    out.push_back(edges[i]);
  }
  return out;
}

double mean_pump_output(std::span<const double> ref_edges, std::span<const double> div_edges,
                        const PfdConfig& cfg, double t_begin, double t_end, PfdState initial) {
  if (!(t_end > t_begin)) throw std::invalid_argument("mean_pump_output: empty window");
  PfdState s = initial;
  double charge = 0.0;
  double t = t_begin;
  merge_edges(ref_edges, div_edges, [&](double te, bool r, bool d) {
    if (te < t_begin || te > t_end) return;
    charge += pump(s, cfg.i_cp) * (te - t);
    s = pfd_step(s, cfg, r, d).state;
    t = te;
  });
  charge += pump(s, cfg.i_cp) * (t_end - t);
  return charge / (t_end - t_begin);
}

PfdAdvance pfd_advance(const PfdState& state, const PfdConfig& cfg, double ref_phase_end,
                       double div_phase_end) {
  PfdAdvance out{state, 0.0, 0, 0};

  // edge instants as fractions of the step
  auto crossings = [](double from, double to, std::vector<double>& fr) {
    const double a = from / kTwoPi;
    const double b = to / kTwoPi;
    if (!(b > a)) return;
    const double first = std::floor(a) + 1.0;
    for (double k = first; k <= b; k += 1.0) fr.push_back((k - a) / (b - a));
  };

  thread_local std::vector<double> ref_fr;
  thread_local std::vector<double> div_fr;
  ref_fr.clear();
  div_fr.clear();
  crossings(state.ref_accum, ref_phase_end, ref_fr);
  crossings(state.div_accum, div_phase_end, div_fr);
  out.ref_edges = static_cast<int>(ref_fr.size());
  out.div_edges = static_cast<int>(div_fr.size());

  PfdState s = state;
  double charge = 0.0;
  double t = 0.0;
  merge_edges(ref_fr, div_fr, [&](double te, bool r, bool d) {
    charge += pump(s, cfg.i_cp) * (te - t);
    s = pfd_step(s, cfg, r, d).state;
    t = te;
  });
  charge += pump(s, cfg.i_cp) * (1.0 - t);

  s.ref_accum = std::max(state.ref_accum, ref_phase_end);
  s.div_accum = std::max(state.div_accum, div_phase_end);
  out.state = s;
  out.mean_current = charge;  // time measured in units of the step
  return out;
}

}  // namespace opll

#include <iostream>

#include <CLI11.hpp>

#include "opll/cli/commands.hpp"

using namespace opll::cli;

int main(int argc, char** argv) {
  CLI::App app{"Digital optical phase-locked loop simulator"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateOptions sim;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Run one closed-loop simulation");
  simulate->add_option("--config", sim.config_path, "JSON configuration")->required();
  simulate->add_option("--out", sim.out_dir, "Output directory")->required();
  auto* sim_seed_opt = simulate->add_option("--seed-override", sim_seed, "Replace the config seed");
  simulate->add_option("--every", sim.every, "Write every n-th sample")->check(CLI::PositiveNumber);

  AnalyzeOptions an;
  double rbw = 0.0, nu0 = 0.0, tau_min = 0.0, tau_max = 0.0, span = 0.0;
  auto* analyze = app.add_subcommand("analyze", "Analyse a CSV time series or spectrum");
  analyze->add_option("--input", an.input, "Input CSV")->required();
  analyze->add_option("--mode", an.mode, "psd, eq1, mvar or rms")->required();
  analyze->add_option("--out", an.out_dir, "Output directory")->required();
  analyze->add_option("--seg-len", an.seg_len, "Welch segment length");
  analyze->add_option("--overlap", an.overlap, "Welch segment overlap in [0, 1)");
  analyze->add_option("--detrend", an.detrend, "psd: none, mean or linear");
  analyze->add_option("--carrier-width", an.carrier_width_hz, "eq1: carrier band in Hz (0 = 3 bins)");
  auto* span_opt = analyze->add_option("--span", span, "eq1: integration span in Hz");
  auto* rbw_opt = analyze->add_option("--rbw", rbw, "eq1: analyzer resolution bandwidth in Hz");
  auto* nu0_opt = analyze->add_option("--nu0", nu0, "mvar: carrier frequency in Hz");
  auto* tmin_opt = analyze->add_option("--tau-min", tau_min, "mvar: smallest tau in s");
  auto* tmax_opt = analyze->add_option("--tau-max", tau_max, "mvar: largest tau in s");
  analyze->add_option("--per-decade", an.per_decade, "mvar: taus per decade");
  analyze->add_option("--rate", an.rate_hz, "rms: decimated sample rate in Hz");

  SweepOptions sw;
  std::string values;
  std::uint64_t sweep_seed = 0;
  auto* sweep = app.add_subcommand("sweep", "Run one simulation per value of a config field");
  sweep->add_option("--config", sw.config_path, "JSON configuration")->required();
  sweep->add_option("--axis", sw.axis, "Dotted config path, e.g. pfd.n_div")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--out", sw.out_dir, "Output directory")->required();
  auto* sweep_seed_opt = sweep->add_option("--seed-override", sweep_seed, "Replace the config seed");

  auto* selftest = app.add_subcommand("selftest", "Quick internal consistency checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (simulate->parsed()) {
    if (*sim_seed_opt) sim.seed_override = sim_seed;
    return cmd_simulate(sim, std::cout, std::cerr);
  }
  if (analyze->parsed()) {
    if (*span_opt) an.span_hz = span;
    if (*rbw_opt) an.rbw_hz = rbw;
    if (*nu0_opt) an.nu0_hz = nu0;
    if (*tmin_opt) an.tau_min_s = tau_min;
    if (*tmax_opt) an.tau_max_s = tau_max;
    return cmd_analyze(an, std::cout, std::cerr);
  }
  if (sweep->parsed()) {
    try {
      sw.values = parse_values(values);
    } catch (const std::exception& e) {
      std::cerr << "error: --values: " << e.what() << "\n";
      return kExitUsage;
    }
    if (*sweep_seed_opt) sw.seed_override = sweep_seed;
    return cmd_sweep(sw, std::cout, std::cerr);
  }
  if (selftest->parsed()) return cmd_selftest(std::cout, std::cerr);
  return kExitUsage;
}

// racbf: run, sweep, verify and self-test robust adaptive CBF/CLF scenarios.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "racbf/app.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"Robust adaptive control barrier / Lyapunov function toolkit"};
  cli.set_version_flag("--version", racbf::kVersion);
  cli.require_subcommand(1);

  racbf::app::RunOptions run_opt;
  double dt = 0.0, duration = 0.0;
  auto* run = cli.add_subcommand("run", "simulate one scenario and write trace, verdicts, manifest and plots");
  run->add_option("--scenario", run_opt.scenario, "scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_opt.out_dir, "output directory")->required();
  auto* dt_opt = run->add_option("--dt", dt, "override sim.dt [s]")->check(CLI::PositiveNumber);
  auto* dur_opt = run->add_option("--duration", duration, "override sim.duration [s]")->check(CLI::NonNegativeNumber);

  racbf::app::SweepOptions sweep_opt;
  std::string modes = "adaptive,robust";
  auto* sweep = cli.add_subcommand("sweep", "run a scenario over several parameter boxes and controller variants");
  sweep->add_option("--scenario", sweep_opt.scenario, "scenario file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--theta-sets", sweep_opt.theta_sets, "parameter boxes 'lo,hi;lo,hi;...'")
      ->capture_default_str();
  sweep->add_option("--modes", modes, "comma-separated subset of adaptive,robust")->capture_default_str();
  sweep->add_option("--out", sweep_opt.out_dir, "output directory")->required();

  bool inject_fault = false;
  auto* selftest = cli.add_subcommand("selftest", "check the numerics against independent oracles");
  selftest->add_flag("--inject-fault", inject_fault, "perturb one analytic gradient to exercise the failure path");

  std::string trace_path, scenario_path;
  auto* verify = cli.add_subcommand("verify", "re-check a written trace against its scenario");
  verify->add_option("--trace", trace_path, "trace.csv")->required()->check(CLI::ExistingFile);
  verify->add_option("--scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : racbf::app::schema_error;
  }

  if (*run) {
    if (*dt_opt) run_opt.dt = dt;
    if (*dur_opt) run_opt.duration = duration;
    return racbf::app::cmd_run(run_opt, std::cout, std::cerr);
  }
  if (*sweep) {
    sweep_opt.modes.clear();
    for (const auto& m : racbf::detail::split(modes, ','))
      if (!m.empty()) sweep_opt.modes.push_back(m);
    return racbf::app::cmd_sweep(sweep_opt, std::cout, std::cerr);
  }
  if (*selftest) return racbf::app::cmd_selftest(inject_fault, std::cout);
  return racbf::app::cmd_verify(trace_path, scenario_path, std::cout, std::cerr);
}

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace dstrain::cli;
  CLI::App app{"Rankine plasticity with crack-induced damage: scenario runs and material-point paths"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run a built-in scenario or a scenario document");
  simulate_cmd->add_option("scenario", sim.scenario, "opening_mode, mixed_mode, full_cycle or a file")->required();
  auto* dcr_opt = simulate_cmd->add_option("--dcr", sim.dcr, "critical damage of a single case");
  simulate_cmd->add_option("--sweep-dcr", sim.sweep, "comma-separated critical damage values")
      ->delimiter(',')
      ->excludes(dcr_opt);
  simulate_cmd->add_option("--refine", sim.refine, "mesh refinement level");
  simulate_cmd->add_option("--steps", sim.steps, "number of load steps");
  simulate_cmd->add_option("--out", sim.out, "output directory (default $DSTRAIN_OUT/<scenario>)");
  simulate_cmd->add_option("--set", sim.set, "scenario override key=value, dotted keys (repeatable)");
  simulate_cmd->add_flag("-v,--verbose", sim.verbose, "log steps and cuts to stderr");

  SimulateArgs shown;
  auto* show_cmd = app.add_subcommand("show", "Print a resolved scenario document");
  show_cmd->add_option("scenario", shown.scenario, "opening_mode, mixed_mode, full_cycle or a file")->required();
  show_cmd->add_option("--refine", shown.refine, "mesh refinement level");
  show_cmd->add_option("--steps", shown.steps, "number of load steps");
  show_cmd->add_option("--set", shown.set, "scenario override key=value, dotted keys (repeatable)");

  MatpointArgs mp;
  auto* matpoint_cmd = app.add_subcommand("matpoint", "Drive one material point along a strain path");
  matpoint_cmd->add_option("--params", mp.params, "JSON file with E, nu, sigma_y, a, b, d_cr");
  matpoint_cmd->add_option("--E", mp.E, "Young's modulus (Pa)");
  matpoint_cmd->add_option("--nu", mp.nu, "Poisson's ratio");
  matpoint_cmd->add_option("--sy", mp.sy, "yield strength (Pa)");
  matpoint_cmd->add_option("--a", mp.a, "plastic damage constant");
  matpoint_cmd->add_option("--b", mp.b, "discontinuity damage constant");
  matpoint_cmd->add_option("--dcr", mp.dcr, "critical damage");
  matpoint_cmd->add_option("--path", mp.path, "path document")->required();
  matpoint_cmd->add_option("--out", mp.out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (simulate_cmd->parsed()) return simulate(sim);
    if (show_cmd->parsed()) return show(shown);
    return matpoint(mp);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

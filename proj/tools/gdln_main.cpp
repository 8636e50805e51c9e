// Command-line driver for the gated deep linear network laboratory.
//
// Subcommands reproduce the desk-scale experiments (parity, routing, race,
// initialization sweep, transform bench) and run the verification suite.
// Every experiment writes CSV artifacts plus a manifest.json into
// <out>/<experiment>/.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdln/common.hpp"
#include "gdln/dynamics.hpp"
#include "gdln/experiments.hpp"

namespace {

void add_common(CLI::App* cmd, gdln::CliOptions& opt) {
  cmd->add_option("--config", opt.config_path,
                  "Structured text config; keys may use caption aliases "
                  "(N_h, lambda, sigma0, ...)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opt.out_dir, "Output directory root")
      ->capture_default_str();
  cmd->add_option("--seeds", opt.seeds, "Seed list overriding the config")
      ->delimiter(',');
  cmd->add_option("--parallel", opt.parallel, "Worker threads for sweeps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--quick", opt.quick, "Reduced grids for fast runs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated deep linear network laboratory"};
  app.require_subcommand(1);

  gdln::CliOptions opt;
  bool mutate_gradient = false;

  CLI::App* c_xor = app.add_subcommand(
      "xor", "Parity task: closed-form curve, gated nets, positive-part "
             "reference");
  CLI::App* c_routing = app.add_subcommand(
      "routing", "Multi-domain routing: full nets, reduced coordinates, "
                 "mode-level forms");
  CLI::App* c_race = app.add_subcommand(
      "race", "Shared-path race ratios and trained-route fraction sweep");
  CLI::App* c_init = app.add_subcommand(
      "init-sweep", "Rich-to-lazy transition across initialization scales");
  CLI::App* c_transform = app.add_subcommand(
      "transform-bench", "Compositional classification transfer benchmark");
  CLI::App* c_verify = app.add_subcommand(
      "verify", "Run the invariant and oracle suite; nonzero exit on failure");

  for (CLI::App* cmd :
       {c_xor, c_routing, c_race, c_init, c_transform, c_verify})
    add_common(cmd, opt);
  c_verify
      ->add_flag("--mutate-gradient", mutate_gradient,
                 "Perturb the analytic flow to prove the suite can fail")
      ->group("");  // hidden: a self-test hook, not a user feature

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (mutate_gradient) gdln::set_gradient_perturbation(0.05);
    if (c_xor->parsed()) return gdln::cmd_xor(opt);
    if (c_routing->parsed()) return gdln::cmd_routing(opt);
    if (c_race->parsed()) return gdln::cmd_race(opt);
    if (c_init->parsed()) return gdln::cmd_init_sweep(opt);
    if (c_transform->parsed()) return gdln::cmd_transform_bench(opt);
    if (c_verify->parsed()) return gdln::cmd_verify(opt);
  } catch (const gdln::GdlnError& e) {
    std::cerr << "error [" << gdln::errc_name(e.code()) << "]: " << e.what()
              << "\n";
    return e.code() == gdln::Errc::VerificationFailed ? 1 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "waitmarket/cli.hpp"

namespace {

template <class T>
void set_if(std::optional<T>& dst, CLI::Option* opt, const T& value) {
  if (opt->count() > 0) dst = value;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace waitmarket;
  CLI::App app{"Seller waiting, learning and pricing: solvers, simulator and reproduction fixtures"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config, out;
  std::uint64_t seed = 0;
  std::size_t grid_nodes = 0, runs = 0;
  double tol = 0.0;
  auto* o_config = app.add_option("--config", config, "Run configuration (JSON)");
  auto* o_out = app.add_option("--out", out, "Output directory");
  auto* o_seed = app.add_option("--seed", seed, "RNG seed");
  auto* o_nodes = app.add_option("--grid-nodes", grid_nodes, "Type grid nodes");
  auto* o_tol = app.add_option("--tol", tol, "Solver tolerance");
  auto* o_runs = app.add_option("--runs", runs, "Simulation runs");

  app.add_subcommand("validate", "Check the environment and print the report");
  app.add_subcommand("solve-commitment", "Exit profile, prices and commitment value");
  app.add_subcommand("solve-equilibrium", "Equilibrium price, exit times and deviation thresholds");
  app.add_subcommand("simulate", "Monte Carlo runs of a cutoff profile");
  app.add_subcommand("sweep", "Commitment value and equilibrium price over one parameter");
  std::string fixture;
  auto* reproduce = app.add_subcommand("reproduce", "Write the CSVs of a bundled fixture");
  reproduce->add_option("fixture", fixture, "Fixture name")->required()->check(CLI::IsMember(cli::fixture_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << cli::error_record(ErrorKind::usage, e.what()).dump() << "\n";
    return cli::kUsageError;
  }

  cli::Request req;
  req.command = app.get_subcommands().front()->get_name();
  req.fixture = fixture;
  if (o_config->count() > 0) req.config = config;
  set_if(req.overrides.out, o_out, out);
  set_if(req.overrides.seed, o_seed, seed);
  set_if(req.overrides.grid_nodes, o_nodes, grid_nodes);
  set_if(req.overrides.tol, o_tol, tol);
  set_if(req.overrides.runs, o_runs, runs);
  if (req.overrides.tol && !(*req.overrides.tol > 0.0)) {
    std::cerr << cli::error_record(ErrorKind::usage, "--tol must be > 0").dump() << "\n";
    return cli::kUsageError;
  }
  return cli::run(req);
}

// Command-line front end: run a scenario config, list or describe builtins.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "cplab/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

// A path that exists is read as a config file; otherwise the argument may
// name a builtin scenario.
cplab::scenario::json load(const std::string& arg) {
  namespace sc = cplab::scenario;
  if (std::filesystem::exists(arg)) return sc::read_json_file(arg);
  for (const auto& s : sc::list_scenarios())
    if (s.name == arg) return sc::builtin_scenario(arg);
  sc::config_fail("", "no config file or builtin scenario named '" + arg + "'");
}

}  // namespace

int main(int argc, char** argv) {
  namespace sc = cplab::scenario;
  CLI::App app{"Numerical experiments on completeness of trajectories and geodesics"};
  app.require_subcommand(1);

  std::string config, out_dir, describe_name;
  std::optional<double> horizon, rel_tol;
  auto* run = app.add_subcommand("run", "run a scenario config and write report.json plus trajectory CSVs");
  run->add_option("config", config, "config file, or the name of a builtin scenario")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--horizon", horizon, "override run.horizon");
  run->add_option("--rel-tol", rel_tol, "override run.rel_tol");

  auto* list = app.add_subcommand("list-scenarios", "list builtin scenarios");
  auto* describe = app.add_subcommand("describe", "print the config of a builtin scenario");
  describe->add_option("name", describe_name, "scenario name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*list) {
      for (const auto& s : sc::list_scenarios()) std::printf("%-34s %s\n", s.name.c_str(), s.description.c_str());
      return kExitOk;
    }
    if (*describe) {
      std::cout << sc::builtin_scenario(describe_name).dump(2) << "\n";
      return kExitOk;
    }
    auto cfg = sc::parse_config(load(config));
    sc::apply_overrides(cfg, horizon, rel_tol);
    const auto out = sc::run_scenario(cfg);
    sc::write_artifacts(out, out_dir);
    for (const auto& ic : out.report.at("initial_conditions"))
      std::printf("initial condition %zu: %s\n", ic.at("index").get<std::size_t>(),
                  ic.at("verdict").get<std::string>().c_str());
    return out.numeric_failure ? kExitNumeric : kExitOk;
  } catch (const cplab::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(cplab::to_string(e.code())).c_str(), e.what());
    switch (e.code()) {
      case cplab::ErrorCode::ConfigError:
      case cplab::ErrorCode::UnknownScenario:
      case cplab::ErrorCode::ParseError:
      case cplab::ErrorCode::UnknownIdentifier: return kExitConfig;
      default: return kExitNumeric;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  }
}

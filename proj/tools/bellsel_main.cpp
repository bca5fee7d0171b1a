#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "bellsel/scenarios.hpp"

// Exit codes: 0 = verdict matches the scenario's expectation, 1 = mismatch
// (a falsified claim), 2 = usage or configuration error. Worker count follows
// the usual OpenMP environment variable OMP_NUM_THREADS.

int main(int argc, char** argv) {
  CLI::App app{
      "bellsel: stochastic quantum dynamics on finite models, with "
      "superselection-rule verification"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string config_path;
  run->add_option("config", config_path, "JSON experiment config")->required();
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
  std::optional<std::string> out_dir, scenario;
  run->add_option("--seed", seed, "Override run.seed");
  run->add_option("--n", n, "Override run.n (ensemble size)");
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_option("--scenario", scenario, "Override the scenario name");

  auto* list = app.add_subcommand("list", "List registered scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (list->parsed()) {
    for (const auto& name : bellsel::scenario_names()) std::cout << name << "\n";
    return 0;
  }

  try {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "bellsel: cannot open config file '" << config_path << "'\n";
      return 2;
    }
    nlohmann::json doc = nlohmann::json::parse(in);
    if (!doc.is_object()) {
      std::cerr << "bellsel: experiment config must be a JSON object\n";
      return 2;
    }
    if (scenario) doc["scenario"] = *scenario;
    if (seed) doc["run"]["seed"] = *seed;
    if (n) doc["run"]["n"] = *n;
    if (out_dir) doc["out"] = *out_dir;

    const bellsel::ExperimentConfig cfg = bellsel::parse_experiment_config(doc);
    return bellsel::run_experiment(cfg, std::cout, std::cerr);
  } catch (const nlohmann::json::parse_error& e) {
    std::cerr << "bellsel: config parse error: " << e.what() << "\n";
    return 2;
  } catch (const bellsel::ConfigError& e) {
    std::cerr << "bellsel: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "bellsel: error: " << e.what() << "\n";
    return 2;
  }
}

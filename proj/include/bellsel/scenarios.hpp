#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bellsel/grw.hpp"
#include "bellsel/superselection.hpp"

namespace bellsel {

struct RunParams {
  int n = 10000;
  double horizon = 1.0;
  double dt = 0.01;
  std::uint64_t seed = 20260810;
  double alpha = 0.01;
  std::optional<double> perturb_weights;  // falsification-power knob
};

struct ExperimentConfig {
  std::string scenario;
  nlohmann::json model;  // models-module schema; scenario default when absent
  nlohmann::json psi;
  std::string observable;
  RunParams run;
  std::string out_dir;  // empty = write nothing
  nlohmann::json raw;   // fully resolved config (defaults + overrides)
};

// Registered scenario names, each reproducing one named claim end to end.
std::vector<std::string> scenario_names();
bool is_scenario(const std::string& name);
nlohmann::json scenario_default_config(const std::string& name);

// Validates the document, applies scenario defaults, reports schema errors
// with the offending field path.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);

// State construction from a psi spec document:
//   {"type":"basis","index":k}
//   {"type":"amplitudes","re":[...],"im":[...]}
//   {"type":"random","seed":s}
//   {"type":"sector_superposition","observable":n,
//    "components":[{"value":v,"coeff":[re,im],"seed":s},...]}
Vector build_state(const nlohmann::json& spec, const Model& model);

struct FlashEnsembleArtifact {
  std::string name;
  std::uint64_t seed = 0;
  double horizon = 0.0, dt = 0.0;
  std::vector<FlashHistory> histories;
};

struct ScenarioResult {
  SuperselectionReport report;
  std::string verdict;
  std::string expected_verdict;
  std::vector<std::pair<std::string, PathEnsemble>> ensembles;
  std::vector<FlashEnsembleArtifact> flash_ensembles;

  bool ok() const { return verdict == expected_verdict; }
};

ScenarioResult run_scenario(const ExperimentConfig& config);

// Writes path files, flash files, the summary CSV and the full report;
// returns the file names written. Floats carry 17 significant digits so a
// rerun with the same config and seed is byte-identical.
std::vector<std::string> emit_outputs(const ExperimentConfig& config,
                                      const ScenarioResult& result);

// Run + emit + verdict line. Exit code 0 when the verdict matches the
// scenario's expectation, 1 on mismatch (falsification).
int run_experiment(const ExperimentConfig& config, std::ostream& out,
                   std::ostream& err);

std::string format_float(double x);  // %.17g

}  // namespace bellsel

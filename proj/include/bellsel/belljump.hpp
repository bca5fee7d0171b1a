#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bellsel/models.hpp"
#include "bellsel/rng.hpp"

namespace bellsel {

// Occupation floor below which jump rates are undefined (reaching such a
// configuration signals a simulation bug, not a numerical nuisance).
constexpr double kOccupationFloor = 1e-14;
// Occupations below this are ignored by the rate*dt guard diagnostics.
constexpr double kGuardOccupationFloor = 1e-6;

struct JumpEvent {
  double time;
  int from;
  int to;
};

struct Path {
  int initial_config = 0;
  std::vector<JumpEvent> events;
  double horizon = 0.0;
  std::optional<double> sector_value;  // f(Q_0) for a chosen observable

  int config_at(double t) const;
  int final_config() const;
  int jump_count() const { return static_cast<int>(events.size()); }
  double first_jump_time() const {
    return events.empty() ? std::numeric_limits<double>::infinity()
                          : events.front().time;
  }
  bool operator==(const Path& other) const;
};

struct PathEnsemble {
  std::vector<Path> paths;
  double horizon = 0.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::string model_id, psi_id;
};

struct RateMap {
  int from = 0;
  std::map<int, double> rates;  // destination -> nonnegative rate; no self entry

  double total() const;
};

// Bell's transition rate out of `from` at state psi, using the model's
// jump-generating Hamiltonian part.
RateMap jump_rates(const Vector& psi, int from, const Model& model,
                   double floor = kOccupationFloor);

// Precomputed step-grid data shared by every trajectory of an ensemble:
// the signed flux (2/hbar) Im <psi_t|P(q) H_jump P(q')|psi_t> and the cell
// occupations at each step time, with psi_t propagated exactly.
class JumpKernel {
 public:
  // quiet suppresses the rate*dt guard warning; the exact-law enumeration
  // uses the first-order kernel as a definition, not an approximation.
  JumpKernel(const Model& model, const Vector& psi0, double horizon, double dt,
             bool quiet = false);

  int steps() const { return steps_; }
  double dt() const { return dt_; }
  double horizon() const { return horizon_; }
  int num_configs() const { return num_configs_; }
  const Eigen::MatrixXd& flux(int k) const { return flux_[k]; }
  const Eigen::VectorXd& occupation(int k) const { return occupation_[k]; }
  Vector psi_at_step(int k) const;
  // Largest total out-rate times dt over steps and guard-visible configs;
  // the first-order thinning is trustworthy when this stays below 0.1.
  double max_rate_dt() const { return max_rate_dt_; }

 private:
  int steps_, num_configs_;
  double dt_, horizon_, max_rate_dt_;
  std::vector<Eigen::MatrixXd> flux_;
  std::vector<Eigen::VectorXd> occupation_;
  Propagator propagator_;
  Vector psi0_;
};

// One trajectory from the shared kernel. q0 = -1 draws the initial
// configuration from the |psi_0|^2 cell distribution.
Path sample_path(const JumpKernel& kernel, int q0, Xoshiro256pp& rng,
                 const std::vector<double>* sector_f = nullptr);

Path sample_trajectory(const Model& model, const Vector& psi0, int q0,
                       double horizon, double dt, std::uint64_t seed,
                       const std::vector<double>* sector_f = nullptr);

// n independent trajectories with per-path derived RNG substreams. The
// parallel and serial versions produce identical ensembles.
PathEnsemble sample_ensemble(const Model& model, const Vector& psi0, int n,
                             double horizon, double dt, std::uint64_t seed,
                             const std::vector<double>* sector_f = nullptr);
// Same, from an already-built kernel.
PathEnsemble sample_ensemble(const JumpKernel& kernel, int n,
                             std::uint64_t seed,
                             const std::vector<double>* sector_f = nullptr,
                             bool parallel = true,
                             const std::string& model_id = "");
PathEnsemble sample_ensemble_serial(const Model& model, const Vector& psi0,
                                    int n, double horizon, double dt,
                                    std::uint64_t seed,
                                    const std::vector<double>* sector_f = nullptr);

struct DeterminismResult {
  bool deterministic = false;
  int witness_cell = -1;      // violating cell when not deterministic
  double witness_norm = 0.0;  // commutator norm of that cell
  double max_random_rate = 0.0;  // cross-check over random state vectors
};

// Determinism criterion: all jump rates vanish iff the jump part commutes
// with every cell projector.
DeterminismResult is_deterministic(const Model& model, double tol = 1e-12);

// Exact law of the time-discretized chain (first order in dt, same kernel as
// the sampler), enumerated over path skeletons. Branches whose probability
// falls below prune_eps are dropped and accounted in pruned_mass.
struct PathLaw {
  int steps = 0;
  int num_configs = 0;
  std::map<std::vector<int>, double> prob;
  double pruned_mass = 0.0;

  double total_mass() const;
};

PathLaw exact_path_law(const Model& model, const Vector& psi0, double horizon,
                       double dt, double prune_eps = 1e-16);

// Config index at each step boundary 0..steps.
std::vector<int> skeleton_of(const Path& path, double dt, int steps);

// Largest absolute probability difference over the union of skeletons.
double path_law_distance(const PathLaw& a, const PathLaw& b);

}  // namespace bellsel

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "bellsel/hilbert.hpp"
#include "bellsel/models.hpp"
#include "bellsel/rng.hpp"

namespace bellsel {

// Family of positive flash rate operators Lambda(x), one per location, with
// cached square roots.
struct FlashRateFamily {
  std::vector<std::string> locations;
  std::vector<Matrix> operators;
  std::vector<Matrix> square_roots;
  Matrix total;          // sum of all Lambda(x)
  bool diagonal = false; // all operators diagonal: fast weight evaluation

  static FlashRateFamily build(std::vector<std::string> locations,
                               std::vector<Matrix> operators);
  int dim() const { return static_cast<int>(total.rows()); }
  int num_locations() const { return static_cast<int>(operators.size()); }
};

struct Flash {
  int location;
  double time;
};

struct FlashHistory {
  std::vector<Flash> flashes;
  double horizon = 0.0;
  // Unnormalized post-history state; flashes carry a sqrt(dt) factor so its
  // squared norm is the probability of the discretized history.
  Vector terminal_state;
};

// Non-unitary propagator W_t = exp(-(i/hbar) H t - (1/2) sum_x Lambda(x) t)
// for t >= 0, evaluated by dense matrix exponential and cached per t.
class GrwPropagator {
 public:
  GrwPropagator(const Matrix& h, const FlashRateFamily& lam, double hbar = 1.0);

  Matrix w(double t) const;
  Vector apply(const Vector& psi, double t) const;
  // Precompute the exponentials a parallel loop will need.
  void warm(const std::vector<double>& ts) const;

 private:
  Matrix generator_;
  mutable std::map<double, Matrix> cache_;
  mutable std::mutex mutex_;
};

// One-shot W_t psi; rejects t < 0.
Vector grw_propagate(const Vector& psi, const Matrix& h,
                     const FlashRateFamily& lam, double t, double hbar = 1.0);

// || Lambda(x_n)^{1/2} W_{t_n - t_{n-1}} ... Lambda(x_1)^{1/2} W_{t_1} psi ||^2
double flash_joint_density(const GrwPropagator& prop,
                           const FlashRateFamily& lam, const Vector& psi,
                           const std::vector<Flash>& flashes);
double flash_joint_density(const Vector& psi, const Matrix& h,
                           const FlashRateFamily& lam,
                           const std::vector<Flash>& flashes,
                           double hbar = 1.0);

// First-order thinning on the step grid: flash probability per step is the
// instantaneous total rate times dt; on flash the square root is applied.
FlashHistory sample_flashes(const Vector& psi, const Matrix& h,
                            const FlashRateFamily& lam, double horizon,
                            double dt, std::uint64_t seed, double hbar = 1.0);

std::vector<FlashHistory> sample_flash_ensemble(const Vector& psi,
                                                const Matrix& h,
                                                const FlashRateFamily& lam,
                                                double horizon, double dt,
                                                int n, std::uint64_t seed,
                                                double hbar = 1.0);
std::vector<FlashHistory> sample_flash_ensemble_serial(
    const Vector& psi, const Matrix& h, const FlashRateFamily& lam,
    double horizon, double dt, int n, std::uint64_t seed, double hbar = 1.0);

// Checks the mixture identity P_n^psi = sum_nu w_nu P_n^{psi_nu} over every
// flash sequence up to length n_max on the grid (locations x times), and
// reports the commutators behind it.
struct FlashSsrResult {
  double max_deviation = 0.0;
  double comm_lambda = 0.0;  // max over x of ||[g, Lambda(x)]||
  double comm_h = 0.0;
  long sequences_checked = 0;
};

FlashSsrResult verify_flash_superselection(const Vector& psi, const Matrix& g,
                                           const Matrix& h,
                                           const FlashRateFamily& lam,
                                           int n_max,
                                           const std::vector<double>& time_grid,
                                           double hbar = 1.0,
                                           bool parallel = true);

// m(x) = <psi|Lambda(x)|psi> for a normalized state.
Eigen::VectorXd matter_density(const Vector& psi_t, const FlashRateFamily& lam);

// Matter-density masses per connected component, for psi_t and for every
// mixture member, before the first collapse.
struct GrwmReport {
  std::vector<double> psi_mass;                  // per component
  std::vector<double> member_weights;
  std::vector<double> member_eigenvalues;
  std::vector<std::vector<double>> member_mass;  // per member, per component
  double discrepancy = 0.0;
};

GrwmReport grwm_counterexample(const Model& model, const Vector& psi,
                               const FlashRateFamily& lam,
                               const std::vector<int>& location_component,
                               const Matrix& g, double t);

}  // namespace bellsel

#pragma once

#include <cstdint>
#include <vector>

#include "bellsel/hilbert.hpp"
#include "bellsel/rng.hpp"

namespace bellsel {

// Density below which the Bohmian velocity is treated as undefined; a
// trajectory hitting such a point aborts instead of extrapolating.
constexpr double kNodeDensityFloor = 1e-12;

struct Grid1d {
  double x0 = 0.0;
  double dx = 1.0;
  int n = 0;

  double x(int i) const { return x0 + i * dx; }
  double x_end() const { return x0 + (n - 1) * dx; }
  double length() const { return n * dx; }
};

enum class Boundary { Reflecting, Periodic };

struct ContinuumModel {
  Grid1d grid;
  int spin_dim = 1;
  double mass = 1.0;
  double hbar = 1.0;
  Eigen::VectorXd potential;          // per point; empty = free
  std::vector<Matrix> spin_coupling;  // Hermitian per point; empty = none
  Boundary boundary = Boundary::Reflecting;

  int dim() const { return grid.n * spin_dim; }
};

struct GridWavefunction {
  Grid1d grid;
  int spin_dim = 1;
  Eigen::MatrixXcd comps;  // spin_dim rows, grid.n columns
  double time = 0.0;

  double norm_sq() const;  // sum |psi|^2 dx
  Eigen::VectorXd density() const;  // spin-summed |psi|^2 per point
  Vector flatten() const;  // basis index s * n + i
  void unflatten(const Vector& v);
  void normalize();
};

// Dense discretized Hamiltonian (central-difference Laplacian).
Matrix continuum_hamiltonian(const ContinuumModel& model);

// Norm-preserving second-order implicit time step; the linear solve is
// factorized once per (model, dt).
class CrankNicolson {
 public:
  CrankNicolson(const ContinuumModel& model, double dt);

  GridWavefunction step(const GridWavefunction& psi) const;
  double dt() const { return dt_; }

 private:
  Eigen::PartialPivLU<Matrix> backward_;
  Matrix forward_;
  double dt_;
  int spin_dim_, n_;
};

// v = (hbar/m) Im(psi* d psi)/(psi* psi) with spin inner products and central
// differences. Nodes are marked NaN.
Eigen::VectorXd velocity_field(const GridWavefunction& psi,
                               const ContinuumModel& model,
                               double density_floor = kNodeDensityFloor);

// psi snapshots reduced to what the trajectory integrator needs.
struct EvolvedFields {
  std::vector<Eigen::VectorXd> velocities;  // steps+1 snapshots
  std::vector<Eigen::VectorXd> densities;
  GridWavefunction final_psi;
};

EvolvedFields evolve_fields(const ContinuumModel& model, GridWavefunction psi,
                            int steps, double dt);

struct Trajectory {
  std::vector<double> positions;  // one per snapshot until abort
  bool aborted = false;
  double abort_time = 0.0;
};

// Explicit midpoint rule with linear spatial interpolation of the velocity.
Trajectory integrate_trajectory(double x0,
                                const std::vector<Eigen::VectorXd>& velocities,
                                const Grid1d& grid, double dt,
                                Boundary boundary);

// Ensemble of trajectories with x0 drawn from the initial density; the
// parallel and serial versions produce identical results.
std::vector<Trajectory> integrate_ensemble(
    const std::vector<Eigen::VectorXd>& velocities,
    const Eigen::VectorXd& initial_density, const Grid1d& grid, double dt,
    Boundary boundary, int n, std::uint64_t seed);
std::vector<Trajectory> integrate_ensemble_serial(
    const std::vector<Eigen::VectorXd>& velocities,
    const Eigen::VectorXd& initial_density, const Grid1d& grid, double dt,
    Boundary boundary, int n, std::uint64_t seed);

// Reversal of the grid (tensored with the spin identity).
Matrix parity_operator(const ContinuumModel& model);

// On a symmetric grid with symmetric potential: parity commutes with H, yet
// the velocity field of psi differs from that of its even (and odd) part.
struct ParityReport {
  double commutator = 0.0;
  double max_dev_even = 0.0;
  double max_dev_odd = 0.0;
  double even_weight = 0.0, odd_weight = 0.0;
  bool generic = true;  // false when psi is nearly purely even or odd
};

ParityReport parity_counterexample(const ContinuumModel& model,
                                   const GridWavefunction& psi);

}  // namespace bellsel

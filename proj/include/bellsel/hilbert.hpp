#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <utility>
#include <vector>

namespace bellsel {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Matrix = Eigen::MatrixXcd;

// Dense exact linear algebra only; anything bigger belongs to a different tool.
constexpr int kDimCap = 4096;

// One point of the configuration space. `content` is builder-specific
// structured data (occupation numbers, site tuples, ...).
struct Config {
  std::string label;
  std::vector<int> content;
};

struct ConfigurationSpace {
  std::vector<Config> configs;
  // Connected component id per config (components of the adjacency graph).
  std::vector<int> component_of;
  // Unordered pairs of configs linked by a local move (a nonzero off-diagonal
  // Hamiltonian block).
  std::vector<std::pair<int, int>> adjacency;

  int size() const { return static_cast<int>(configs.size()); }
};

// Configuration observable: a partition of basis indices into cells, one cell
// per configuration. The cell projectors are orthogonal and sum to identity.
struct Pvm {
  std::vector<int> cell_of;  // basis index -> config index
  int num_configs = 0;

  int dim() const { return static_cast<int>(cell_of.size()); }
  std::vector<std::vector<int>> cells() const;
};

// <psi|P(q)|psi>
double cell_probability(const Pvm& pvm, int q, const Vector& psi);
// All cell probabilities at once.
Eigen::VectorXd cell_distribution(const Pvm& pvm, const Vector& psi);
// P(q) psi
Vector apply_cell_projector(const Pvm& pvm, int q, const Vector& psi);
// Dense P(q)
Matrix cell_projector_matrix(const Pvm& pvm, int q);

bool is_hermitian(const Matrix& a, double tol = 1e-12);

// max-entry magnitude of AB - BA
double commutator_norm(const Matrix& a, const Matrix& b);

// max-entry magnitude
double max_abs(const Matrix& a);

// F = sum_q f(q) P(q): the diagonal operator acting as f(q) on cell q.
// f is indexed by config; a non-finite value on a used config is an error.
Matrix build_operator_from_config_function(const std::vector<double>& f,
                                           const Pvm& pvm);

// Spectral decomposition with eigenvalues clustered at a tolerance relative
// to the spectral range (floating-point solvers split degenerate levels).
struct EigDecomposition {
  std::vector<double> eigenvalues;  // ascending, deduplicated
  std::vector<Matrix> projectors;   // Hermitian idempotents, sum to identity

  Matrix reconstruct() const;
  double min_gap() const;
};

EigDecomposition eigendecompose(const Matrix& g, double rel_tol = 1e-8);

// exp(-i H t / hbar) psi by exact diagonalization.
Vector propagate(const Matrix& h, const Vector& psi, double t,
                 double hbar = 1.0);

// Exact unitary propagation with the eigendecomposition done once.
class Propagator {
 public:
  Propagator(const Matrix& h, double hbar = 1.0);

  Vector at(const Vector& psi0, double t) const;
  Matrix unitary(double t) const;
  double hbar() const { return hbar_; }

 private:
  Eigen::VectorXd evals_;
  Matrix evecs_;
  double hbar_;
};

}  // namespace bellsel

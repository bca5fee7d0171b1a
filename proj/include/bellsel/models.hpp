#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bellsel/hilbert.hpp"

namespace bellsel {

// Kronecker product, row-major block convention: (A⊗B)[(i*p+k),(j*q+l)].
Matrix kron(const Matrix& a, const Matrix& b);

// A model world: basis, configuration observable, Hamiltonian split into the
// cell-block-diagonal part and the jump-generating off-diagonal part.
struct Model {
  std::string name;
  ConfigurationSpace space;
  Pvm pvm;
  Matrix h_total, h_diag, h_jump;
  std::map<std::string, Matrix> named_observables;
  double hbar = 1.0;

  // Optional system/environment tensor factorization with basis index
  // s * dim_e + e and h_total = h_s⊗1 + 1⊗h_e + h_se.
  struct Factorization {
    int dim_s = 0, dim_e = 0;
    Matrix h_s, h_e, h_se;
  };
  std::optional<Factorization> factorization;

  int dim() const { return static_cast<int>(h_total.rows()); }
  const Matrix& observable(const std::string& name) const;
};

// Validates h_total, splits it into within-cell and cross-cell parts, and
// derives adjacency plus connected components from the nonzero jump blocks.
Model assemble_model(std::string name, ConfigurationSpace space, Pvm pvm,
                     const Matrix& h_total, double hbar);

// Truncated Fock space of spinless lattice fermions and bosons with
// boson emission/absorption by fermions.
struct FockBasisSpec {
  int sites = 1;
  std::vector<int> fermion_sectors;  // allowed total fermion counts
  int max_total_bosons = 0;
  double mass_fermion = 1.0;
  double mass_boson = 1.0;
  std::vector<double> coupling;  // phi by site distance; empty = free theory
  std::optional<double> hopping_fermion;  // default hbar^2 / (2 m)
  std::optional<double> hopping_boson;
  double hbar = 1.0;
};

Model build_fermion_boson_model(const FockBasisSpec& spec);

// Distinguishable particles hopping on the disjoint union of two chains;
// no term links the chains.
Model build_two_component_model(int sites_per_component, int particles,
                                const std::vector<double>& potential = {},
                                double hopping = 1.0, double hbar = 1.0);

// Particles with an internal spin factor on a chain. Cells are position
// configurations only; spin is internal to a cell. An optional site-dependent
// z-field couples to particle spins.
struct SpinLatticeSpec {
  int sites = 2;
  int particles = 1;
  int spin_dim = 2;
  double hopping = 1.0;
  std::vector<double> potential;             // per site; empty = zeros
  std::optional<std::vector<double>> field;  // z-field per site
  double hbar = 1.0;
};

Model build_spin_lattice_model(const SpinLatticeSpec& spec);

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dispatches to a named builder. Document shape:
//   {"builder": <name>, "params": {...}, "hbar": <number, default 1>}
Model load_model_from_config(const nlohmann::json& doc);
Model load_model_from_config(const std::string& text);

}  // namespace bellsel

#include "bellsel/hilbert.hpp"

#include <cmath>
#include <stdexcept>

namespace bellsel {

std::vector<std::vector<int>> Pvm::cells() const {
  std::vector<std::vector<int>> out(num_configs);
  for (int i = 0; i < dim(); ++i) {
    const int q = cell_of[i];
    if (q < 0 || q >= num_configs)
      throw std::domain_error("Pvm: cell index out of range");
    out[q].push_back(i);
  }
  return out;
}

double cell_probability(const Pvm& pvm, int q, const Vector& psi) {
  double p = 0.0;
  for (int i = 0; i < pvm.dim(); ++i)
    if (pvm.cell_of[i] == q) p += std::norm(psi[i]);
  return p;
}

Eigen::VectorXd cell_distribution(const Pvm& pvm, const Vector& psi) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(pvm.num_configs);
  for (int i = 0; i < pvm.dim(); ++i) p[pvm.cell_of[i]] += std::norm(psi[i]);
  return p;
}

Vector apply_cell_projector(const Pvm& pvm, int q, const Vector& psi) {
  Vector out = Vector::Zero(psi.size());
  for (int i = 0; i < pvm.dim(); ++i)
    if (pvm.cell_of[i] == q) out[i] = psi[i];
  return out;
}

Matrix cell_projector_matrix(const Pvm& pvm, int q) {
  Matrix p = Matrix::Zero(pvm.dim(), pvm.dim());
  for (int i = 0; i < pvm.dim(); ++i)
    if (pvm.cell_of[i] == q) p(i, i) = 1.0;
  return p;
}

bool is_hermitian(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  return max_abs(a - a.adjoint()) <= tol;
}

double max_abs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

double commutator_norm(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != a.cols())
    throw std::domain_error("commutator_norm: dimension mismatch");
  return max_abs(a * b - b * a);
}

Matrix build_operator_from_config_function(const std::vector<double>& f,
                                           const Pvm& pvm) {
  Matrix out = Matrix::Zero(pvm.dim(), pvm.dim());
  for (int i = 0; i < pvm.dim(); ++i) {
    const int q = pvm.cell_of[i];
    if (q >= static_cast<int>(f.size()) || !std::isfinite(f[q]))
      throw std::domain_error(
          "build_operator_from_config_function: f undefined on used config " +
          std::to_string(q));
    out(i, i) = f[q];
  }
  return out;
}

Matrix EigDecomposition::reconstruct() const {
  if (projectors.empty()) return Matrix();
  Matrix g = Matrix::Zero(projectors[0].rows(), projectors[0].cols());
  for (std::size_t k = 0; k < projectors.size(); ++k)
    g += eigenvalues[k] * projectors[k];
  return g;
}

double EigDecomposition::min_gap() const {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < eigenvalues.size(); ++k)
    gap = std::min(gap, eigenvalues[k] - eigenvalues[k - 1]);
  return gap;
}

EigDecomposition eigendecompose(const Matrix& g, double rel_tol) {
  if (!is_hermitian(g))
    throw std::domain_error("eigendecompose: non-Hermitian input");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(g);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigendecompose: solver failed");

  const Eigen::VectorXd& vals = solver.eigenvalues();
  const Matrix& vecs = solver.eigenvectors();
  const int n = static_cast<int>(vals.size());
  const double range = vals[n - 1] - vals[0];
  const double gap = rel_tol * std::max(range, 1e-300);

  EigDecomposition out;
  int start = 0;
  while (start < n) {
    int stop = start + 1;
    while (stop < n && vals[stop] - vals[stop - 1] <= gap) ++stop;
    Matrix p = Matrix::Zero(n, n);
    double mean = 0.0;
    for (int k = start; k < stop; ++k) {
      p += vecs.col(k) * vecs.col(k).adjoint();
      mean += vals[k];
    }
    out.eigenvalues.push_back(mean / (stop - start));
    out.projectors.push_back(std::move(p));
    start = stop;
  }
  return out;
}

Propagator::Propagator(const Matrix& h, double hbar) : hbar_(hbar) {
  if (!is_hermitian(h))
    throw std::domain_error("Propagator: non-Hermitian Hamiltonian");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("Propagator: eigensolver failed");
  evals_ = solver.eigenvalues();
  evecs_ = solver.eigenvectors();
}

Vector Propagator::at(const Vector& psi0, double t) const {
  Vector coeff = evecs_.adjoint() * psi0;
  for (int k = 0; k < coeff.size(); ++k)
    coeff[k] *= std::exp(Complex(0.0, -evals_[k] * t / hbar_));
  return evecs_ * coeff;
}

Matrix Propagator::unitary(double t) const {
  Vector phases(evals_.size());
  for (int k = 0; k < evals_.size(); ++k)
    phases[k] = std::exp(Complex(0.0, -evals_[k] * t / hbar_));
  return evecs_ * phases.asDiagonal() * evecs_.adjoint();
}

Vector propagate(const Matrix& h, const Vector& psi, double t, double hbar) {
  if (!std::isfinite(t)) throw std::domain_error("propagate: non-finite time");
  return Propagator(h, hbar).at(psi, t);
}

}  // namespace bellsel

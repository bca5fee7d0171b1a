#include "bellsel/continuum.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

namespace bellsel {

double GridWavefunction::norm_sq() const {
  return comps.squaredNorm() * grid.dx;
}

Eigen::VectorXd GridWavefunction::density() const {
  Eigen::VectorXd rho(grid.n);
  for (int i = 0; i < grid.n; ++i) rho[i] = comps.col(i).squaredNorm();
  return rho;
}

Vector GridWavefunction::flatten() const {
  Vector v(spin_dim * grid.n);
  for (int s = 0; s < spin_dim; ++s)
    for (int i = 0; i < grid.n; ++i) v[s * grid.n + i] = comps(s, i);
  return v;
}

void GridWavefunction::unflatten(const Vector& v) {
  for (int s = 0; s < spin_dim; ++s)
    for (int i = 0; i < grid.n; ++i) comps(s, i) = v[s * grid.n + i];
}

void GridWavefunction::normalize() {
  comps /= std::sqrt(norm_sq());
}

Matrix continuum_hamiltonian(const ContinuumModel& model) {
  const int n = model.grid.n;
  const int d = model.spin_dim;
  if (n < 3) throw std::domain_error("continuum_hamiltonian: grid too small");
  if (model.potential.size() != 0 && model.potential.size() != n)
    throw std::domain_error("continuum_hamiltonian: potential size mismatch");
  if (!model.spin_coupling.empty() &&
      static_cast<int>(model.spin_coupling.size()) != n)
    throw std::domain_error("continuum_hamiltonian: coupling size mismatch");

  const double c = model.hbar * model.hbar / (2.0 * model.mass * model.grid.dx * model.grid.dx);
  Matrix h = Matrix::Zero(n * d, n * d);
  for (int s = 0; s < d; ++s) {
    const int off = s * n;
    for (int i = 0; i < n; ++i) {
      h(off + i, off + i) += 2.0 * c;
      if (model.potential.size() > 0) h(off + i, off + i) += model.potential[i];
      const int right = i + 1 < n ? i + 1 : (model.boundary == Boundary::Periodic ? 0 : -1);
      if (right >= 0) {
        h(off + i, off + right) += -c;
        h(off + right, off + i) += -c;
      }
    }
  }
  for (int i = 0; i < static_cast<int>(model.spin_coupling.size()); ++i) {
    const Matrix& m = model.spin_coupling[i];
    if (m.rows() != d || !is_hermitian(m))
      throw std::domain_error("continuum_hamiltonian: bad spin coupling at point " +
                              std::to_string(i));
    for (int s = 0; s < d; ++s)
      for (int s2 = 0; s2 < d; ++s2) h(s * n + i, s2 * n + i) += m(s, s2);
  }
  return h;
}

CrankNicolson::CrankNicolson(const ContinuumModel& model, double dt)
    : dt_(dt), spin_dim_(model.spin_dim), n_(model.grid.n) {
  if (dt <= 0.0) throw std::domain_error("CrankNicolson: dt must be positive");
  const Matrix h = continuum_hamiltonian(model);
  const Complex a(0.0, dt / (2.0 * model.hbar));
  const Matrix identity = Matrix::Identity(h.rows(), h.cols());
  forward_ = identity - a * h;
  backward_.compute(identity + a * h);
}

GridWavefunction CrankNicolson::step(const GridWavefunction& psi) const {
  if (psi.spin_dim != spin_dim_ || psi.grid.n != n_)
    throw std::domain_error("CrankNicolson: wavefunction/model mismatch");
  GridWavefunction out = psi;
  out.unflatten(backward_.solve(forward_ * psi.flatten()));
  out.time = psi.time + dt_;
  return out;
}

Eigen::VectorXd velocity_field(const GridWavefunction& psi,
                               const ContinuumModel& model,
                               double density_floor) {
  const int n = psi.grid.n;
  const double scale = model.hbar / (model.mass * 2.0 * psi.grid.dx);
  Eigen::VectorXd v(n);
  const Eigen::VectorXd rho = psi.density();
  for (int i = 0; i < n; ++i) {
    if (rho[i] < density_floor) {
      v[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double numer = 0.0;
    for (int s = 0; s < psi.spin_dim; ++s) {
      Complex left, right;
      if (model.boundary == Boundary::Periodic) {
        right = psi.comps(s, (i + 1) % n);
        left = psi.comps(s, (i + n - 1) % n);
      } else {
        right = i + 1 < n ? psi.comps(s, i + 1) : Complex(0.0, 0.0);
        left = i > 0 ? psi.comps(s, i - 1) : Complex(0.0, 0.0);
      }
      numer += (std::conj(psi.comps(s, i)) * (right - left)).imag();
    }
    v[i] = scale * numer / rho[i];
  }
  return v;
}

EvolvedFields evolve_fields(const ContinuumModel& model, GridWavefunction psi,
                            int steps, double dt) {
  CrankNicolson cn(model, dt);
  EvolvedFields out;
  out.velocities.reserve(steps + 1);
  out.densities.reserve(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    out.velocities.push_back(velocity_field(psi, model));
    out.densities.push_back(psi.density() * psi.grid.dx);
    if (k < steps) psi = cn.step(psi);
  }
  out.final_psi = std::move(psi);
  return out;
}

namespace {

// Linear interpolation; NaN when either support point is a node.
double interpolate(const Eigen::VectorXd& v, const Grid1d& grid, double x,
                   Boundary boundary) {
  if (boundary == Boundary::Periodic) {
    double u = std::fmod(x - grid.x0, grid.length());
    if (u < 0.0) u += grid.length();
    const double cell = u / grid.dx;
    const int i = std::min(static_cast<int>(cell), grid.n - 1);
    const double frac = cell - i;
    return v[i] * (1.0 - frac) + v[(i + 1) % grid.n] * frac;
  }
  const double cell = (x - grid.x0) / grid.dx;
  if (cell <= 0.0) return v[0];
  if (cell >= grid.n - 1) return v[grid.n - 1];
  const int i = static_cast<int>(cell);
  const double frac = cell - i;
  return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

double apply_boundary(double x, const Grid1d& grid, Boundary boundary) {
  if (boundary == Boundary::Periodic) {
    double u = std::fmod(x - grid.x0, grid.length());
    if (u < 0.0) u += grid.length();
    return grid.x0 + u;
  }
  if (x < grid.x0) return 2.0 * grid.x0 - x;
  if (x > grid.x_end()) return 2.0 * grid.x_end() - x;
  return x;
}

}  // namespace

Trajectory integrate_trajectory(double x0,
                                const std::vector<Eigen::VectorXd>& velocities,
                                const Grid1d& grid, double dt,
                                Boundary boundary) {
  Trajectory traj;
  traj.positions.reserve(velocities.size());
  double x = x0;
  traj.positions.push_back(x);
  for (std::size_t k = 0; k + 1 < velocities.size(); ++k) {
    const double k1 = interpolate(velocities[k], grid, x, boundary);
    const double xm = apply_boundary(x + 0.5 * dt * k1, grid, boundary);
    const double k2 = 0.5 * (interpolate(velocities[k], grid, xm, boundary) +
                             interpolate(velocities[k + 1], grid, xm, boundary));
    if (!std::isfinite(k1) || !std::isfinite(k2)) {
      traj.aborted = true;
      traj.abort_time = k * dt;
      return traj;
    }
    x = apply_boundary(x + dt * k2, grid, boundary);
    traj.positions.push_back(x);
  }
  return traj;
}

namespace {

std::vector<Trajectory> integrate_ensemble_impl(
    const std::vector<Eigen::VectorXd>& velocities,
    const Eigen::VectorXd& initial_density, const Grid1d& grid, double dt,
    Boundary boundary, int n, std::uint64_t seed, bool parallel) {
  const double total = initial_density.sum();
  std::vector<Trajectory> out(n);
  std::exception_ptr first_error = nullptr;
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    try {
      Xoshiro256pp rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      double u = rng.uniform() * total;
      int cell = grid.n - 1;
      for (int j = 0; j < grid.n; ++j) {
        u -= initial_density[j];
        if (u < 0.0) {
          cell = j;
          break;
        }
      }
      const double x0 = grid.x(cell) + (rng.uniform() - 0.5) * grid.dx;
      out[i] = integrate_trajectory(apply_boundary(x0, grid, boundary),
                                    velocities, grid, dt, boundary);
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace

std::vector<Trajectory> integrate_ensemble(
    const std::vector<Eigen::VectorXd>& velocities,
    const Eigen::VectorXd& initial_density, const Grid1d& grid, double dt,
    Boundary boundary, int n, std::uint64_t seed) {
  return integrate_ensemble_impl(velocities, initial_density, grid, dt,
                                 boundary, n, seed, true);
}

std::vector<Trajectory> integrate_ensemble_serial(
    const std::vector<Eigen::VectorXd>& velocities,
    const Eigen::VectorXd& initial_density, const Grid1d& grid, double dt,
    Boundary boundary, int n, std::uint64_t seed) {
  return integrate_ensemble_impl(velocities, initial_density, grid, dt,
                                 boundary, n, seed, false);
}

Matrix parity_operator(const ContinuumModel& model) {
  const int n = model.grid.n;
  Matrix p = Matrix::Zero(model.dim(), model.dim());
  for (int s = 0; s < model.spin_dim; ++s)
    for (int i = 0; i < n; ++i) p(s * n + (n - 1 - i), s * n + i) = 1.0;
  return p;
}

ParityReport parity_counterexample(const ContinuumModel& model,
                                   const GridWavefunction& psi) {
  const int n = model.grid.n;
  if (std::abs(model.grid.x0 + model.grid.x_end()) > 1e-9 * model.grid.dx)
    throw std::domain_error("parity_counterexample: grid is not symmetric about 0");
  for (int i = 0; i < n; ++i) {
    const double v_here = model.potential.size() ? model.potential[i] : 0.0;
    const double v_mirror = model.potential.size() ? model.potential[n - 1 - i] : 0.0;
    if (std::abs(v_here - v_mirror) > 1e-12)
      throw std::domain_error("parity_counterexample: potential is not symmetric");
  }

  ParityReport report;
  report.commutator =
      commutator_norm(parity_operator(model), continuum_hamiltonian(model));

  GridWavefunction even = psi, odd = psi;
  for (int s = 0; s < psi.spin_dim; ++s)
    for (int i = 0; i < n; ++i) {
      const Complex mirrored = psi.comps(s, n - 1 - i);
      even.comps(s, i) = 0.5 * (psi.comps(s, i) + mirrored);
      odd.comps(s, i) = 0.5 * (psi.comps(s, i) - mirrored);
    }
  report.even_weight = even.norm_sq() / psi.norm_sq();
  report.odd_weight = odd.norm_sq() / psi.norm_sq();
  report.generic = report.even_weight > 1e-6 && report.odd_weight > 1e-6;

  const Eigen::VectorXd v_psi = velocity_field(psi, model);
  if (report.even_weight > 1e-12) {
    even.normalize();
    const Eigen::VectorXd v_even = velocity_field(even, model);
    for (int i = 0; i < n; ++i)
      if (std::isfinite(v_psi[i]) && std::isfinite(v_even[i]))
        report.max_dev_even = std::max(report.max_dev_even, std::abs(v_psi[i] - v_even[i]));
  }
  if (report.odd_weight > 1e-12) {
    odd.normalize();
    const Eigen::VectorXd v_odd = velocity_field(odd, model);
    for (int i = 0; i < n; ++i)
      if (std::isfinite(v_psi[i]) && std::isfinite(v_odd[i]))
        report.max_dev_odd = std::max(report.max_dev_odd, std::abs(v_psi[i] - v_odd[i]));
  }
  return report;
}

}  // namespace bellsel

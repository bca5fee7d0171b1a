#include "bellsel/grw.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <stdexcept>

#include "bellsel/superselection.hpp"

namespace bellsel {

FlashRateFamily FlashRateFamily::build(std::vector<std::string> locations,
                                       std::vector<Matrix> operators) {
  if (locations.size() != operators.size())
    throw std::domain_error("FlashRateFamily: label/operator count mismatch");
  if (operators.empty()) throw std::domain_error("FlashRateFamily: empty family");

  FlashRateFamily fam;
  fam.locations = std::move(locations);
  fam.operators = std::move(operators);
  const int dim = static_cast<int>(fam.operators[0].rows());
  fam.total = Matrix::Zero(dim, dim);
  fam.diagonal = true;
  for (const auto& lam : fam.operators) {
    if (lam.rows() != dim || lam.cols() != dim)
      throw std::domain_error("FlashRateFamily: inconsistent dimensions");
    if (!is_hermitian(lam))
      throw std::domain_error("FlashRateFamily: non-Hermitian rate operator");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(lam);
    if (solver.eigenvalues().minCoeff() < -1e-10)
      throw std::domain_error("FlashRateFamily: rate operator not positive");
    Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    fam.square_roots.push_back(solver.eigenvectors() * roots.asDiagonal() *
                               solver.eigenvectors().adjoint());
    fam.total += lam;
    for (int i = 0; i < dim && fam.diagonal; ++i)
      for (int j = 0; j < dim; ++j)
        if (i != j && std::abs(lam(i, j)) > 0.0) {
          fam.diagonal = false;
          break;
        }
  }
  return fam;
}

GrwPropagator::GrwPropagator(const Matrix& h, const FlashRateFamily& lam,
                             double hbar) {
  if (!is_hermitian(h)) throw std::domain_error("GrwPropagator: non-Hermitian H");
  if (h.rows() != lam.total.rows())
    throw std::domain_error("GrwPropagator: dimension mismatch");
  generator_ = Complex(0.0, -1.0 / hbar) * h - 0.5 * lam.total;
}

Matrix GrwPropagator::w(double t) const {
  if (t < 0.0) throw std::domain_error("GrwPropagator: negative time");
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(t);
  if (it == cache_.end())
    it = cache_.emplace(t, Matrix((generator_ * t).exp())).first;
  return it->second;
}

Vector GrwPropagator::apply(const Vector& psi, double t) const {
  return w(t) * psi;
}

void GrwPropagator::warm(const std::vector<double>& ts) const {
  for (const double t : ts) w(t);
}

Vector grw_propagate(const Vector& psi, const Matrix& h,
                     const FlashRateFamily& lam, double t, double hbar) {
  return GrwPropagator(h, lam, hbar).apply(psi, t);
}

double flash_joint_density(const GrwPropagator& prop,
                           const FlashRateFamily& lam, const Vector& psi,
                           const std::vector<Flash>& flashes) {
  Vector phi = psi;
  double t_prev = 0.0;
  for (const auto& flash : flashes) {
    if (flash.time <= t_prev)
      throw std::domain_error("flash_joint_density: times must be strictly increasing");
    if (flash.location < 0 || flash.location >= lam.num_locations())
      throw std::domain_error("flash_joint_density: unknown location");
    phi = lam.square_roots[flash.location] * prop.apply(phi, flash.time - t_prev);
    t_prev = flash.time;
  }
  return phi.squaredNorm();
}

double flash_joint_density(const Vector& psi, const Matrix& h,
                           const FlashRateFamily& lam,
                           const std::vector<Flash>& flashes, double hbar) {
  return flash_joint_density(GrwPropagator(h, lam, hbar), lam, psi, flashes);
}

namespace {

// || Lambda(x)^{1/2} phi ||^2 per location.
void flash_weights(const FlashRateFamily& lam, const Vector& phi,
                   std::vector<double>& weights) {
  for (int x = 0; x < lam.num_locations(); ++x) {
    if (lam.diagonal) {
      double w = 0.0;
      for (int i = 0; i < phi.size(); ++i)
        w += lam.operators[x](i, i).real() * std::norm(phi[i]);
      weights[x] = w;
    } else {
      weights[x] = (phi.adjoint() * lam.operators[x] * phi)(0, 0).real();
    }
  }
}

FlashHistory sample_flashes_with(const GrwPropagator& prop, const Matrix& w_dt,
                                 const FlashRateFamily& lam, const Vector& psi,
                                 double horizon, double dt, Xoshiro256pp& rng,
                                 bool& warned) {
  const int steps = static_cast<int>(std::llround(horizon / dt));
  const double sqrt_dt = std::sqrt(dt);
  FlashHistory history;
  history.horizon = horizon;
  Vector phi = psi;
  std::vector<double> weights(lam.num_locations());
  for (int k = 0; k < steps; ++k) {
    const double nsq = phi.squaredNorm();
    if (nsq < 1e-300)
      throw std::runtime_error("sample_flashes: state norm underflow at step " +
                               std::to_string(k));
    flash_weights(lam, phi, weights);
    double total = 0.0;
    for (double w : weights) total += std::max(w, 0.0);
    const double p_flash = total / nsq * dt;
    if (p_flash > 0.1 && !warned) {
      warned = true;
      std::fprintf(stderr,
                   "[bellsel] warning: flash rate * dt = %.3g exceeds 0.1\n",
                   p_flash);
    }
    if (p_flash > 1.0)
      throw std::runtime_error("sample_flashes: rate*dt exceeds 1; reduce dt");
    if (rng.uniform() < p_flash) {
      double u = rng.uniform() * total;
      int x = lam.num_locations() - 1;
      for (int j = 0; j < lam.num_locations(); ++j) {
        u -= std::max(weights[j], 0.0);
        if (u < 0.0) {
          x = j;
          break;
        }
      }
      history.flashes.push_back({x, (k + 1) * dt});
      phi = sqrt_dt * (lam.square_roots[x] * phi);
    }
    phi = w_dt * phi;
  }
  history.terminal_state = std::move(phi);
  return history;
}

std::vector<FlashHistory> sample_flash_ensemble_impl(
    const Vector& psi, const Matrix& h, const FlashRateFamily& lam,
    double horizon, double dt, int n, std::uint64_t seed, double hbar,
    bool parallel) {
  GrwPropagator prop(h, lam, hbar);
  const Matrix w_dt = prop.w(dt);
  std::vector<FlashHistory> out(n);
  bool warned = false;
  std::exception_ptr first_error = nullptr;
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    try {
      Xoshiro256pp rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      out[i] = sample_flashes_with(prop, w_dt, lam, psi, horizon, dt, rng, warned);
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace

FlashHistory sample_flashes(const Vector& psi, const Matrix& h,
                            const FlashRateFamily& lam, double horizon,
                            double dt, std::uint64_t seed, double hbar) {
  GrwPropagator prop(h, lam, hbar);
  const Matrix w_dt = prop.w(dt);
  Xoshiro256pp rng(seed);
  bool warned = false;
  return sample_flashes_with(prop, w_dt, lam, psi, horizon, dt, rng, warned);
}

std::vector<FlashHistory> sample_flash_ensemble(const Vector& psi,
                                                const Matrix& h,
                                                const FlashRateFamily& lam,
                                                double horizon, double dt,
                                                int n, std::uint64_t seed,
                                                double hbar) {
  return sample_flash_ensemble_impl(psi, h, lam, horizon, dt, n, seed, hbar, true);
}

std::vector<FlashHistory> sample_flash_ensemble_serial(
    const Vector& psi, const Matrix& h, const FlashRateFamily& lam,
    double horizon, double dt, int n, std::uint64_t seed, double hbar) {
  return sample_flash_ensemble_impl(psi, h, lam, horizon, dt, n, seed, hbar, false);
}

FlashSsrResult verify_flash_superselection(const Vector& psi, const Matrix& g,
                                           const Matrix& h,
                                           const FlashRateFamily& lam,
                                           int n_max,
                                           const std::vector<double>& time_grid,
                                           double hbar, bool parallel) {
  FlashSsrResult result;
  for (const auto& op : lam.operators)
    result.comm_lambda = std::max(result.comm_lambda, commutator_norm(g, op));
  result.comm_h = commutator_norm(g, h);

  const Mixture mix = build_mixture(psi, g);

  // Enumerate all strictly increasing time tuples and location tuples.
  std::vector<std::vector<Flash>> sequences;
  std::vector<Flash> current;
  const auto extend = [&](auto&& self, std::size_t time_start) -> void {
    if (!current.empty()) sequences.push_back(current);
    if (static_cast<int>(current.size()) == n_max) return;
    for (std::size_t ti = time_start; ti < time_grid.size(); ++ti)
      for (int x = 0; x < lam.num_locations(); ++x) {
        current.push_back({x, time_grid[ti]});
        self(self, ti + 1);
        current.pop_back();
      }
  };
  extend(extend, 0);
  result.sequences_checked = static_cast<long>(sequences.size());

  GrwPropagator prop(h, lam, hbar);
  std::vector<double> dts;
  for (std::size_t i = 0; i < time_grid.size(); ++i) {
    dts.push_back(time_grid[i]);
    for (std::size_t j = i + 1; j < time_grid.size(); ++j)
      dts.push_back(time_grid[j] - time_grid[i]);
  }
  prop.warm(dts);

  double max_dev = 0.0;
#pragma omp parallel for schedule(dynamic) reduction(max : max_dev) if (parallel)
  for (long s = 0; s < static_cast<long>(sequences.size()); ++s) {
    const double p_psi = flash_joint_density(prop, lam, psi, sequences[s]);
    double p_mix = 0.0;
    for (const auto& member : mix.members)
      p_mix += member.weight *
               flash_joint_density(prop, lam, member.state, sequences[s]);
    max_dev = std::max(max_dev, std::abs(p_psi - p_mix));
  }
  result.max_deviation = max_dev;
  return result;
}

Eigen::VectorXd matter_density(const Vector& psi_t, const FlashRateFamily& lam) {
  Eigen::VectorXd m(lam.num_locations());
  for (int x = 0; x < lam.num_locations(); ++x)
    m[x] = (psi_t.adjoint() * lam.operators[x] * psi_t)(0, 0).real();
  return m;
}

GrwmReport grwm_counterexample(const Model& model, const Vector& psi,
                               const FlashRateFamily& lam,
                               const std::vector<int>& location_component,
                               const Matrix& g, double t) {
  if (static_cast<int>(location_component.size()) != lam.num_locations())
    throw std::domain_error("grwm_counterexample: location/component map size mismatch");
  int n_components = 0;
  for (int c : location_component) n_components = std::max(n_components, c + 1);

  GrwPropagator prop(model.h_total, lam, model.hbar);
  const auto component_masses = [&](const Vector& state) {
    Vector evolved = prop.apply(state, t);
    evolved.normalize();  // conditioned on no collapse up to t
    const Eigen::VectorXd m = matter_density(evolved, lam);
    std::vector<double> mass(n_components, 0.0);
    for (int x = 0; x < lam.num_locations(); ++x)
      mass[location_component[x]] += m[x];
    return mass;
  };

  GrwmReport report;
  report.psi_mass = component_masses(psi);
  const Mixture mix = build_mixture(psi, g);
  for (const auto& member : mix.members) {
    report.member_weights.push_back(member.weight);
    report.member_eigenvalues.push_back(member.eigenvalue);
    report.member_mass.push_back(component_masses(member.state));
  }
  for (const auto& mass : report.member_mass) {
    double diff = 0.0;
    for (int c = 0; c < n_components; ++c)
      diff = std::max(diff, std::abs(mass[c] - report.psi_mass[c]));
    report.discrepancy = std::max(report.discrepancy, diff);
  }
  return report;
}

}  // namespace bellsel

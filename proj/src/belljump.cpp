#include "bellsel/belljump.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <stdexcept>

namespace bellsel {

namespace {

// flux(q, q') = (2/hbar) Im <psi|P(q) h_jump P(q')|psi>; antisymmetric.
Eigen::MatrixXd flux_matrix(const Vector& psi, const Model& model) {
  const int dim = model.dim();
  const int nq = model.pvm.num_configs;
  const Matrix weighted = model.h_jump * psi.asDiagonal();
  Eigen::MatrixXd flux = Eigen::MatrixXd::Zero(nq, nq);
  for (int i = 0; i < dim; ++i) {
    const Complex ci = std::conj(psi[i]);
    const int qi = model.pvm.cell_of[i];
    for (int j = 0; j < dim; ++j)
      flux(qi, model.pvm.cell_of[j]) += (ci * weighted(i, j)).imag();
  }
  return flux * (2.0 / model.hbar);
}

int draw_categorical(const Eigen::VectorXd& weights, double total,
                     Xoshiro256pp& rng) {
  double u = rng.uniform() * total;
  for (int i = 0; i + 1 < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace

int Path::config_at(double t) const {
  int q = initial_config;
  for (const auto& e : events) {
    if (e.time > t) break;
    q = e.to;
  }
  return q;
}

int Path::final_config() const {
  return events.empty() ? initial_config : events.back().to;
}

bool Path::operator==(const Path& other) const {
  if (initial_config != other.initial_config || horizon != other.horizon ||
      events.size() != other.events.size() ||
      sector_value != other.sector_value)
    return false;
  for (std::size_t k = 0; k < events.size(); ++k)
    if (events[k].time != other.events[k].time ||
        events[k].from != other.events[k].from ||
        events[k].to != other.events[k].to)
      return false;
  return true;
}

double RateMap::total() const {
  double t = 0.0;
  for (const auto& [q, r] : rates) t += r;
  return t;
}

RateMap jump_rates(const Vector& psi, int from, const Model& model,
                   double floor) {
  if (from < 0 || from >= model.pvm.num_configs)
    throw std::domain_error("jump_rates: config index out of range");
  const double occ = cell_probability(model.pvm, from, psi);
  if (occ <= floor)
    throw std::domain_error(
        "jump_rates: rate undefined at unoccupied configuration " +
        std::to_string(from));

  // w = h_jump P(from) psi; then aggregate conj(psi_i) w_i over cells.
  Vector w = model.h_jump * apply_cell_projector(model.pvm, from, psi);
  Eigen::VectorXd numer = Eigen::VectorXd::Zero(model.pvm.num_configs);
  for (int i = 0; i < model.dim(); ++i)
    numer[model.pvm.cell_of[i]] += (std::conj(psi[i]) * w[i]).imag();

  RateMap out;
  out.from = from;
  for (int q = 0; q < model.pvm.num_configs; ++q) {
    if (q == from) continue;
    const double rate = (2.0 / model.hbar) * numer[q] / occ;
    if (rate > 0.0) out.rates[q] = rate;
  }
  return out;
}

JumpKernel::JumpKernel(const Model& model, const Vector& psi0, double horizon,
                       double dt, bool quiet)
    : num_configs_(model.pvm.num_configs),
      dt_(dt),
      horizon_(horizon),
      max_rate_dt_(0.0),
      propagator_(model.h_total, model.hbar),
      psi0_(psi0) {
  if (dt <= 0.0 || horizon < 0.0)
    throw std::domain_error("JumpKernel: need dt > 0 and horizon >= 0");
  steps_ = static_cast<int>(std::llround(horizon / dt));
  if (std::abs(steps_ * dt - horizon) > 1e-9 * std::max(1.0, horizon))
    throw std::domain_error("JumpKernel: horizon must be a multiple of dt");

  flux_.reserve(steps_);
  occupation_.reserve(steps_ + 1);
  for (int k = 0; k <= steps_; ++k) {
    const Vector psi = propagator_.at(psi0_, k * dt_);
    occupation_.push_back(cell_distribution(model.pvm, psi));
    if (k == steps_) break;
    flux_.push_back(flux_matrix(psi, model));
    const auto& flux = flux_.back();
    const auto& occ = occupation_.back();
    for (int q = 0; q < num_configs_; ++q) {
      if (occ[q] < kGuardOccupationFloor) continue;
      const double total = flux.col(q).cwiseMax(0.0).sum() / occ[q];
      max_rate_dt_ = std::max(max_rate_dt_, total * dt_);
    }
  }
  if (max_rate_dt_ > 0.1 && !quiet)
    std::fprintf(stderr,
                 "[bellsel] warning: max total jump rate * dt = %.3g exceeds "
                 "0.1; first-order thinning is inaccurate at this dt\n",
                 max_rate_dt_);
}

Vector JumpKernel::psi_at_step(int k) const {
  return propagator_.at(psi0_, k * dt_);
}

Path sample_path(const JumpKernel& kernel, int q0, Xoshiro256pp& rng,
                 const std::vector<double>* sector_f) {
  const int nq = kernel.num_configs();
  int q = q0;
  if (q < 0) {
    const auto& occ0 = kernel.occupation(0);
    q = draw_categorical(occ0, occ0.sum(), rng);
  } else if (q >= nq) {
    throw std::domain_error("sample_path: config index out of range");
  }

  Path path;
  path.initial_config = q;
  path.horizon = kernel.horizon();
  if (sector_f) path.sector_value = (*sector_f)[q];

  Eigen::VectorXd rates(nq);
  for (int k = 0; k < kernel.steps(); ++k) {
    const double occ = kernel.occupation(k)[q];
    if (occ <= kOccupationFloor)
      throw std::runtime_error(
          "sample_path: reached unoccupied configuration " + std::to_string(q) +
          " at step " + std::to_string(k) + " (occupation " +
          std::to_string(occ) + ")");
    rates = kernel.flux(k).col(q).cwiseMax(0.0) / occ;
    const double total = rates.sum();
    // Clamp at 1: near-node configurations can spike the total rate; the
    // kernel's guard diagnostic reports when this bites.
    const double p_jump = std::min(total * kernel.dt(), 1.0);
    if (rng.uniform() < p_jump) {
      const int dest = draw_categorical(rates, total, rng);
      path.events.push_back({(k + 1) * kernel.dt(), q, dest});
      q = dest;
    }
  }
  return path;
}

Path sample_trajectory(const Model& model, const Vector& psi0, int q0,
                       double horizon, double dt, std::uint64_t seed,
                       const std::vector<double>* sector_f) {
  JumpKernel kernel(model, psi0, horizon, dt);
  Xoshiro256pp rng(seed);
  return sample_path(kernel, q0, rng, sector_f);
}

PathEnsemble sample_ensemble(const JumpKernel& kernel, int n,
                             std::uint64_t seed,
                             const std::vector<double>* sector_f,
                             bool parallel, const std::string& model_id) {
  if (n < 0) throw std::domain_error("sample_ensemble: negative n");
  PathEnsemble ensemble;
  ensemble.horizon = kernel.horizon();
  ensemble.dt = kernel.dt();
  ensemble.seed = seed;
  ensemble.model_id = model_id;
  ensemble.paths.resize(n);

  std::exception_ptr first_error = nullptr;
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    try {
      Xoshiro256pp rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      ensemble.paths[i] = sample_path(kernel, -1, rng, sector_f);
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return ensemble;
}

PathEnsemble sample_ensemble(const Model& model, const Vector& psi0, int n,
                             double horizon, double dt, std::uint64_t seed,
                             const std::vector<double>* sector_f) {
  JumpKernel kernel(model, psi0, horizon, dt);
  return sample_ensemble(kernel, n, seed, sector_f, true, model.name);
}

PathEnsemble sample_ensemble_serial(const Model& model, const Vector& psi0,
                                    int n, double horizon, double dt,
                                    std::uint64_t seed,
                                    const std::vector<double>* sector_f) {
  JumpKernel kernel(model, psi0, horizon, dt);
  return sample_ensemble(kernel, n, seed, sector_f, false, model.name);
}

DeterminismResult is_deterministic(const Model& model, double tol) {
  DeterminismResult result;
  result.deterministic = true;

  // [h_jump, P(q)] has entries h_jump(i,j) (1_{j in q} - 1_{i in q}); its
  // max-entry norm is the largest |h_jump(i,j)| touching cell q on one side.
  const int dim = model.dim();
  Eigen::VectorXd worst = Eigen::VectorXd::Zero(model.pvm.num_configs);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      const int qi = model.pvm.cell_of[i], qj = model.pvm.cell_of[j];
      if (qi == qj) continue;
      const double v = std::abs(model.h_jump(i, j));
      worst[qi] = std::max(worst[qi], v);
      worst[qj] = std::max(worst[qj], v);
    }
  for (int q = 0; q < model.pvm.num_configs; ++q)
    if (worst[q] > result.witness_norm) {
      result.witness_norm = worst[q];
      result.witness_cell = q;
    }
  if (result.witness_norm > tol) result.deterministic = false;

  // Cross-check: rates must vanish for random state vectors.
  Xoshiro256pp rng(0xB311D0E5ULL);
  for (int trial = 0; trial < 20; ++trial) {
    Vector psi(dim);
    for (int i = 0; i < dim; ++i) psi[i] = Complex(rng.gaussian(), rng.gaussian());
    psi.normalize();
    for (int q = 0; q < model.pvm.num_configs; ++q) {
      if (cell_probability(model.pvm, q, psi) < kGuardOccupationFloor) continue;
      for (const auto& [dest, rate] : jump_rates(psi, q, model).rates)
        result.max_random_rate = std::max(result.max_random_rate, rate);
    }
  }
  return result;
}

double PathLaw::total_mass() const {
  double s = pruned_mass;
  for (const auto& [sk, p] : prob) s += p;
  return s;
}

PathLaw exact_path_law(const Model& model, const Vector& psi0, double horizon,
                       double dt, double prune_eps) {
  JumpKernel kernel(model, psi0, horizon, dt, /*quiet=*/true);
  const int nq = kernel.num_configs();
  if (nq > 8)
    throw std::domain_error("exact_path_law: more than 8 configurations");
  if (kernel.steps() > 12)
    throw std::domain_error("exact_path_law: more than 12 steps");

  PathLaw law;
  law.steps = kernel.steps();
  law.num_configs = nq;

  std::vector<int> skeleton(kernel.steps() + 1);
  const auto descend = [&](auto&& self, int k, int q, double p) -> void {
    skeleton[k] = q;
    if (k == kernel.steps()) {
      law.prob[skeleton] += p;
      return;
    }
    const double occ = kernel.occupation(k)[q];
    if (occ <= kOccupationFloor)
      throw std::runtime_error(
          "exact_path_law: positive-probability branch at unoccupied "
          "configuration " +
          std::to_string(q));
    const Eigen::VectorXd rates = kernel.flux(k).col(q).cwiseMax(0.0) / occ;
    const double total = rates.sum();
    const double p_jump = std::min(total * kernel.dt(), 1.0);  // as the sampler
    for (int dest = 0; dest <= nq; ++dest) {
      const bool stay = dest == nq;
      const double step_p =
          stay ? 1.0 - p_jump : (total > 0.0 ? rates[dest] * p_jump / total : 0.0);
      const double child = p * step_p;
      if (child <= 0.0) continue;
      if (child < prune_eps) {
        law.pruned_mass += child;
        continue;
      }
      self(self, k + 1, stay ? q : dest, child);
    }
  };

  const auto& occ0 = kernel.occupation(0);
  for (int q = 0; q < nq; ++q)
    if (occ0[q] > 0.0) descend(descend, 0, q, occ0[q]);
  return law;
}

std::vector<int> skeleton_of(const Path& path, double dt, int steps) {
  std::vector<int> skeleton(steps + 1);
  int q = path.initial_config;
  std::size_t next = 0;
  for (int k = 0; k <= steps; ++k) {
    while (next < path.events.size() &&
           std::llround(path.events[next].time / dt) <= k)
      q = path.events[next++].to;
    skeleton[k] = q;
  }
  return skeleton;
}

double path_law_distance(const PathLaw& a, const PathLaw& b) {
  double d = 0.0;
  for (const auto& [sk, p] : a.prob) {
    const auto it = b.prob.find(sk);
    d = std::max(d, std::abs(p - (it == b.prob.end() ? 0.0 : it->second)));
  }
  for (const auto& [sk, p] : b.prob)
    if (!a.prob.count(sk)) d = std::max(d, p);
  return d;
}

}  // namespace bellsel

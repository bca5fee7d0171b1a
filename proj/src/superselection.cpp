#include "bellsel/superselection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bellsel/stats.hpp"

namespace bellsel {

double Mixture::weight_sum() const {
  double s = 0.0;
  for (const auto& m : members) s += m.weight;
  return s;
}

Mixture build_mixture(const Vector& psi, const Matrix& g, double weight_floor,
                      double eig_rel_tol) {
  const EigDecomposition eig = eigendecompose(g, eig_rel_tol);
  Mixture mix;
  for (std::size_t k = 0; k < eig.eigenvalues.size(); ++k) {
    Vector component = eig.projectors[k] * psi;
    const double weight = component.squaredNorm();
    if (weight <= weight_floor) {
      ++mix.skipped_sectors;
      continue;
    }
    mix.members.push_back(
        {eig.eigenvalues[k], weight, component / std::sqrt(weight)});
  }
  return mix;
}

Matrix mixture_density_matrix(const Vector& psi, const Matrix& g,
                              double eig_rel_tol) {
  const EigDecomposition eig = eigendecompose(g, eig_rel_tol);
  Matrix rho = Matrix::Zero(psi.size(), psi.size());
  for (const auto& p : eig.projectors) {
    Vector component = p * psi;
    rho += component * component.adjoint();
  }
  return rho;
}

ConfigFunctionResult extract_config_function(const Matrix& g, const Pvm& pvm,
                                             double tol) {
  if (!is_hermitian(g))
    throw std::domain_error("extract_config_function: non-Hermitian input");
  ConfigFunctionResult result;
  result.f.assign(pvm.num_configs, 0.0);

  std::vector<int> first_index(pvm.num_configs, -1);
  for (int i = 0; i < pvm.dim(); ++i)
    if (first_index[pvm.cell_of[i]] < 0) first_index[pvm.cell_of[i]] = i;
  for (int q = 0; q < pvm.num_configs; ++q)
    if (first_index[q] >= 0) result.f[q] = g(first_index[q], first_index[q]).real();

  double worst = 0.0;
  int wi = -1, wj = -1;
  std::string why;
  for (int i = 0; i < pvm.dim(); ++i)
    for (int j = 0; j < pvm.dim(); ++j) {
      const int qi = pvm.cell_of[i], qj = pvm.cell_of[j];
      const Complex expected =
          (qi == qj && i == j) ? Complex(result.f[qi], 0.0) : Complex(0.0, 0.0);
      const double dev = std::abs(g(i, j) - expected);
      if (dev > worst) {
        worst = dev;
        wi = i;
        wj = j;
        why = qi != qj ? "nonzero block between cells"
                       : (i == j ? "diagonal deviates within cell"
                                 : "non-scalar action within cell");
      }
    }
  result.witness_abs = worst;
  if (worst <= tol) {
    result.ok = true;
  } else {
    result.witness_row = wi;
    result.witness_col = wj;
    result.message = why;
    result.f.clear();
  }
  return result;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Strong: return "strong";
    case Verdict::WeakOnly: return "weak-only";
    case Verdict::NeitherStrong: return "neither-strong";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

void SuperselectionReport::add_condition(std::string name, bool pass,
                                         double value, std::string note) {
  conditions.push_back({std::move(name), pass, value, std::move(note)});
}

const ConditionResult* SuperselectionReport::find_condition(
    const std::string& name) const {
  for (const auto& c : conditions)
    if (c.name == name) return &c;
  return nullptr;
}

bool SuperselectionReport::all_features_pass() const {
  for (const auto& f : features)
    if (!f.pass) return false;
  return true;
}

nlohmann::json SuperselectionReport::to_json() const {
  nlohmann::json j;
  j["verdict"] = to_string(verdict);
  j["alpha"] = alpha;
  j["conditions"] = nlohmann::json::array();
  for (const auto& c : conditions)
    j["conditions"].push_back(
        {{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"note", c.note}});
  j["features"] = nlohmann::json::array();
  for (const auto& f : features)
    j["features"].push_back({{"feature", f.feature},
                             {"test", f.test},
                             {"statistic", f.statistic},
                             {"p_value", f.p_value},
                             {"pass", f.pass},
                             {"n_a", f.n_a},
                             {"n_b", f.n_b}});
  j["metrics"] = metrics;
  return j;
}

void check_strong_conditions(const Matrix& g, const Model& model, double tol,
                             SuperselectionReport& report) {
  const ConfigFunctionResult cfg = extract_config_function(g, model.pvm, tol);
  report.add_condition("g_is_config_function", cfg.ok, cfg.witness_abs,
                       cfg.ok ? "" : cfg.message + " at (" +
                                         std::to_string(cfg.witness_row) + "," +
                                         std::to_string(cfg.witness_col) + ")");

  const double comm_h = commutator_norm(g, model.h_total);
  report.add_condition("g_commutes_with_h", comm_h <= tol, comm_h);

  const EigDecomposition eig = eigendecompose(g);
  double cross = 0.0;
  for (std::size_t a = 0; a < eig.projectors.size(); ++a)
    for (std::size_t b = 0; b < eig.projectors.size(); ++b)
      if (a != b)
        cross = std::max(
            cross, max_abs(eig.projectors[a] * model.h_jump * eig.projectors[b]));
  report.add_condition("cross_sector_jump_blocks_vanish", cross <= tol, cross);

  if (cfg.ok) {
    int n_components = 0;
    for (int c : model.space.component_of) n_components = std::max(n_components, c + 1);
    double spread = 0.0;
    for (int c = 0; c < n_components; ++c) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int q = 0; q < model.space.size(); ++q)
        if (model.space.component_of[q] == c) {
          lo = std::min(lo, cfg.f[q]);
          hi = std::max(hi, cfg.f[q]);
        }
      if (hi >= lo) spread = std::max(spread, hi - lo);
    }
    report.add_condition("f_constant_on_components", spread <= tol, spread);
  } else {
    report.add_condition("f_constant_on_components", false, 0.0,
                         "g is not a configuration function");
  }
}

ConservationCheck check_conservation_conditions(const Matrix& g,
                                                const Model& model,
                                                const PathEnsemble& ensemble,
                                                const Vector& psi0,
                                                int t_samples) {
  const ConfigFunctionResult cfg = extract_config_function(g, model.pvm);
  if (!cfg.ok)
    throw std::invalid_argument(
        "check_conservation_conditions: g is not a configuration function");

  ConservationCheck result;
  for (std::size_t p = 0; p < ensemble.paths.size(); ++p) {
    const double f0 = cfg.f[ensemble.paths[p].initial_config];
    for (const auto& e : ensemble.paths[p].events)
      if (std::abs(cfg.f[e.to] - f0) > 1e-9) {
        result.all_paths_constant = false;
        result.violating_path = static_cast<int>(p);
        break;
      }
    if (!result.all_paths_constant) break;
  }

  const Propagator prop(model.h_total, model.hbar);
  const double e0 = (psi0.adjoint() * g * psi0)(0, 0).real();
  for (int k = 1; k <= t_samples; ++k) {
    const double t = ensemble.horizon * k / t_samples;
    const Vector psi_t = prop.at(psi0, t);
    const double e_t = (psi_t.adjoint() * g * psi_t)(0, 0).real();
    result.expectation_drift = std::max(result.expectation_drift, std::abs(e_t - e0));
  }
  return result;
}

RateIdentityResult verify_rate_identity(const Vector& psi, const Matrix& g,
                                        const Model& model,
                                        const std::vector<double>& t_samples,
                                        double occ_floor) {
  const ConfigFunctionResult cfg = extract_config_function(g, model.pvm);
  if (!cfg.ok)
    throw std::invalid_argument(
        "verify_rate_identity: g is not a configuration function");
  const Mixture mix = build_mixture(psi, g);
  const Propagator prop(model.h_total, model.hbar);

  RateIdentityResult result;
  for (const double t : t_samples) {
    const Vector psi_t = prop.at(psi, t);
    for (const auto& member : mix.members) {
      const Vector member_t = prop.at(member.state, t);

      // Projecting the propagated state must equal propagating the projected
      // one; both are computed without any phase freedom.
      Vector projected = Vector::Zero(psi.size());
      for (int i = 0; i < model.dim(); ++i)
        if (std::abs(cfg.f[model.pvm.cell_of[i]] - member.eigenvalue) < 1e-6)
          projected[i] = psi_t[i];
      const double pnorm = projected.norm();
      if (pnorm > 1e-12)
        result.max_projection_commutation =
            std::max(result.max_projection_commutation,
                     (projected / pnorm - member_t).norm());

      for (int q = 0; q < model.pvm.num_configs; ++q) {
        if (std::abs(cfg.f[q] - member.eigenvalue) > 1e-6) continue;
        if (cell_probability(model.pvm, q, psi_t) < occ_floor) continue;
        if (cell_probability(model.pvm, q, member_t) < occ_floor) continue;
        const RateMap ra = jump_rates(psi_t, q, model);
        const RateMap rb = jump_rates(member_t, q, model);
        for (int dest = 0; dest < model.pvm.num_configs; ++dest) {
          const auto ia = ra.rates.find(dest);
          const auto ib = rb.rates.find(dest);
          const double va = ia == ra.rates.end() ? 0.0 : ia->second;
          const double vb = ib == rb.rates.end() ? 0.0 : ib->second;
          result.max_rate_deviation =
              std::max(result.max_rate_deviation, std::abs(va - vb));
        }
      }
    }
  }
  return result;
}

ConditionalDistributionResult verify_conditional_distribution(
    const Vector& psi, const Matrix& g, const Model& model, double t) {
  const ConfigFunctionResult cfg = extract_config_function(g, model.pvm);
  if (!cfg.ok)
    throw std::invalid_argument(
        "verify_conditional_distribution: g is not a configuration function");
  const Propagator prop(model.h_total, model.hbar);
  const Vector psi_t = prop.at(psi, t);
  const EigDecomposition eig = eigendecompose(g);

  ConditionalDistributionResult result;
  for (std::size_t k = 0; k < eig.eigenvalues.size(); ++k) {
    const double nu = eig.eigenvalues[k];
    const Vector component = eig.projectors[k] * psi_t;
    const double wsq = component.squaredNorm();
    if (wsq <= kSectorWeightFloor) {
      result.skipped_sectors.push_back(nu);
      continue;
    }
    const Vector member = component / std::sqrt(wsq);
    for (int q = 0; q < model.pvm.num_configs; ++q) {
      const double lhs = cell_probability(model.pvm, q, member);
      const double indicator = std::abs(cfg.f[q] - nu) < 1e-6 ? 1.0 : 0.0;
      const double rhs = indicator * cell_probability(model.pvm, q, psi_t) / wsq;
      result.max_deviation = std::max(result.max_deviation, std::abs(lhs - rhs));
    }
  }
  return result;
}

namespace {

// Histogram of config occupancy at a fixed step.
std::vector<double> occupancy_counts(const PathEnsemble& ensemble, double t,
                                     int num_configs) {
  std::vector<double> counts(num_configs, 0.0);
  for (const auto& p : ensemble.paths) counts[p.config_at(t + 1e-12)] += 1.0;
  return counts;
}

std::vector<double> jump_count_counts(const PathEnsemble& ensemble, int cap) {
  std::vector<double> counts(cap + 1, 0.0);
  for (const auto& p : ensemble.paths)
    counts[std::min(p.jump_count(), cap)] += 1.0;
  return counts;
}

std::vector<double> first_jump_counts(const PathEnsemble& ensemble, int bins) {
  std::vector<double> counts(bins + 1, 0.0);  // last cell: no jump
  for (const auto& p : ensemble.paths) {
    const double t = p.first_jump_time();
    if (!std::isfinite(t))
      counts[bins] += 1.0;
    else
      counts[std::min(static_cast<int>(t / p.horizon * bins), bins - 1)] += 1.0;
  }
  return counts;
}

std::vector<double> sector_counts(const PathEnsemble& ensemble,
                                  const std::vector<double>& values) {
  std::vector<double> counts(values.size(), 0.0);
  for (const auto& p : ensemble.paths) {
    if (!p.sector_value) continue;
    for (std::size_t k = 0; k < values.size(); ++k)
      if (std::abs(values[k] - *p.sector_value) < 1e-6) {
        counts[k] += 1.0;
        break;
      }
  }
  return counts;
}

}  // namespace

SuperselectionReport strong_superselection_test(const Model& model,
                                                const Matrix& g,
                                                const Vector& psi,
                                                const StrongTestParams& params,
                                                PathEnsemble* out_psi,
                                                PathEnsemble* out_mixture) {
  SuperselectionReport report;
  report.alpha = params.alpha;
  check_strong_conditions(g, model, 1e-12, report);
  const ConfigFunctionResult cfg = extract_config_function(g, model.pvm);

  Mixture mix = build_mixture(psi, g);
  if (params.perturb_weights && mix.members.size() >= 2) {
    const double delta = *params.perturb_weights;
    mix.members[0].weight = std::clamp(mix.members[0].weight + delta, 0.0, 1.0);
    double rest = 0.0;
    for (std::size_t k = 1; k < mix.members.size(); ++k) rest += mix.members[k].weight;
    const double scale = rest > 0.0 ? (1.0 - mix.members[0].weight) / rest : 0.0;
    for (std::size_t k = 1; k < mix.members.size(); ++k) mix.members[k].weight *= scale;
  }

  const std::vector<double>* sector_f = cfg.ok ? &cfg.f : nullptr;

  // Ensemble A from psi.
  PathEnsemble a = sample_ensemble(model, psi, params.n, params.horizon,
                                   params.dt, params.seed, sector_f);
  a.psi_id = "psi";

  // Ensemble B: draw a sector per weight, then a path from that component.
  std::vector<JumpKernel> kernels;
  kernels.reserve(mix.members.size());
  std::vector<double> weights;
  for (const auto& m : mix.members) {
    kernels.emplace_back(model, m.state, params.horizon, params.dt);
    weights.push_back(m.weight);
  }
  const double weight_total =
      std::accumulate(weights.begin(), weights.end(), 0.0);
  PathEnsemble b;
  b.horizon = params.horizon;
  b.dt = params.dt;
  b.seed = params.seed ^ 0x5ec7042ULL;  // the substream base actually used
  b.model_id = model.name;
  b.psi_id = "mixture";
  b.paths.resize(params.n);
  std::exception_ptr first_error = nullptr;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < params.n; ++i) {
    try {
      Xoshiro256pp rng(derive_seed(b.seed, static_cast<std::uint64_t>(i)));
      const int member = rng.categorical(weights, weight_total);
      b.paths[i] = sample_path(kernels[member], -1, rng, sector_f);
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  // Path features, Bonferroni-corrected.
  std::vector<double> times = params.occupancy_times;
  if (times.empty())
    times = {params.horizon / 3.0, 2.0 * params.horizon / 3.0, params.horizon};
  std::vector<std::pair<std::string, std::pair<std::vector<double>, std::vector<double>>>>
      histograms;
  for (const double t : times)
    histograms.push_back({"occupancy@t=" + std::to_string(t),
                          {occupancy_counts(a, t, model.pvm.num_configs),
                           occupancy_counts(b, t, model.pvm.num_configs)}});
  histograms.push_back({"jump_count",
                        {jump_count_counts(a, params.jump_count_cap),
                         jump_count_counts(b, params.jump_count_cap)}});
  histograms.push_back({"first_jump_time",
                        {first_jump_counts(a, params.first_jump_bins),
                         first_jump_counts(b, params.first_jump_bins)}});
  if (cfg.ok) {
    std::vector<double> values;
    for (const auto& m : mix.members) values.push_back(m.eigenvalue);
    histograms.push_back(
        {"sector_value", {sector_counts(a, values), sector_counts(b, values)}});
  }

  const double level = params.alpha / histograms.size();
  for (const auto& [name, pair] : histograms) {
    const auto gof = stats::chi2_two_sample(pair.first, pair.second);
    FeatureResult fr;
    fr.feature = name;
    fr.test = "chi2_two_sample";
    fr.statistic = gof.statistic;
    fr.p_value = gof.p_value;
    fr.pass = gof.p_value >= level;
    fr.n_a = params.n;
    fr.n_b = params.n;
    report.features.push_back(fr);
  }

  // Exact discretized path law whenever the enumeration guards permit.
  bool exact_law_ok = true;
  if (params.compare_exact_law && model.pvm.num_configs <= 8) {
    const double dt_law = params.horizon / params.exact_law_steps;
    PathLaw law_psi = exact_path_law(model, psi, params.horizon, dt_law);
    PathLaw law_mix;
    law_mix.steps = law_psi.steps;
    law_mix.num_configs = law_psi.num_configs;
    for (const auto& m : mix.members) {
      PathLaw member_law = exact_path_law(model, m.state, params.horizon, dt_law);
      law_mix.pruned_mass += m.weight * member_law.pruned_mass;
      for (const auto& [sk, p] : member_law.prob) law_mix.prob[sk] += m.weight * p;
    }
    const double dev = path_law_distance(law_psi, law_mix);
    report.metrics["exact_law_max_deviation"] = dev;
    report.metrics["exact_law_mass_psi"] = law_psi.total_mass();
    report.metrics["exact_law_mass_mixture"] = law_mix.total_mass();
    exact_law_ok = dev <= 1e-8;
  }

  const bool conditions_pass = [&] {
    for (const auto& c : report.conditions)
      if (!c.pass) return false;
    return true;
  }();
  if (!conditions_pass)
    report.verdict = Verdict::NeitherStrong;
  else if (report.all_features_pass() && exact_law_ok)
    report.verdict = Verdict::Strong;
  else
    report.verdict = Verdict::Inconclusive;

  if (out_psi) *out_psi = std::move(a);
  if (out_mixture) *out_mixture = std::move(b);
  return report;
}

WeakConfigCheck weak_config_distribution_check(
    const Vector& psi, const Matrix& g, const Model& model,
    const std::vector<double>& t_samples) {
  WeakConfigCheck result;
  for (int i = 0; i < model.dim(); ++i)
    for (int j = 0; j < model.dim(); ++j)
      if (model.pvm.cell_of[i] != model.pvm.cell_of[j])
        result.comm_pvm = std::max(result.comm_pvm, std::abs(g(i, j)));
  result.comm_h = commutator_norm(g, model.h_total);

  const Propagator prop(model.h_total, model.hbar);
  for (const double t : t_samples) {
    const Vector psi_t = prop.at(psi, t);
    const Matrix rho = mixture_density_matrix(psi_t, g);
    for (int q = 0; q < model.pvm.num_configs; ++q) {
      double trace = 0.0;
      for (int i = 0; i < model.dim(); ++i)
        if (model.pvm.cell_of[i] == q) trace += rho(i, i).real();
      result.max_deviation =
          std::max(result.max_deviation,
                   std::abs(trace - cell_probability(model.pvm, q, psi_t)));
    }
  }
  return result;
}

std::vector<DecoherencePoint> decoherence_convergence(
    const Vector& psi, const Matrix& g, const std::vector<double>& s_values,
    double* min_gap_out) {
  const EigDecomposition eig = eigendecompose(g);
  const double gap = eig.min_gap();
  if (min_gap_out) *min_gap_out = gap;

  std::vector<Vector> components;
  for (const auto& p : eig.projectors) components.push_back(p * psi);

  std::vector<DecoherencePoint> points;
  for (const double s : s_values) {
    Matrix delta = Matrix::Zero(psi.size(), psi.size());
    for (std::size_t a = 0; a < components.size(); ++a)
      for (std::size_t b = 0; b < components.size(); ++b) {
        if (a == b) continue;
        const double omega = (eig.eigenvalues[a] - eig.eigenvalues[b]) * s;
        const Complex kappa =
            (std::exp(Complex(0.0, omega)) - 1.0) / Complex(0.0, omega);
        delta += kappa * (components[a] * components[b].adjoint());
      }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(delta);
    const double distance =
        solver.eigenvalues().cwiseAbs().maxCoeff();
    points.push_back({s, distance, 2.0 / (gap * s)});
  }
  return points;
}

SubsystemCheckResult weak_superselection_subsystem_check(
    const Model& model, const Matrix& g_s, double tol,
    const SubsystemCheckParams& params) {
  if (!model.factorization)
    throw std::invalid_argument(
        "weak_superselection_subsystem_check: model declares no factorization");
  const auto& fact = *model.factorization;
  if (g_s.rows() != fact.dim_s)
    throw std::invalid_argument(
        "weak_superselection_subsystem_check: operator does not act on the "
        "system factor");

  SubsystemCheckResult result;
  result.comm_h_s = commutator_norm(g_s, fact.h_s);
  const Matrix identity_e = Matrix::Identity(fact.dim_e, fact.dim_e);
  const Matrix g_lifted = kron(g_s, identity_e);
  result.comm_h_se = commutator_norm(g_lifted, fact.h_se);
  result.conditions_pass = result.comm_h_s <= tol && result.comm_h_se <= tol;

  // Simulated measurement: start in exp(iGs) psi_S (x) phi_E, evolve, and
  // read outcome-region probabilities off the environment.
  Xoshiro256pp rng(params.seed);
  Vector psi_s(fact.dim_s), phi_e(fact.dim_e);
  for (int i = 0; i < fact.dim_s; ++i)
    psi_s[i] = Complex(rng.gaussian(), rng.gaussian());
  for (int i = 0; i < fact.dim_e; ++i)
    phi_e[i] = Complex(rng.gaussian(), rng.gaussian());
  psi_s.normalize();
  phi_e.normalize();

  const Propagator phase(g_s, 1.0);  // exp(iGs) = propagate by -s at hbar = 1
  const Propagator evolution(model.h_total, model.hbar);
  const int region_size = (fact.dim_e + params.regions - 1) / params.regions;

  for (const double t : params.t_samples) {
    std::vector<std::vector<double>> probs;  // per s: per region
    for (const double s : params.s_samples) {
      const Vector rotated = phase.at(psi_s, -s);
      Vector initial(fact.dim_s * fact.dim_e);
      for (int i = 0; i < fact.dim_s; ++i)
        for (int j = 0; j < fact.dim_e; ++j)
          initial[i * fact.dim_e + j] = rotated[i] * phi_e[j];
      const Vector evolved = evolution.at(initial, t);
      std::vector<double> regions(params.regions, 0.0);
      for (int i = 0; i < fact.dim_s; ++i)
        for (int j = 0; j < fact.dim_e; ++j)
          regions[std::min(j / region_size, params.regions - 1)] +=
              std::norm(evolved[i * fact.dim_e + j]);
      probs.push_back(std::move(regions));
    }
    for (int r = 0; r < params.regions; ++r) {
      double lo = probs[0][r], hi = probs[0][r];
      for (const auto& p : probs) {
        lo = std::min(lo, p[r]);
        hi = std::max(hi, p[r]);
      }
      result.max_prob_spread = std::max(result.max_prob_spread, hi - lo);
    }
  }
  return result;
}

}  // namespace bellsel

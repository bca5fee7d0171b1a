#include "bellsel/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bellsel {

namespace {

constexpr double kBlockZeroTol = 1e-14;

int checked_pow(int base, int exp, const char* what) {
  long long v = 1;
  for (int i = 0; i < exp; ++i) {
    v *= base;
    if (v > kDimCap) throw std::domain_error(std::string(what) + ": dimension cap exceeded");
  }
  return static_cast<int>(v);
}

// Union-find over configs for connected components of the jump graph.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

std::string occupation_string(const std::vector<int>& occ) {
  std::string s;
  for (int n : occ) s += (n <= 9) ? static_cast<char>('0' + n) : '+';
  return s;
}

}  // namespace

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

const Matrix& Model::observable(const std::string& name) const {
  auto it = named_observables.find(name);
  if (it == named_observables.end())
    throw std::domain_error("model '" + this->name + "' has no observable '" + name + "'");
  return it->second;
}

Model assemble_model(std::string name, ConfigurationSpace space, Pvm pvm,
                     const Matrix& h_total, double hbar) {
  const int dim = static_cast<int>(h_total.rows());
  if (dim != pvm.dim())
    throw std::domain_error("assemble_model: PVM/Hamiltonian dimension mismatch");
  if (dim > kDimCap) throw std::domain_error("assemble_model: dimension cap exceeded");
  if (pvm.num_configs != space.size())
    throw std::domain_error("assemble_model: PVM/config-space size mismatch");
  if (!is_hermitian(h_total))
    throw std::domain_error("assemble_model: non-Hermitian Hamiltonian");

  Model m;
  m.name = std::move(name);
  m.hbar = hbar;
  m.pvm = std::move(pvm);
  m.h_total = h_total;
  m.h_diag = Matrix::Zero(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      if (m.pvm.cell_of[i] == m.pvm.cell_of[j]) m.h_diag(i, j) = h_total(i, j);
  m.h_jump = h_total - m.h_diag;

  // Adjacency and components from the nonzero jump blocks.
  const int nq = m.pvm.num_configs;
  Eigen::MatrixXd block_max = Eigen::MatrixXd::Zero(nq, nq);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      const double v = std::abs(m.h_jump(i, j));
      if (v > block_max(m.pvm.cell_of[i], m.pvm.cell_of[j]))
        block_max(m.pvm.cell_of[i], m.pvm.cell_of[j]) = v;
    }
  UnionFind uf(nq);
  space.adjacency.clear();
  for (int q = 0; q < nq; ++q)
    for (int r = q + 1; r < nq; ++r)
      if (std::max(block_max(q, r), block_max(r, q)) > kBlockZeroTol) {
        space.adjacency.emplace_back(q, r);
        uf.unite(q, r);
      }
  space.component_of.assign(nq, -1);
  std::map<int, int> root_to_id;
  for (int q = 0; q < nq; ++q) {
    const int root = uf.find(q);
    auto [it, inserted] = root_to_id.try_emplace(root, static_cast<int>(root_to_id.size()));
    space.component_of[q] = it->second;
  }
  m.space = std::move(space);
  return m;
}

Model build_fermion_boson_model(const FockBasisSpec& spec) {
  const int L = spec.sites;
  if (L < 1) throw std::domain_error("fermion_boson: sites must be positive");
  if (spec.fermion_sectors.empty())
    throw std::domain_error("fermion_boson: empty fermion sector list");
  if (spec.max_total_bosons < 0)
    throw std::domain_error("fermion_boson: negative boson cap");
  if (spec.mass_fermion <= 0.0 || spec.mass_boson <= 0.0)
    throw std::domain_error("fermion_boson: masses must be positive");

  // Fermion occupations {0,1}^L with allowed total, ordered by bitmask.
  std::vector<std::vector<int>> fermions;
  for (int mask = 0; mask < (1 << L); ++mask) {
    const int count = std::popcount(static_cast<unsigned>(mask));
    if (std::find(spec.fermion_sectors.begin(), spec.fermion_sectors.end(), count) ==
        spec.fermion_sectors.end())
      continue;
    std::vector<int> occ(L);
    for (int x = 0; x < L; ++x) occ[x] = (mask >> x) & 1;
    fermions.push_back(std::move(occ));
  }
  if (fermions.empty())
    throw std::domain_error("fermion_boson: no fermion configuration matches the sector list");

  // Boson occupations with total <= cap, lexicographic.
  std::vector<std::vector<int>> bosons;
  std::vector<int> occ(L, 0);
  const auto enumerate = [&](auto&& self, int site, int used) -> void {
    if (site == L) {
      bosons.push_back(occ);
      return;
    }
    for (int n = 0; n + used <= spec.max_total_bosons; ++n) {
      occ[site] = n;
      self(self, site + 1, used + n);
    }
    occ[site] = 0;
  };
  enumerate(enumerate, 0, 0);

  const int nf = static_cast<int>(fermions.size());
  const int nb = static_cast<int>(bosons.size());
  const long long dim_ll = static_cast<long long>(nf) * nb;
  if (dim_ll > kDimCap) throw std::domain_error("fermion_boson: dimension cap exceeded");
  const int dim = static_cast<int>(dim_ll);

  ConfigurationSpace space;
  space.configs.reserve(dim);
  for (int fi = 0; fi < nf; ++fi)
    for (int bi = 0; bi < nb; ++bi) {
      Config c;
      c.label = "f=" + occupation_string(fermions[fi]) + " b=" + occupation_string(bosons[bi]);
      c.content = fermions[fi];
      c.content.insert(c.content.end(), bosons[bi].begin(), bosons[bi].end());
      space.configs.push_back(std::move(c));
    }
  Pvm pvm;
  pvm.num_configs = dim;
  pvm.cell_of.resize(dim);
  std::iota(pvm.cell_of.begin(), pvm.cell_of.end(), 0);

  const double tf = spec.hopping_fermion.value_or(spec.hbar * spec.hbar / (2.0 * spec.mass_fermion));
  const double tb = spec.hopping_boson.value_or(spec.hbar * spec.hbar / (2.0 * spec.mass_boson));
  const auto phi = [&](int distance) -> double {
    return distance < static_cast<int>(spec.coupling.size()) ? spec.coupling[distance] : 0.0;
  };
  const auto index_of = [&](int fi, int bi) { return fi * nb + bi; };

  Matrix h = Matrix::Zero(dim, dim);
  std::map<std::vector<int>, int> fermion_index, boson_index;
  for (int fi = 0; fi < nf; ++fi) fermion_index[fermions[fi]] = fi;
  for (int bi = 0; bi < nb; ++bi) boson_index[bosons[bi]] = bi;

  for (int fi = 0; fi < nf; ++fi) {
    const auto& f = fermions[fi];
    const int n_f = std::accumulate(f.begin(), f.end(), 0);
    for (int bi = 0; bi < nb; ++bi) {
      const auto& b = bosons[bi];
      const int n_b = std::accumulate(b.begin(), b.end(), 0);
      const int idx = index_of(fi, bi);

      // Discrete-Laplacian on-site energies.
      h(idx, idx) += 2.0 * tf * n_f + 2.0 * tb * n_b;

      // Fermion hops to the right (both matrix entries set per move). With
      // nearest-neighbor moves on an open chain no statistics sign arises.
      for (int x = 0; x + 1 < L; ++x) {
        if (f[x] == 1 && f[x + 1] == 0) {
          auto f2 = f;
          f2[x] = 0;
          f2[x + 1] = 1;
          const int idx2 = index_of(fermion_index.at(f2), bi);
          h(idx2, idx) += -tf;
          h(idx, idx2) += -tf;
        }
      }

      // Boson hops to the right.
      for (int x = 0; x + 1 < L; ++x) {
        if (b[x] >= 1) {
          auto b2 = b;
          b2[x] -= 1;
          b2[x + 1] += 1;
          const int idx2 = index_of(fi, boson_index.at(b2));
          const double amp = -tb * std::sqrt(static_cast<double>(b[x]) * (b[x + 1] + 1));
          h(idx2, idx) += amp;
          h(idx, idx2) += amp;
        }
      }

      // Emission n_f(x) phi(|x-y|) a_b^dag(y); absorption is the transpose.
      for (int y = 0; y < L; ++y) {
        if (n_b >= spec.max_total_bosons) break;
        double c = 0.0;
        for (int x = 0; x < L; ++x)
          if (f[x] == 1) c += phi(std::abs(x - y));
        if (c == 0.0) continue;
        auto b2 = b;
        b2[y] += 1;
        const int idx2 = index_of(fi, boson_index.at(b2));
        const double amp = c * std::sqrt(static_cast<double>(b[y] + 1));
        h(idx2, idx) += amp;
        h(idx, idx2) += amp;
      }
    }
  }

  std::ostringstream name;
  name << "fermion_boson(L=" << L << ",M=" << spec.max_total_bosons << ")";
  Model m = assemble_model(name.str(), std::move(space), std::move(pvm), h, spec.hbar);

  std::vector<double> f_number(dim), b_number(dim);
  for (int q = 0; q < dim; ++q) {
    const auto& content = m.space.configs[q].content;
    f_number[q] = std::accumulate(content.begin(), content.begin() + L, 0);
    b_number[q] = std::accumulate(content.begin() + L, content.end(), 0);
  }
  m.named_observables["fermion_number"] = build_operator_from_config_function(f_number, m.pvm);
  m.named_observables["boson_number"] = build_operator_from_config_function(b_number, m.pvm);
  return m;
}

Model build_two_component_model(int sites_per_component, int particles,
                                const std::vector<double>& potential,
                                double hopping, double hbar) {
  const int L = sites_per_component;
  if (L < 1) throw std::domain_error("two_component: sites_per_component must be positive");
  if (particles < 1) throw std::domain_error("two_component: particles must be positive");
  const int total_sites = 2 * L;
  if (!potential.empty() && static_cast<int>(potential.size()) != total_sites)
    throw std::domain_error("two_component: potential must list all 2L sites");
  const int dim = checked_pow(total_sites, particles, "two_component");

  const auto decode = [&](int idx) {
    std::vector<int> xs(particles);
    for (int i = particles - 1; i >= 0; --i) {
      xs[i] = idx % total_sites;
      idx /= total_sites;
    }
    return xs;
  };
  const auto encode = [&](const std::vector<int>& xs) {
    int idx = 0;
    for (int x : xs) idx = idx * total_sites + x;
    return idx;
  };
  const auto v_at = [&](int x) { return potential.empty() ? 0.0 : potential[x]; };

  ConfigurationSpace space;
  space.configs.resize(dim);
  for (int idx = 0; idx < dim; ++idx) {
    auto xs = decode(idx);
    std::string label = "x=(";
    for (std::size_t i = 0; i < xs.size(); ++i)
      label += (i ? "," : "") + std::to_string(xs[i]);
    label += ")";
    space.configs[idx] = {label, xs};
  }
  Pvm pvm;
  pvm.num_configs = dim;
  pvm.cell_of.resize(dim);
  std::iota(pvm.cell_of.begin(), pvm.cell_of.end(), 0);

  Matrix h = Matrix::Zero(dim, dim);
  for (int idx = 0; idx < dim; ++idx) {
    const auto xs = decode(idx);
    double diag = 2.0 * hopping * particles;
    for (int x : xs) diag += v_at(x);
    h(idx, idx) += diag;
    for (int i = 0; i < particles; ++i) {
      const int x = xs[i];
      // Right move, forbidden across the component boundary at site L.
      if (x + 1 < total_sites && x + 1 != L) {
        auto xs2 = xs;
        xs2[i] = x + 1;
        const int idx2 = encode(xs2);
        h(idx2, idx) += -hopping;
        h(idx, idx2) += -hopping;
      }
    }
  }

  std::ostringstream name;
  name << "two_component(L=" << L << ",N=" << particles << ")";
  Model m = assemble_model(name.str(), std::move(space), std::move(pvm), h, hbar);

  std::vector<double> component_index(dim);
  for (int q = 0; q < dim; ++q)
    component_index[q] = m.space.configs[q].content[0] < L ? 1.0 : 2.0;
  m.named_observables["component_index"] =
      build_operator_from_config_function(component_index, m.pvm);
  return m;
}

Model build_spin_lattice_model(const SpinLatticeSpec& spec) {
  const int L = spec.sites;
  const int N = spec.particles;
  const int d = spec.spin_dim;
  if (L < 1 || N < 1) throw std::domain_error("spin_lattice: bad geometry");
  if (d < 2) throw std::domain_error("spin_lattice: spin_dim must be at least 2");
  if (!spec.potential.empty() && static_cast<int>(spec.potential.size()) != L)
    throw std::domain_error("spin_lattice: potential must list all sites");
  if (spec.field && static_cast<int>(spec.field->size()) != L)
    throw std::domain_error("spin_lattice: field must list all sites");

  const int n_pos = checked_pow(L, N, "spin_lattice");
  const int n_rest_spin = checked_pow(d, N - 1, "spin_lattice");
  const int dim_e = n_pos * n_rest_spin;
  const long long dim_ll = static_cast<long long>(d) * dim_e;
  if (dim_ll > kDimCap) throw std::domain_error("spin_lattice: dimension cap exceeded");
  const int dim = static_cast<int>(dim_ll);

  const auto decode_pos = [&](int p) {
    std::vector<int> xs(N);
    for (int i = N - 1; i >= 0; --i) {
      xs[i] = p % L;
      p /= L;
    }
    return xs;
  };
  const auto encode_pos = [&](const std::vector<int>& xs) {
    int p = 0;
    for (int x : xs) p = p * L + x;
    return p;
  };
  const auto decode_rest = [&](int r) {
    std::vector<int> ss(N - 1);
    for (int i = N - 2; i >= 0; --i) {
      ss[i] = r % d;
      r /= d;
    }
    return ss;
  };
  const auto v_at = [&](int x) { return spec.potential.empty() ? 0.0 : spec.potential[x]; };

  // Spin-z eigenvalue of level s: Pauli values for d = 2, (d-1)/2 - s else.
  const auto sz = [&](int s) {
    return d == 2 ? (s == 0 ? 1.0 : -1.0) : 0.5 * (d - 1) - s;
  };

  Matrix h_e = Matrix::Zero(dim_e, dim_e);
  for (int p = 0; p < n_pos; ++p) {
    const auto xs = decode_pos(p);
    for (int r = 0; r < n_rest_spin; ++r) {
      const int e = p * n_rest_spin + r;
      double diag = 2.0 * spec.hopping * N;
      for (int x : xs) diag += v_at(x);
      if (spec.field) {
        const auto ss = decode_rest(r);
        for (int j = 0; j < N - 1; ++j) diag += (*spec.field)[xs[j + 1]] * sz(ss[j]);
      }
      h_e(e, e) += diag;
      for (int i = 0; i < N; ++i) {
        if (xs[i] + 1 < L) {
          auto xs2 = xs;
          xs2[i] += 1;
          const int e2 = encode_pos(xs2) * n_rest_spin + r;
          h_e(e2, e) += -spec.hopping;
          h_e(e, e2) += -spec.hopping;
        }
      }
    }
  }

  Matrix h_s = Matrix::Zero(d, d);
  Matrix h_se = Matrix::Zero(dim, dim);
  if (spec.field) {
    for (int s = 0; s < d; ++s)
      for (int e = 0; e < dim_e; ++e) {
        const int x1 = decode_pos(e / n_rest_spin)[0];
        h_se(s * dim_e + e, s * dim_e + e) = (*spec.field)[x1] * sz(s);
      }
  }

  const Matrix identity_e = Matrix::Identity(dim_e, dim_e);
  const Matrix identity_s = Matrix::Identity(d, d);
  Matrix h = kron(h_s, identity_e) + kron(identity_s, h_e) + h_se;

  ConfigurationSpace space;
  space.configs.resize(n_pos);
  for (int p = 0; p < n_pos; ++p) {
    auto xs = decode_pos(p);
    std::string label = "x=(";
    for (std::size_t i = 0; i < xs.size(); ++i)
      label += (i ? "," : "") + std::to_string(xs[i]);
    label += ")";
    space.configs[p] = {label, xs};
  }
  Pvm pvm;
  pvm.num_configs = n_pos;
  pvm.cell_of.resize(dim);
  for (int idx = 0; idx < dim; ++idx) pvm.cell_of[idx] = (idx % dim_e) / n_rest_spin;

  std::ostringstream name;
  name << "spin_lattice(L=" << L << ",N=" << N << ",d=" << d
       << (spec.field ? ",z-field" : "") << ")";
  Model m = assemble_model(name.str(), std::move(space), std::move(pvm), h, spec.hbar);

  Model::Factorization fact;
  fact.dim_s = d;
  fact.dim_e = dim_e;
  fact.h_s = h_s;
  fact.h_e = h_e;
  fact.h_se = h_se;
  m.factorization = std::move(fact);

  if (d == 2) {
    Matrix sx(2, 2), sy(2, 2), szp(2, 2);
    sx << 0, 1, 1, 0;
    sy << 0, Complex(0, -1), Complex(0, 1), 0;
    szp << 1, 0, 0, -1;
    m.named_observables["sigma_x"] = kron(sx, identity_e);
    m.named_observables["sigma_y"] = kron(sy, identity_e);
    m.named_observables["sigma_z"] = kron(szp, identity_e);
  }
  Matrix swap = Matrix::Zero(d, d);
  for (int s = 0; s < d; ++s) swap(d - 1 - s, s) = 1.0;
  m.named_observables["spin_swap"] = kron(swap, identity_e);
  return m;
}

namespace {

const nlohmann::json& require_key(const nlohmann::json& j, const std::string& key,
                                  const std::string& path) {
  if (!j.contains(key)) throw ConfigError("missing required field '" + path + "'");
  return j.at(key);
}

int as_int(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError("field '" + path + "' must be an integer");
  return j.get<int>();
}

double as_double(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError("field '" + path + "' must be a number");
  return j.get<double>();
}

std::vector<double> as_double_array(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError("field '" + path + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(as_double(e, path));
  return out;
}

std::vector<int> as_int_array(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError("field '" + path + "' must be an array of integers");
  std::vector<int> out;
  for (const auto& e : j) out.push_back(as_int(e, path));
  return out;
}

}  // namespace

Model load_model_from_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("model config must be an object");
  const std::string builder = [&] {
    const auto& b = require_key(doc, "builder", "builder");
    if (!b.is_string()) throw ConfigError("field 'builder' must be a string");
    return b.get<std::string>();
  }();
  const double hbar = doc.contains("hbar") ? as_double(doc.at("hbar"), "hbar") : 1.0;
  const nlohmann::json params =
      doc.contains("params") ? doc.at("params") : nlohmann::json::object();
  if (!params.is_object()) throw ConfigError("field 'params' must be an object");

  if (builder == "fermion_boson") {
    FockBasisSpec spec;
    spec.hbar = hbar;
    spec.sites = as_int(require_key(params, "sites", "params.sites"), "params.sites");
    spec.fermion_sectors = as_int_array(
        require_key(params, "fermion_sectors", "params.fermion_sectors"),
        "params.fermion_sectors");
    spec.max_total_bosons =
        as_int(require_key(params, "max_total_bosons", "params.max_total_bosons"),
               "params.max_total_bosons");
    if (params.contains("mass_fermion"))
      spec.mass_fermion = as_double(params.at("mass_fermion"), "params.mass_fermion");
    if (params.contains("mass_boson"))
      spec.mass_boson = as_double(params.at("mass_boson"), "params.mass_boson");
    if (params.contains("coupling"))
      spec.coupling = as_double_array(params.at("coupling"), "params.coupling");
    if (params.contains("hopping_fermion"))
      spec.hopping_fermion = as_double(params.at("hopping_fermion"), "params.hopping_fermion");
    if (params.contains("hopping_boson"))
      spec.hopping_boson = as_double(params.at("hopping_boson"), "params.hopping_boson");
    return build_fermion_boson_model(spec);
  }
  if (builder == "two_component") {
    const int sites = as_int(
        require_key(params, "sites_per_component", "params.sites_per_component"),
        "params.sites_per_component");
    const int particles =
        params.contains("particles") ? as_int(params.at("particles"), "params.particles") : 1;
    std::vector<double> potential;
    if (params.contains("potential"))
      potential = as_double_array(params.at("potential"), "params.potential");
    const double hopping =
        params.contains("hopping") ? as_double(params.at("hopping"), "params.hopping") : 1.0;
    return build_two_component_model(sites, particles, potential, hopping, hbar);
  }
  if (builder == "spin_lattice") {
    SpinLatticeSpec spec;
    spec.hbar = hbar;
    spec.sites = as_int(require_key(params, "sites", "params.sites"), "params.sites");
    if (params.contains("particles"))
      spec.particles = as_int(params.at("particles"), "params.particles");
    if (params.contains("spin_dim"))
      spec.spin_dim = as_int(params.at("spin_dim"), "params.spin_dim");
    if (params.contains("hopping"))
      spec.hopping = as_double(params.at("hopping"), "params.hopping");
    if (params.contains("potential"))
      spec.potential = as_double_array(params.at("potential"), "params.potential");
    if (params.contains("field"))
      spec.field = as_double_array(params.at("field"), "params.field");
    return build_spin_lattice_model(spec);
  }
  throw ConfigError("unknown builder '" + builder + "'");
}

Model load_model_from_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("model config parse error: ") + e.what());
  }
  return load_model_from_config(doc);
}

}  // namespace bellsel

// Benchmark comparing the OpenMP ensemble kernels against their serial
// reference implementations. The two must produce identical output; the
// benchmark verifies that while timing them.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bellsel/belljump.hpp"
#include "bellsel/continuum.hpp"
#include "bellsel/grw.hpp"
#include "bellsel/scenarios.hpp"

namespace {

double time_ms(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void report(const std::string& name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-28s serial %9.1f ms   parallel %9.1f ms   speedup %5.2fx   %s\n",
              name.c_str(), serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "outputs identical" : "OUTPUTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  const int scale = argc > 1 ? std::atoi(argv[1]) : 1;
  const int n = 4000 * scale;
#ifdef _OPENMP
  std::printf("threads: %d (set OMP_NUM_THREADS to change)\n",
              omp_get_max_threads());
#else
  std::printf("built without OpenMP; both columns run serially\n");
#endif

  {
    bellsel::FockBasisSpec spec;
    spec.sites = 3;
    spec.fermion_sectors = {1, 2};
    spec.max_total_bosons = 2;
    spec.coupling = {0.8, 0.3, 0.1};
    const bellsel::Model model = build_fermion_boson_model(spec);
    bellsel::Xoshiro256pp rng(2026);
    bellsel::Vector psi(model.dim());
    for (int i = 0; i < model.dim(); ++i)
      psi[i] = bellsel::Complex(rng.gaussian(), rng.gaussian());
    psi.normalize();

    bellsel::PathEnsemble serial, parallel;
    const double ts = time_ms([&] {
      serial = bellsel::sample_ensemble_serial(model, psi, n, 0.5, 0.0025, 7);
    });
    const double tp = time_ms([&] {
      parallel = bellsel::sample_ensemble(model, psi, n, 0.5, 0.0025, 7);
    });
    bool identical = serial.paths.size() == parallel.paths.size();
    for (std::size_t i = 0; identical && i < serial.paths.size(); ++i)
      identical = serial.paths[i] == parallel.paths[i];
    report("bell jump ensemble (dim 60)", ts, tp, identical);
  }

  {
    bellsel::FockBasisSpec spec;
    spec.sites = 2;
    spec.fermion_sectors = {1, 2};
    spec.max_total_bosons = 1;
    spec.coupling = {0.9, 0.35};
    const bellsel::Model model = build_fermion_boson_model(spec);
    bellsel::Xoshiro256pp rng(4);
    bellsel::Vector psi(model.dim());
    for (int i = 0; i < model.dim(); ++i)
      psi[i] = bellsel::Complex(rng.gaussian(), rng.gaussian());
    psi.normalize();
    std::vector<bellsel::Matrix> ops;
    std::vector<std::string> labels;
    for (int x = 0; x < model.dim(); ++x) {
      bellsel::Matrix op = bellsel::Matrix::Zero(model.dim(), model.dim());
      op(x, x) = 0.8;
      ops.push_back(op);
      labels.push_back("x" + std::to_string(x));
    }
    const auto lam = bellsel::FlashRateFamily::build(labels, ops);

    std::vector<bellsel::FlashHistory> serial, parallel;
    const double ts = time_ms([&] {
      serial = bellsel::sample_flash_ensemble_serial(psi, model.h_total, lam,
                                                     1.0, 0.002, n, 11);
    });
    const double tp = time_ms([&] {
      parallel =
          bellsel::sample_flash_ensemble(psi, model.h_total, lam, 1.0, 0.002, n, 11);
    });
    bool identical = serial.size() == parallel.size();
    for (std::size_t i = 0; identical && i < serial.size(); ++i) {
      identical = serial[i].flashes.size() == parallel[i].flashes.size();
      for (std::size_t k = 0; identical && k < serial[i].flashes.size(); ++k)
        identical = serial[i].flashes[k].time == parallel[i].flashes[k].time &&
                    serial[i].flashes[k].location == parallel[i].flashes[k].location;
    }
    report("grw flash ensemble (dim 9)", ts, tp, identical);
  }

  {
    bellsel::ContinuumModel model;
    model.grid = {-16.0, 32.0 / 256, 256};
    bellsel::GridWavefunction psi;
    psi.grid = model.grid;
    psi.spin_dim = 1;
    psi.comps.resize(1, model.grid.n);
    for (int i = 0; i < model.grid.n; ++i) {
      const double x = model.grid.x(i);
      psi.comps(0, i) = std::exp(bellsel::Complex(-(x + 4.0) * (x + 4.0) / 4.0, x));
    }
    psi.normalize();
    const int steps = 500;
    const auto fields = bellsel::evolve_fields(model, psi, steps, 0.004);

    std::vector<bellsel::Trajectory> serial, parallel;
    const double ts = time_ms([&] {
      serial = bellsel::integrate_ensemble_serial(
          fields.velocities, fields.densities.front(), model.grid, 0.004,
          model.boundary, n, 3);
    });
    const double tp = time_ms([&] {
      parallel = bellsel::integrate_ensemble(fields.velocities,
                                             fields.densities.front(), model.grid,
                                             0.004, model.boundary, n, 3);
    });
    bool identical = serial.size() == parallel.size();
    for (std::size_t i = 0; identical && i < serial.size(); ++i)
      identical = serial[i].positions == parallel[i].positions &&
                  serial[i].aborted == parallel[i].aborted;
    report("continuum trajectories (256)", ts, tp, identical);
  }
  return 0;
}

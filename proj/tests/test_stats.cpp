#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bellsel/rng.hpp"
#include "bellsel/stats.hpp"

using namespace bellsel;
namespace st = bellsel::stats;

// Reference values computed independently with scipy.stats / scipy.special.
TEST_CASE("chi2 survival function against reference values") {
  CHECK(st::chi2_sf(1.0, 1) == doctest::Approx(0.317310507862911).epsilon(1e-12));
  CHECK(st::chi2_sf(2.706, 1) == doctest::Approx(0.0999713781252588).epsilon(1e-12));
  CHECK(st::chi2_sf(4.605, 2) == doctest::Approx(0.100008509661456).epsilon(1e-12));
  CHECK(st::chi2_sf(10.0, 4) == doctest::Approx(0.0404276819945128).epsilon(1e-12));
  CHECK(st::chi2_sf(23.2093, 10) == doctest::Approx(0.00999983163961215).epsilon(1e-12));
  CHECK(st::chi2_sf(0.5, 3) == doctest::Approx(0.918891411654676).epsilon(1e-12));
}

TEST_CASE("regularized incomplete gamma against reference values") {
  CHECK(st::gamma_p(0.5, 0.5) == doctest::Approx(0.682689492137086).epsilon(1e-12));
  CHECK(st::gamma_p(2.5, 1.0) == doctest::Approx(0.15085496391539).epsilon(1e-12));
  CHECK(st::gamma_p(10.0, 12.0) == doctest::Approx(0.757607838329488).epsilon(1e-12));
  for (double a : {0.5, 1.0, 3.7, 12.0})
    for (double x : {0.1, 1.0, 5.0, 20.0})
      CHECK(st::gamma_p(a, x) + st::gamma_q(a, x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Kolmogorov survival against reference values") {
  CHECK(st::kolmogorov_q(0.5) == doctest::Approx(0.963945243664875).epsilon(1e-10));
  CHECK(st::kolmogorov_q(1.0) == doctest::Approx(0.269999671677355).epsilon(1e-10));
  CHECK(st::kolmogorov_q(1.36) == doctest::Approx(0.0494858767553779).epsilon(1e-10));
  CHECK(st::kolmogorov_q(2.0) == doctest::Approx(0.000670925255779695).epsilon(1e-10));
}

TEST_CASE("two-sample chi-squared accepts identical distributions") {
  Xoshiro256pp rng(42);
  const std::vector<double> probs = {0.5, 0.3, 0.15, 0.05};
  int rejects = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(4, 0.0), b(4, 0.0);
    for (int i = 0; i < 2000; ++i) {
      a[rng.categorical(const_cast<std::vector<double>&>(probs), 1.0)] += 1;
      b[rng.categorical(const_cast<std::vector<double>&>(probs), 1.0)] += 1;
    }
    if (st::chi2_two_sample(a, b).p_value < 0.01) ++rejects;
  }
  CHECK(rejects <= 3);  // roughly 50 * 0.01 expected
}

TEST_CASE("two-sample chi-squared rejects a shifted distribution") {
  Xoshiro256pp rng(7);
  std::vector<double> pa = {0.5, 0.3, 0.2}, pb = {0.3, 0.5, 0.2};
  std::vector<double> a(3, 0.0), b(3, 0.0);
  for (int i = 0; i < 5000; ++i) {
    a[rng.categorical(pa, 1.0)] += 1;
    b[rng.categorical(pb, 1.0)] += 1;
  }
  CHECK(st::chi2_two_sample(a, b).p_value < 1e-6);
}

TEST_CASE("one-sample KS against the true uniform cdf") {
  Xoshiro256pp rng(11);
  std::vector<double> samples(4000);
  for (auto& s : samples) s = rng.uniform();
  const auto r = st::ks_one_sample(samples, [](double x) { return x; });
  CHECK(r.p_value > 0.01);

  // Against the wrong cdf it must reject hard.
  const auto wrong = st::ks_one_sample(samples, [](double x) { return x * x; });
  CHECK(wrong.p_value < 1e-10);
}

TEST_CASE("two-sample KS on equal and unequal samples") {
  Xoshiro256pp rng(13);
  std::vector<double> a(3000), b(3000), c(3000);
  for (auto& s : a) s = rng.gaussian();
  for (auto& s : b) s = rng.gaussian();
  for (auto& s : c) s = rng.gaussian() + 0.25;
  CHECK(st::ks_two_sample(a, b).p_value > 0.01);
  CHECK(st::ks_two_sample(a, c).p_value < 1e-8);
}

TEST_CASE("total variation") {
  CHECK(st::total_variation({0.5, 0.5}, {0.5, 0.5}) == doctest::Approx(0.0));
  CHECK(st::total_variation({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0));
  CHECK(st::total_variation({0.6, 0.4}, {0.4, 0.6}) == doctest::Approx(0.2));
}

TEST_CASE("chi-squared goodness of fit calibration") {
  Xoshiro256pp rng(3);
  std::vector<double> probs = {0.4, 0.3, 0.2, 0.1};
  std::vector<double> counts(4, 0.0);
  for (int i = 0; i < 10000; ++i) counts[rng.categorical(probs, 1.0)] += 1;
  CHECK(st::chi2_gof(counts, probs).p_value > 0.01);
  // Wrong expectation must reject.
  std::vector<double> wrong = {0.1, 0.2, 0.3, 0.4};
  CHECK(st::chi2_gof(counts, wrong).p_value < 1e-12);
}

#include "bellsel/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bellsel::stats {

namespace {

// Series expansion of P(a,x), converges fast for x < a+1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double term = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a,x), converges fast for x > a+1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Pool cells so each expected count reaches the floor; returns index ranges.
std::vector<std::pair<int, int>> merge_plan(const std::vector<double>& expected,
                                            double min_expected) {
  std::vector<std::pair<int, int>> ranges;
  const int n = static_cast<int>(expected.size());
  int start = 0;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += expected[i];
    if (acc >= min_expected) {
      ranges.emplace_back(start, i);
      start = i + 1;
      acc = 0.0;
    }
  }
  if (start < n) {
    if (ranges.empty()) {
      ranges.emplace_back(start, n - 1);
    } else {
      ranges.back().second = n - 1;  // fold the tail into the last cell
    }
  }
  return ranges;
}

}  // namespace

double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::domain_error("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  return (x < a + 1.0) ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::domain_error("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  return (x < a + 1.0) ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

double chi2_sf(double x, double k) { return gamma_q(0.5 * k, 0.5 * x); }

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  const double a = -2.0 * lambda * lambda;
  double sum = 0.0;
  double sign = 1.0;
  double prev = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = sign * 2.0 * std::exp(a * j * j);
    sum += term;
    if (std::fabs(term) <= 1e-12 * std::fabs(prev) || std::fabs(term) < 1e-300)
      return std::clamp(sum, 0.0, 1.0);
    prev = term;
    sign = -sign;
  }
  return std::clamp(sum, 0.0, 1.0);
}

GofResult chi2_gof(const std::vector<double>& counts,
                   const std::vector<double>& expected_probs,
                   double min_expected) {
  if (counts.size() != expected_probs.size())
    throw std::domain_error("chi2_gof: size mismatch");
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> expected(expected_probs.size());
  for (std::size_t i = 0; i < expected.size(); ++i)
    expected[i] = expected_probs[i] * n;

  const auto ranges = merge_plan(expected, min_expected);
  GofResult r;
  r.dof = static_cast<int>(ranges.size()) - 1;
  if (r.dof < 1) return r;  // degenerate: single cell, nothing to test
  for (const auto& [lo, hi] : ranges) {
    double obs = 0.0, exp = 0.0;
    for (int i = lo; i <= hi; ++i) {
      obs += counts[i];
      exp += expected[i];
    }
    if (exp > 0.0) r.statistic += (obs - exp) * (obs - exp) / exp;
  }
  r.p_value = chi2_sf(r.statistic, r.dof);
  return r;
}

GofResult chi2_two_sample(const std::vector<double>& counts_a,
                          const std::vector<double>& counts_b,
                          double min_expected) {
  if (counts_a.size() != counts_b.size())
    throw std::domain_error("chi2_two_sample: size mismatch");
  const double na = std::accumulate(counts_a.begin(), counts_a.end(), 0.0);
  const double nb = std::accumulate(counts_b.begin(), counts_b.end(), 0.0);
  if (na <= 0.0 || nb <= 0.0)
    throw std::domain_error("chi2_two_sample: empty sample");

  // Merge on the pooled histogram so both samples use the same cells.
  std::vector<double> pooled(counts_a.size());
  for (std::size_t i = 0; i < pooled.size(); ++i)
    pooled[i] = counts_a[i] + counts_b[i];
  const auto ranges = merge_plan(pooled, 2.0 * min_expected);

  GofResult r;
  r.dof = static_cast<int>(ranges.size()) - 1;
  if (r.dof < 1) return r;
  const double sa = std::sqrt(nb / na), sb = std::sqrt(na / nb);
  for (const auto& [lo, hi] : ranges) {
    double a = 0.0, b = 0.0;
    for (int i = lo; i <= hi; ++i) {
      a += counts_a[i];
      b += counts_b[i];
    }
    if (a + b > 0.0) {
      const double d = sa * a - sb * b;
      r.statistic += d * d / (a + b);
    }
  }
  r.p_value = chi2_sf(r.statistic, r.dof);
  return r;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::domain_error("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double d = 0.0;
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() && ib < b.size()) {
    const double x = std::min(a[ia], b[ib]);
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    d = std::max(d, std::fabs(ia / na - ib / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  KsResult r;
  r.statistic = d;
  r.p_value = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
  return r;
}

KsResult ks_one_sample(std::vector<double> samples,
                       const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::domain_error("ks_one_sample: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::max(f - i / n, (i + 1) / n - f));
  }
  const double sn = std::sqrt(n);
  KsResult r;
  r.statistic = d;
  r.p_value = kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
  return r;
}

double total_variation(const std::vector<double>& p,
                       const std::vector<double>& q) {
  if (p.size() != q.size())
    throw std::domain_error("total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace bellsel::stats

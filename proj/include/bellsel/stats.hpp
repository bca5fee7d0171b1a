#pragma once

#include <functional>
#include <string>
#include <vector>

namespace bellsel::stats {

// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of the chi-squared distribution with k degrees of freedom.
double chi2_sf(double x, double k);

// Kolmogorov asymptotic survival function Q_KS(lambda).
double kolmogorov_q(double lambda);

struct GofResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int dof = 0;
};

// One-sample chi-squared goodness of fit of observed counts against expected
// probabilities. Cells are merged greedily until every expected count is at
// least `min_expected`.
GofResult chi2_gof(const std::vector<double>& counts,
                   const std::vector<double>& expected_probs,
                   double min_expected = 5.0);

// Two-sample chi-squared homogeneity test on matching histograms.
GofResult chi2_two_sample(const std::vector<double>& counts_a,
                          const std::vector<double>& counts_b,
                          double min_expected = 5.0);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test (asymptotic p-value).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// One-sample KS test against a cdf.
KsResult ks_one_sample(std::vector<double> samples,
                       const std::function<double(double)>& cdf);

// Total variation distance between two probability vectors (0.5 * L1).
double total_variation(const std::vector<double>& p,
                       const std::vector<double>& q);

}  // namespace bellsel::stats

#pragma once

#include "causalreg/data_model.hpp"

namespace causalreg {

struct TestStatistic {
  double statistic = 0.0;
  double p_value = 1.0;
  double df1 = 0.0;
  double df2 = 0.0;  // 0 for chi-square reference distributions
};

/// Chow test of equal regression coefficients across groups. Each group and
/// the pooled sample are regressed on X_S plus an intercept;
///   F = [(RSS_pool - sum RSS_e) / ((E-1) k)] / [sum RSS_e / (n - E k)],  k = |S|+1,
/// with the p-value from the upper tail of F((E-1)k, n-Ek).
TestStatistic chow_coefficient_test(const EnvDataset& data, const SubsetS& s,
                                    const EnvironmentPartition& part);

/// Equality of per-group residual variances. Two groups: variance ratio
/// F = s1^2 / s2^2 with a two-sided p-value. Three or more: Bartlett's
/// statistic against chi-square(E-1).
TestStatistic variance_equality_test(const EnvDataset& data, const SubsetS& s,
                                     const EnvironmentPartition& part);

enum class InvarianceMode { coefficients_and_variance, coefficients_only };

struct InvarianceTestResult {
  double p_value = 1.0;
  double statistic_coeff = 0.0;
  double statistic_var = 0.0;
  double p_coeff = 1.0;
  double p_var = 1.0;
  double alpha = 0.05;
  bool accepted = true;  // p_value > alpha

  bool accepted_at(double level) const { return p_value > level; }
};

/// Bonferroni combination min(1, 2 min(p_coeff, p_var)).
double combine_bonferroni(double p_coeff, double p_var);

/// Tests that Y | X_S has the same linear-Gaussian law in every group. An empty
/// S tests intercept-only models. Gaussian errors are assumed, not checked.
InvarianceTestResult test_invariance(const EnvDataset& data, const SubsetS& s,
                                     const EnvironmentPartition& part, double alpha,
                                     InvarianceMode mode = InvarianceMode::coefficients_and_variance);

}  // namespace causalreg

#include "causalreg/invariance.hpp"

#include "causalreg/error.hpp"
#include "causalreg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace causalreg {

namespace {

Matrix design_rows(const EnvDataset& data, const SubsetS& s, const std::vector<std::size_t>& rows) {
  Matrix d(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(s.size()) + 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    d(ii, 0) = 1.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      d(ii, static_cast<Eigen::Index>(k) + 1) =
          data.x()(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(s.indices()[k]));
    }
  }
  return d;
}

Vector response_rows(const EnvDataset& data, const std::vector<std::size_t>& rows) {
  Vector v(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = data.y()(static_cast<Eigen::Index>(rows[i]));
  return v;
}

double group_rss(const EnvDataset& data, const SubsetS& s, const std::vector<std::size_t>& rows) {
  try {
    return ols(design_rows(data, s, rows), response_rows(data, rows)).rss;
  } catch (const NumericError&) {
    throw NumericError("invariance test: singular design in environment group of size " +
                       std::to_string(rows.size()) + " for S=" + s.label());
  }
}

void check_sizes(const SubsetS& s, const EnvironmentPartition& part) {
  const std::size_t k = s.size() + 1;
  if (part.size() < 2) throw DataError("invariance test needs at least two environments");
  for (const auto& g : part.groups()) {
    if (g.size() <= k) {
      throw DataError("environment group of size " + std::to_string(g.size()) +
                      " too small for " + std::to_string(k) + " regression parameters");
    }
  }
  if (part.n() <= part.size() * k) throw DataError("too few observations for the Chow test");
}

}  // namespace

TestStatistic chow_coefficient_test(const EnvDataset& data, const SubsetS& s,
                                    const EnvironmentPartition& part) {
  check_sizes(s, part);
  const double k = static_cast<double>(s.size() + 1);
  const double groups = static_cast<double>(part.size());
  const double n = static_cast<double>(part.n());

  std::vector<std::size_t> all(part.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const double rss_pool = group_rss(data, s, all);
  double rss_split = 0.0;
  for (const auto& g : part.groups()) rss_split += group_rss(data, s, g);

  TestStatistic out;
  out.df1 = (groups - 1.0) * k;
  out.df2 = n - groups * k;
  if (rss_split <= 0.0) {
    // Exact fits within every group: any pooled misfit is infinitely significant.
    out.statistic = rss_pool > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  } else {
    // Differences at rounding level are an exact decomposition.
    double gain = rss_pool - rss_split;
    if (gain <= 1e-12 * rss_pool) gain = 0.0;
    out.statistic = (gain / out.df1) / (rss_split / out.df2);
  }
  out.p_value = f_sf(out.df1, out.df2, out.statistic);
  return out;
}

TestStatistic variance_equality_test(const EnvDataset& data, const SubsetS& s,
                                     const EnvironmentPartition& part) {
  check_sizes(s, part);
  const double k = static_cast<double>(s.size() + 1);
  std::vector<double> dof, var;
  for (const auto& g : part.groups()) {
    const double nu = static_cast<double>(g.size()) - k;
    dof.push_back(nu);
    var.push_back(group_rss(data, s, g) / nu);
  }

  TestStatistic out;
  if (part.size() == 2) {
    out.df1 = dof[0];
    out.df2 = dof[1];
    if (var[1] == 0.0) {
      out.statistic = var[0] == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    } else {
      out.statistic = var[0] / var[1];
    }
    const double lower = f_cdf(out.df1, out.df2, out.statistic);
    const double upper = f_sf(out.df1, out.df2, out.statistic);
    out.p_value = std::min(1.0, 2.0 * std::min(lower, upper));
    return out;
  }

  // Bartlett
  double total = 0.0, pooled = 0.0, inv_sum = 0.0, log_sum = 0.0;
  for (std::size_t e = 0; e < dof.size(); ++e) {
    if (var[e] <= 0.0) throw NumericError("variance test: zero residual variance in a group");
    total += dof[e];
    pooled += dof[e] * var[e];
    inv_sum += 1.0 / dof[e];
    log_sum += dof[e] * std::log(var[e]);
  }
  pooled /= total;
  const double groups = static_cast<double>(dof.size());
  const double correction = 1.0 + (inv_sum - 1.0 / total) / (3.0 * (groups - 1.0));
  out.statistic = std::max(0.0, (total * std::log(pooled) - log_sum) / correction);
  out.df1 = groups - 1.0;
  out.df2 = 0.0;
  out.p_value = 1.0 - chi2_cdf(out.statistic, out.df1);
  return out;
}

double combine_bonferroni(double p_coeff, double p_var) {
  return std::min(1.0, 2.0 * std::min(p_coeff, p_var));
}

InvarianceTestResult test_invariance(const EnvDataset& data, const SubsetS& s,
                                     const EnvironmentPartition& part, double alpha,
                                     InvarianceMode mode) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
  InvarianceTestResult res;
  res.alpha = alpha;
  const auto chow = chow_coefficient_test(data, s, part);
  res.statistic_coeff = chow.statistic;
  res.p_coeff = chow.p_value;
  if (mode == InvarianceMode::coefficients_only) {
    res.p_value = chow.p_value;
  } else {
    const auto var = variance_equality_test(data, s, part);
    res.statistic_var = var.statistic;
    res.p_var = var.p_value;
    res.p_value = combine_bonferroni(res.p_coeff, res.p_var);
  }
  res.accepted = res.accepted_at(alpha);
  return res;
}

}  // namespace causalreg

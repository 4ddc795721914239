#pragma once

#include "causalreg/data_model.hpp"

#include <cstddef>
#include <vector>

namespace causalreg {

/// Orthogonal projection onto the column space of an anchor matrix, held as a
/// thin orthonormal basis. Never forms the n x n projection matrix.
class Projector {
 public:
  Projector() = default;
  Projector(Matrix basis, std::size_t rank) : q_(std::move(basis)), rank_(rank) {}

  const Matrix& basis() const noexcept { return q_; }
  std::size_t rank() const noexcept { return rank_; }
  std::size_t n() const noexcept { return static_cast<std::size_t>(q_.rows()); }

  Vector apply(const Vector& v) const;
  Matrix apply(const Matrix& m) const;

  /// (I - P) v
  Vector residual(const Vector& v) const { return v - apply(v); }
  Matrix residual(const Matrix& m) const { return m - apply(m); }

 private:
  Matrix q_;
  std::size_t rank_ = 0;
};

/// Column-pivoted QR with rank tolerance 1e-10 * max|R_ii|.
Projector build_projector(const Matrix& a);

struct LinearFit {
  Vector beta;
  Vector residuals;
  double rss = 0.0;
};

/// Least squares without intercept. Throws NumericError on a rank-deficient design.
LinearFit ols(const Matrix& x, const Vector& y);

struct InterceptFit {
  double intercept = 0.0;
  Vector beta;
  Vector residuals;
  double rss = 0.0;
};

/// Least squares with an unpenalised intercept column.
InterceptFit ols_with_intercept(const Matrix& x, const Vector& y);

struct LassoOptions {
  std::size_t max_sweeps = 10000;
  double kkt_tolerance = 1e-7;
};

struct LassoFit {
  Vector beta;
  std::size_t sweeps = 0;
  double kkt_residual = 0.0;
  std::vector<double> objective_trace;  // objective after each full sweep
};

/// Minimises (1/n)||y - X b||^2 + lambda ||b||_1 by cyclic coordinate descent.
///
/// The penalty acts on coefficients in the caller's units. Columns are rescaled
/// internally to unit mean square purely for conditioning; the solution is the
/// same as for the unscaled problem. With this convention the all-zero
/// solution appears at lambda >= 2 max_j |x_j' y| / n.
LassoFit lasso_cd(const Matrix& x, const Vector& y, double lambda,
                  const LassoOptions& options = {}, const Vector* warm_start = nullptr);

/// Objective value (1/n)||y - X b||^2 + lambda ||b||_1.
double lasso_objective(const Matrix& x, const Vector& y, const Vector& b, double lambda);

/// Largest |KKT violation| of b for the lasso problem above.
double lasso_kkt_residual(const Matrix& x, const Vector& y, const Vector& b, double lambda);

/// Order in which covariates enter the lasso path over 100 log-spaced lambdas
/// from lambda_max down to 1e-3 * lambda_max. Columns are centered and scaled
/// to unit variance first. Returns the first k distinct entrants; variables
/// still inactive at the end of the grid follow by decreasing |x_j' r|.
std::vector<std::size_t> lasso_path_order(const Matrix& x, const Vector& y, std::size_t k);

double chi2_cdf(double x, double df);
double chi2_quantile(double alpha, double df = 1.0);

double f_cdf(double d1, double d2, double x);
double f_sf(double d1, double d2, double x);
double f_quantile(double d1, double d2, double prob);

/// Kolmogorov-Smirnov distance between the empirical CDF of a sample and U(0,1).
double ks_uniform_distance(std::vector<double> sample);

}  // namespace causalreg

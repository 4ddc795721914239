#include "causalreg/numerics.hpp"

#include "causalreg/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace causalreg {

namespace {

constexpr double kRankTolerance = 1e-10;

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

Vector Projector::apply(const Vector& v) const {
  if (rank_ == 0) return Vector::Zero(v.size());
  return q_ * (q_.transpose() * v);
}

Matrix Projector::apply(const Matrix& m) const {
  if (rank_ == 0) return Matrix::Zero(m.rows(), m.cols());
  return q_ * (q_.transpose() * m);
}

Projector build_projector(const Matrix& a) {
  if (a.rows() < 1 || a.cols() < 1) throw DataError("anchor matrix must be non-empty");
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  const double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) return Projector(Matrix::Zero(a.rows(), 0), 0);
  qr.setThreshold(kRankTolerance);
  const auto rank = static_cast<std::size_t>(qr.rank());
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), static_cast<Eigen::Index>(rank));
  return Projector(std::move(q), rank);
}

LinearFit ols(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw DataError("ols: row mismatch");
  if (x.cols() > x.rows()) throw NumericError("ols: more covariates than observations");
  LinearFit fit;
  if (x.cols() == 0) {
    fit.beta = Vector(0);
    fit.residuals = y;
    fit.rss = y.squaredNorm();
    return fit;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < x.cols()) throw NumericError("ols: singular design");
  fit.beta = qr.solve(y);
  fit.residuals = y - x * fit.beta;
  fit.rss = fit.residuals.squaredNorm();
  return fit;
}

InterceptFit ols_with_intercept(const Matrix& x, const Vector& y) {
  Matrix design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  LinearFit f = ols(design, y);
  InterceptFit out;
  out.intercept = f.beta(0);
  out.beta = f.beta.tail(x.cols());
  out.residuals = std::move(f.residuals);
  out.rss = f.rss;
  return out;
}

double lasso_objective(const Matrix& x, const Vector& y, const Vector& b, double lambda) {
  const double n = static_cast<double>(x.rows());
  return (y - x * b).squaredNorm() / n + lambda * b.lpNorm<1>();
}

double lasso_kkt_residual(const Matrix& x, const Vector& y, const Vector& b, double lambda) {
  const double n = static_cast<double>(x.rows());
  const Vector grad = -2.0 * (x.transpose() * (y - x * b)) / n;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    double v;
    if (b(j) != 0.0) {
      v = std::abs(grad(j) + lambda * (b(j) > 0 ? 1.0 : -1.0));
    } else {
      v = std::max(0.0, std::abs(grad(j)) - lambda);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

LassoFit lasso_cd(const Matrix& x, const Vector& y, double lambda, const LassoOptions& options,
                  const Vector* warm_start) {
  if (lambda < 0.0) throw UsageError("lasso: lambda must be nonnegative");
  if (x.rows() != y.size()) throw DataError("lasso: row mismatch");
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const double nd = static_cast<double>(n);

  // Work in rescaled coordinates bs_j = s_j b_j with unit mean-square columns;
  // the penalty becomes (lambda / s_j) |bs_j|.
  Vector scale = (x.colwise().squaredNorm().transpose() / nd).cwiseSqrt();
  Matrix xs = x;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (scale(j) > 0.0) xs.col(j) /= scale(j);
  }

  LassoFit fit;
  // At or above lambda_max the zero vector is the solution; decide it on the
  // unscaled gradient so rounding in the rescaling cannot leave 1e-16 residue.
  const double lambda_max = p > 0 ? 2.0 * (x.transpose() * y).cwiseAbs().maxCoeff() / nd : 0.0;
  if (lambda >= lambda_max * (1.0 - 1e-12)) {
    fit.beta = Vector::Zero(p);
    fit.sweeps = 0;
    fit.kkt_residual = lasso_kkt_residual(x, y, fit.beta, lambda);
    fit.objective_trace.push_back(y.squaredNorm() / nd);
    return fit;
  }

  Vector bs = Vector::Zero(p);
  if (warm_start) {
    if (warm_start->size() != p) throw UsageError("lasso: warm start has wrong length");
    bs = warm_start->cwiseProduct(scale);
  }
  Vector resid = y - xs * bs;

  auto to_original = [&](const Vector& b) {
    Vector out(p);
    for (Eigen::Index j = 0; j < p; ++j) out(j) = scale(j) > 0.0 ? b(j) / scale(j) : 0.0;
    return out;
  };

  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (scale(j) == 0.0) continue;
      const double old = bs(j);
      const double z = xs.col(j).dot(resid) / nd + old;
      const double updated = soft_threshold(z, 0.5 * lambda / scale(j));
      if (updated != old) {
        resid.noalias() -= (updated - old) * xs.col(j);
        bs(j) = updated;
      }
    }
    Vector b = to_original(bs);
    fit.objective_trace.push_back(resid.squaredNorm() / nd + lambda * b.lpNorm<1>());
    const double kkt = lasso_kkt_residual(x, y, b, lambda);
    // Stop once well inside tolerance, or when a sweep no longer improves the
    // objective and the tolerance is already met.
    const bool stalled =
        sweep > 1 && fit.objective_trace[sweep - 2] <= fit.objective_trace[sweep - 1];
    if (kkt <= 1e-2 * options.kkt_tolerance || (stalled && kkt <= options.kkt_tolerance) ||
        sweep == options.max_sweeps) {
      if (kkt > options.kkt_tolerance) {
        throw NumericError("lasso: no convergence after " + std::to_string(sweep) +
                           " sweeps (KKT residual " + std::to_string(kkt) + ")");
      }
      fit.beta = std::move(b);
      fit.sweeps = sweep;
      fit.kkt_residual = kkt;
      return fit;
    }
  }
  throw NumericError("lasso: max_sweeps must be positive");
}

std::vector<std::size_t> lasso_path_order(const Matrix& x, const Vector& y, std::size_t k) {
  const auto p = static_cast<std::size_t>(x.cols());
  if (k < 1 || k > p) throw UsageError("lasso_path_order: k must lie in 1..p");
  const double nd = static_cast<double>(x.rows());

  Matrix xs = x.rowwise() - x.colwise().mean();
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    const double sd = std::sqrt(xs.col(j).squaredNorm() / nd);
    if (sd > 0.0) xs.col(j) /= sd;
  }
  const Vector yc = y.array() - y.mean();

  const double lambda_max = 2.0 * (xs.transpose() * yc).cwiseAbs().maxCoeff() / nd;
  std::vector<std::size_t> order;
  std::vector<char> entered(p, 0);
  Vector beta = Vector::Zero(static_cast<Eigen::Index>(p));
  if (lambda_max > 0.0) {
    constexpr int kGrid = 100;
    constexpr double kRatio = 1e-3;
    for (int g = 0; g < kGrid && order.size() < k; ++g) {
      const double lambda = lambda_max * std::pow(kRatio, static_cast<double>(g) / (kGrid - 1));
      beta = lasso_cd(xs, yc, lambda, {}, &beta).beta;
      std::vector<std::size_t> fresh;
      for (std::size_t j = 0; j < p; ++j) {
        if (!entered[j] && beta(static_cast<Eigen::Index>(j)) != 0.0) fresh.push_back(j);
      }
      std::stable_sort(fresh.begin(), fresh.end(), [&](std::size_t l, std::size_t r) {
        return std::abs(beta(static_cast<Eigen::Index>(l))) >
               std::abs(beta(static_cast<Eigen::Index>(r)));
      });
      for (auto j : fresh) {
        entered[j] = 1;
        order.push_back(j);
      }
    }
  }
  if (order.size() < k) {
    const Vector score = (xs.transpose() * (yc - xs * beta)).cwiseAbs();
    std::vector<std::size_t> rest;
    for (std::size_t j = 0; j < p; ++j)
      if (!entered[j]) rest.push_back(j);
    std::stable_sort(rest.begin(), rest.end(), [&](std::size_t l, std::size_t r) {
      return score(static_cast<Eigen::Index>(l)) > score(static_cast<Eigen::Index>(r));
    });
    order.insert(order.end(), rest.begin(), rest.end());
  }
  order.resize(k);
  return order;
}

double chi2_cdf(double x, double df) {
  if (df <= 0.0) throw UsageError("chi2: degrees of freedom must be positive");
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::chi_squared(df), x);
}

double chi2_quantile(double alpha, double df) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("chi2_quantile: alpha must lie in (0,1)");
  if (df <= 0.0) throw UsageError("chi2: degrees of freedom must be positive");
  return boost::math::quantile(boost::math::chi_squared(df), alpha);
}

double f_cdf(double d1, double d2, double x) {
  if (!(d1 >= 1.0 && d2 >= 1.0)) throw UsageError("F distribution: degrees of freedom must be >= 1");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::cdf(boost::math::fisher_f(d1, d2), x);
}

double f_sf(double d1, double d2, double x) {
  if (!(d1 >= 1.0 && d2 >= 1.0)) throw UsageError("F distribution: degrees of freedom must be >= 1");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(d1, d2), x));
}

double f_quantile(double d1, double d2, double prob) {
  if (!(d1 >= 1.0 && d2 >= 1.0)) throw UsageError("F distribution: degrees of freedom must be >= 1");
  if (!(prob >= 0.0 && prob < 1.0)) throw UsageError("f_quantile: probability must lie in [0,1)");
  if (prob == 0.0) return 0.0;
  return boost::math::quantile(boost::math::fisher_f(d1, d2), prob);
}

double ks_uniform_distance(std::vector<double> sample) {
  if (sample.empty()) throw DataError("ks distance of empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double u = std::clamp(sample[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - u, u - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace causalreg

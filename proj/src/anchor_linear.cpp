#include "causalreg/anchor_linear.hpp"

#include "causalreg/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace causalreg {

void LinearSem::validate() const {
  const auto dd = static_cast<Eigen::Index>(d());
  if (b.rows() != dd || b.cols() != dd) throw DataError("linear SEM: B must be d x d");
  if (m.rows() != dd) throw DataError("linear SEM: M must have d rows");
  if (noise_sd.size() != dd) throw DataError("linear SEM: noise_sd must have length d");
  if (sigma_a.rows() != m.cols() || sigma_a.cols() != m.cols())
    throw DataError("linear SEM: sigma_a must be r x r");
  if ((noise_sd.array() <= 0.0).any()) throw DataError("linear SEM: noise sds must be positive");
  Eigen::FullPivLU<Matrix> lu(Matrix::Identity(dd, dd) - b);
  if (!lu.isInvertible()) throw NumericError("linear SEM: I - B is singular");
}

Matrix LinearSem::total_effects() const {
  const auto dd = static_cast<Eigen::Index>(d());
  Eigen::FullPivLU<Matrix> lu(Matrix::Identity(dd, dd) - b);
  if (!lu.isInvertible()) throw NumericError("linear SEM: I - B is singular");
  return lu.inverse();
}

Vector transform_w(double gamma, const Projector& projector, const Vector& v) {
  if (gamma < 0.0) throw UsageError("gamma must be nonnegative");
  const double shrink = 1.0 - std::sqrt(gamma);
  if (shrink == 0.0) return v;
  return v - shrink * projector.apply(v);
}

Matrix transform_w(double gamma, const Projector& projector, const Matrix& v) {
  if (gamma < 0.0) throw UsageError("gamma must be nonnegative");
  const double shrink = 1.0 - std::sqrt(gamma);
  if (shrink == 0.0) return v;
  return v - shrink * projector.apply(v);
}

AnchorObjective anchor_objective(double gamma, const Projector& projector, const Vector& residuals) {
  const double n = static_cast<double>(residuals.size());
  const Vector proj = projector.apply(residuals);
  AnchorObjective obj;
  obj.orthogonal_term = (residuals - proj).squaredNorm() / n;
  obj.anchor_term = gamma * proj.squaredNorm() / n;
  obj.total = obj.orthogonal_term + obj.anchor_term;
  return obj;
}

AnchorLinearFit fit_anchor(const EnvDataset& data, double gamma, std::optional<double> lambda) {
  return fit_anchor(data, build_projector(data.a()), gamma, lambda);
}

AnchorLinearFit fit_anchor(const EnvDataset& data, const Projector& projector, double gamma,
                           std::optional<double> lambda) {
  if (gamma < 0.0) throw UsageError("gamma must be nonnegative");
  const Vector yt = transform_w(gamma, projector, data.y());
  const Matrix xt = transform_w(gamma, projector, data.x());

  AnchorLinearFit fit;
  fit.gamma = gamma;
  if (lambda) {
    fit.beta = lasso_cd(xt, yt, *lambda).beta;
    fit.method = AnchorMethod::lasso_transformed;
    fit.lambda = lambda;
  } else {
    try {
      fit.beta = ols(xt, yt).beta;
    } catch (const NumericError&) {
      throw NumericError("anchor regression: transformed design is singular at gamma=" +
                         std::to_string(gamma));
    }
  }
  fit.objective = anchor_objective(gamma, projector, data.y() - data.x() * fit.beta);
  return fit;
}

double gamma_from_alpha(double alpha) { return chi2_quantile(alpha, 1.0); }

double alpha_from_gamma(double gamma) {
  if (gamma < 0.0) throw UsageError("gamma must be nonnegative");
  return chi2_cdf(gamma, 1.0);
}

double insample_quantile_risk(const Vector& residuals, const Projector& projector, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in (0,1]");
  const Vector proj = projector.apply(residuals);
  const Vector orth = residuals - proj;
  std::vector<double> sq(static_cast<std::size_t>(proj.size()));
  for (Eigen::Index i = 0; i < proj.size(); ++i) sq[static_cast<std::size_t>(i)] = proj(i) * proj(i);
  std::sort(sq.begin(), sq.end());
  // order statistic with linear interpolation (matches eval::quantile_curve)
  const double pos = alpha * static_cast<double>(sq.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sq.size() - 1);
  const double q = sq[lo] + (pos - static_cast<double>(lo)) * (sq[hi] - sq[lo]);
  return q + orth.squaredNorm() / static_cast<double>(orth.size());
}

Vector residual_loading(const LinearSem& sem, const Vector& b) {
  if (b.size() != static_cast<Eigen::Index>(sem.p)) throw UsageError("coefficient length must equal p");
  Vector w = Vector::Zero(static_cast<Eigen::Index>(sem.d()));
  w.head(static_cast<Eigen::Index>(sem.p)) = -b;
  w(static_cast<Eigen::Index>(sem.y_index())) = 1.0;
  return sem.total_effects().transpose() * w;
}

namespace {

// Symmetric PSD square root and pseudo-inverse via eigendecomposition.
struct PsdFactors {
  Matrix root;
  Matrix pinv;
};

PsdFactors psd_factors(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
  const Vector ev = eig.eigenvalues();
  const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol) throw DataError("anchor second-moment matrix is not positive semidefinite");
  Vector root(ev.size()), inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    root(i) = ev(i) > tol ? std::sqrt(ev(i)) : 0.0;
    inv(i) = ev(i) > tol ? 1.0 / ev(i) : 0.0;
  }
  const Matrix& v = eig.eigenvectors();
  return {v * root.asDiagonal() * v.transpose(), v * inv.asDiagonal() * v.transpose()};
}

}  // namespace

WorstCaseRisk worst_case_risk_oracle(const LinearSem& sem, const Vector& b,
                                     const ShiftClassSpec& shift, const WorstCaseOptions& options) {
  sem.validate();
  if (shift.gamma < 0.0) throw UsageError("gamma must be nonnegative");
  if (shift.m.rows() != static_cast<Eigen::Index>(sem.d()) || shift.m.cols() != shift.sigma_a.rows() ||
      shift.sigma_a.rows() != shift.sigma_a.cols())
    throw UsageError("shift class: M must be d x r and sigma_a r x r");
  const Vector c = residual_loading(sem, b);
  const Vector u = shift.m.transpose() * c;
  const auto factors = psd_factors(shift.sigma_a);

  WorstCaseRisk out;
  out.baseline = c.dot(sem.noise_covariance() * c);
  const double spread = u.dot(shift.sigma_a * u);
  out.risk = out.baseline + shift.gamma * spread;
  out.worst_delta = spread > 0.0 ? Vector(shift.sigma_a * u * std::sqrt(shift.gamma / spread))
                                 : Vector::Zero(u.size());

  // Ascent over eta in the unit ball, delta = sqrt(gamma) Sigma_A^{1/2} eta.
  const Vector g = std::sqrt(shift.gamma) * factors.root * u;  // (u'delta) = g'eta
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  double best = 0.0;
  for (std::size_t s = 0; s < options.starts; ++s) {
    Vector eta(g.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = normal(rng);
    eta /= std::max(1.0, eta.norm());
    const double step = 0.5 / std::max(g.squaredNorm(), 1e-300);
    for (std::size_t it = 0; it < options.iterations; ++it) {
      const double lin = g.dot(eta);
      Vector next = eta + step * 2.0 * lin * g;
      const double norm = next.norm();
      if (norm > 1.0) next /= norm;
      const double moved = (next - eta).norm();
      eta = std::move(next);
      if (moved < 1e-15) break;
    }
    best = std::max(best, std::pow(g.dot(eta), 2));
  }
  out.ascent_risk = out.baseline + best;
  const double scale = std::max(out.risk, 1e-300);
  if (std::abs(out.ascent_risk - out.risk) > options.agreement * scale) {
    throw NumericError("worst-case oracle: analytic and ascent values disagree (" +
                       std::to_string(out.risk) + " vs " + std::to_string(out.ascent_risk) + ")");
  }
  return out;
}

double population_regularized_risk(const LinearSem& sem, const Vector& b, double gamma) {
  sem.validate();
  if (gamma < 0.0) throw UsageError("gamma must be nonnegative");
  const Matrix t = sem.total_effects();
  const Matrix sigma_z =
      t * (sem.noise_covariance() + sem.m * sem.sigma_a * sem.m.transpose()) * t.transpose();
  const Matrix cov_za = t * sem.m * sem.sigma_a;

  Vector w = Vector::Zero(static_cast<Eigen::Index>(sem.d()));
  w.head(static_cast<Eigen::Index>(sem.p)) = -b;
  w(static_cast<Eigen::Index>(sem.y_index())) = 1.0;

  const double total = w.dot(sigma_z * w);
  const Vector cov_ra = cov_za.transpose() * w;
  const double explained = cov_ra.dot(psd_factors(sem.sigma_a).pinv * cov_ra);
  return (total - explained) + gamma * explained;
}

}  // namespace causalreg

#pragma once

#include "causalreg/data_model.hpp"
#include "causalreg/linear_sem.hpp"
#include "causalreg/numerics.hpp"

#include <cstdint>
#include <optional>

namespace causalreg {

/// Largest finite gamma used in place of infinity (the two-stage least squares limit).
inline constexpr double kGammaCap = 1e8;

/// W_gamma v = v - (1 - sqrt(gamma)) P_A v, column-wise for matrices.
Vector transform_w(double gamma, const Projector& projector, const Vector& v);
Matrix transform_w(double gamma, const Projector& projector, const Matrix& v);

/// Anchor criterion split into its two terms,
///   total = ||(I - P_A) r||^2 / n + gamma ||P_A r||^2 / n = ||W_gamma r||^2 / n.
struct AnchorObjective {
  double total = 0.0;
  double orthogonal_term = 0.0;  // ||(I - P_A) r||^2 / n
  double anchor_term = 0.0;      // gamma ||P_A r||^2 / n
};

AnchorObjective anchor_objective(double gamma, const Projector& projector, const Vector& residuals);

enum class AnchorMethod { ols_transformed, lasso_transformed };

struct AnchorLinearFit {
  double gamma = 1.0;
  Vector beta;
  AnchorObjective objective;
  AnchorMethod method = AnchorMethod::ols_transformed;
  std::optional<double> lambda;

  /// X b for covariates on the fitted (centered) scale.
  Vector predict(const Matrix& x) const { return x * beta; }
};

/// Anchor regression on centered data: least squares (or lasso when lambda is
/// given) of W_gamma Y on W_gamma X. The reported objective is evaluated on the
/// untransformed data.
AnchorLinearFit fit_anchor(const EnvDataset& data, double gamma,
                           std::optional<double> lambda = std::nullopt);
AnchorLinearFit fit_anchor(const EnvDataset& data, const Projector& projector, double gamma,
                           std::optional<double> lambda = std::nullopt);

/// gamma equal to the alpha-quantile of chi-square(1), and its inverse.
double gamma_from_alpha(double alpha);
double alpha_from_gamma(double gamma);

/// In-sample estimate of the alpha-quantile of E[(Y - X'b)^2 | A] under joint
/// Gaussianity: the empirical alpha-quantile of (P_A r)_i^2 plus the mean of
/// ((I - P_A) r)_i^2.
double insample_quantile_risk(const Vector& residuals, const Projector& projector, double alpha);

/// Shift perturbations v = M delta with E[delta delta'] <= gamma sigma_a.
struct ShiftClassSpec {
  double gamma = 1.0;
  Matrix m;
  Matrix sigma_a;
};

struct WorstCaseRisk {
  double risk = 0.0;          // analytic supremum
  double ascent_risk = 0.0;   // best value found by projected gradient ascent
  double baseline = 0.0;      // unperturbed c' Sigma_eps c
  Vector worst_delta;         // maximising deterministic shift
};

struct WorstCaseOptions {
  std::size_t starts = 20;
  std::size_t iterations = 2000;
  std::uint64_t seed = 20190101;
  double agreement = 1e-6;    // relative tolerance between analytic and ascent values
};

/// Loading c with Y - X'b = c'(eps + M A) in the linear model.
Vector residual_loading(const LinearSem& sem, const Vector& b);

/// sup over shifts in C_gamma of E[(Y^v - X^v' b)^2].
///
/// The residual is c'(eps + M delta), so the risk is c'Sigma_eps c + (c'M delta)^2.
/// A random delta with E[delta delta'] <= gamma Sigma_A cannot beat the
/// deterministic extreme points delta' Sigma_A^+ delta <= gamma, because
/// E[(u'delta)^2] = u'E[delta delta']u <= gamma u'Sigma_A u, which the rank-one
/// point delta = Sigma_A u sqrt(gamma / u'Sigma_A u) attains (u = M'c). The analytic
/// value is cross-checked by projected gradient ascent over that ellipsoid from
/// several random starts; disagreement beyond `agreement` is a NumericError.
WorstCaseRisk worst_case_risk_oracle(const LinearSem& sem, const Vector& b,
                                     const ShiftClassSpec& shift,
                                     const WorstCaseOptions& options = {});

/// E[((I - P_A)(Y - X'b))^2] + gamma E[(P_A(Y - X'b))^2] from the joint
/// covariance of (Z, A) implied by the model, with P_A the best linear
/// projection on A.
double population_regularized_risk(const LinearSem& sem, const Vector& b, double gamma);

}  // namespace causalreg

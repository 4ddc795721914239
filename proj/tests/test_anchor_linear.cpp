#include "causalreg/anchor_linear.hpp"
#include "causalreg/error.hpp"
#include "causalreg/simgen.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace causalreg;
using testsupport::gaussian_matrix;
using testsupport::gaussian_vector;
using testsupport::max_abs;

namespace {

Matrix explicit_projection(const Matrix& a) { return a * (a.transpose() * a).inverse() * a.transpose(); }

EnvDataset centered_problem(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p, Eigen::Index r) {
  const Matrix a = gaussian_matrix(n, r, rng);
  const Matrix x = a * gaussian_matrix(r, p, rng) + gaussian_matrix(n, p, rng);
  const Vector y = x * gaussian_vector(p, rng) + a * gaussian_vector(r, rng) + gaussian_vector(n, rng);
  return center(EnvDataset(y, x, a));
}

// X1 = A1 + H + e, X2 = A2 + 0.5 X1 + e, Y = 1.5 X1 - X2 + H + e; the anchors
// reach Y only through X.
LinearSem instrument_sem() {
  LinearSem sem;
  sem.p = 2;
  sem.q = 1;
  sem.b = Matrix::Zero(4, 4);
  sem.b(0, 3) = 1.0;
  sem.b(1, 0) = 0.5;
  sem.b(2, 0) = 1.5;
  sem.b(2, 1) = -1.0;
  sem.b(2, 3) = 1.0;
  sem.m = Matrix::Zero(4, 2);
  sem.m(0, 0) = 1.0;
  sem.m(1, 1) = 1.0;
  sem.noise_sd = Vector::Ones(4);
  sem.sigma_a = Matrix::Identity(2, 2);
  return sem;
}

}  // namespace

TEST_CASE("W transform special cases") {
  std::mt19937_64 rng(1);
  const Matrix a = gaussian_matrix(15, 2, rng);
  const Projector proj = build_projector(a);
  const Vector v = gaussian_vector(15, rng);
  CHECK(transform_w(1.0, proj, v) == v);
  CHECK(max_abs(transform_w(0.0, proj, v) - (v - explicit_projection(a) * v)) < 1e-12);
  CHECK(max_abs(transform_w(4.0, proj, v) - (v + proj.apply(v))) < 1e-12);

  const Matrix m = gaussian_matrix(15, 3, rng);
  const Matrix wm = transform_w(9.0, proj, m);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(max_abs(wm.col(j) - transform_w(9.0, proj, Vector(m.col(j)))) < 1e-14);
  CHECK_THROWS_AS(transform_w(-0.5, proj, v), UsageError);
}

TEST_CASE("gamma = 1 reproduces OLS") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const EnvDataset d = centered_problem(rng, 40, 3, 2);
    CHECK(max_abs(fit_anchor(d, 1.0).beta - ols(d.x(), d.y()).beta) < 1e-8);
  }
}

TEST_CASE("gamma = 0 reproduces OLS on anchor-residualized data") {
  std::mt19937_64 rng(3);
  const EnvDataset d = centered_problem(rng, 50, 3, 2);
  const Matrix resid = Matrix::Identity(50, 50) - explicit_projection(d.a());
  const Vector oracle = ols(resid * d.x(), resid * d.y()).beta;
  CHECK(max_abs(fit_anchor(d, 0.0).beta - oracle) < 1e-8);
}

TEST_CASE("large gamma approaches two-stage least squares") {
  std::mt19937_64 rng(4);
  const auto n = 2000;
  std::normal_distribution<double> z;
  Matrix a = gaussian_matrix(n, 3, rng);
  const Vector h = gaussian_vector(n, rng);
  Matrix x(n, 2);
  x.col(0) = a.col(0) + 0.5 * a.col(2) + h + gaussian_vector(n, rng);
  x.col(1) = a.col(1) - a.col(2) + h + gaussian_vector(n, rng);
  const Vector y = 2.0 * x.col(0) - x.col(1) + 2.0 * h + gaussian_vector(n, rng);
  const EnvDataset d = center(EnvDataset(y, x, a));

  const Matrix xhat = explicit_projection(d.a()) * d.x();
  const Vector tsls = (xhat.transpose() * xhat).ldlt().solve(xhat.transpose() * d.y());
  const Vector beta = fit_anchor(d, kGammaCap).beta;
  CHECK((beta - tsls).norm() / tsls.norm() < 1e-3);
}

TEST_CASE("gamma = 7 solves the normal equations with an explicit W") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const EnvDataset d = centered_problem(rng, 30, 3, 2);
    const Matrix w = Matrix::Identity(30, 30) - (1.0 - std::sqrt(7.0)) * explicit_projection(d.a());
    const Matrix w2 = w * w;
    const Vector oracle = (d.x().transpose() * w2 * d.x()).lu().solve(d.x().transpose() * w2 * d.y());
    CHECK(max_abs(fit_anchor(d, 7.0).beta - oracle) < 1e-8);
  }
}

TEST_CASE("lasso variant and reported objective") {
  std::mt19937_64 rng(6);
  const EnvDataset d = centered_problem(rng, 60, 4, 2);
  const AnchorLinearFit plain = fit_anchor(d, 3.0);
  CHECK(plain.method == AnchorMethod::ols_transformed);
  CHECK_FALSE(plain.lambda);
  const Vector r = d.y() - d.x() * plain.beta;
  const AnchorObjective obj = anchor_objective(3.0, build_projector(d.a()), r);
  CHECK(plain.objective.total == doctest::Approx(obj.total).epsilon(1e-12));
  CHECK(plain.objective.total >= 0.0);

  const AnchorLinearFit zero_pen = fit_anchor(d, 3.0, 0.0);
  CHECK(zero_pen.method == AnchorMethod::lasso_transformed);
  CHECK(max_abs(zero_pen.beta - plain.beta) < 1e-6);
  const AnchorLinearFit heavy = fit_anchor(d, 3.0, 1e6);
  CHECK(heavy.beta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("property: objective decomposition equals the W-norm") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> g(0.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(5 + rng() % 60);
    const auto r = static_cast<Eigen::Index>(1 + rng() % 3);
    const Projector proj = build_projector(gaussian_matrix(n, r, rng));
    const Vector res = gaussian_vector(n, rng);
    const double gamma = g(rng);
    const AnchorObjective obj = anchor_objective(gamma, proj, res);
    const double w_norm = transform_w(gamma, proj, res).squaredNorm() / static_cast<double>(n);
    CHECK(std::abs(obj.total - w_norm) <= 1e-10 * std::max(1.0, w_norm));
    CHECK(std::abs(obj.orthogonal_term + obj.anchor_term - obj.total) <= 1e-12 * std::max(1.0, obj.total));
  }
}

TEST_CASE("property: anchor-correlated residual energy falls as gamma grows") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const EnvDataset d = centered_problem(rng, 80, 3, 2);
    const Projector proj = build_projector(d.a());
    double previous = std::numeric_limits<double>::infinity();
    for (double gamma : {0.5, 1.0, 2.0, 4.0, 7.0, 16.0}) {
      const Vector r = d.y() - d.x() * fit_anchor(d, proj, gamma).beta;
      const double energy = proj.apply(r).squaredNorm();
      CHECK(energy <= previous * (1.0 + 1e-10));
      previous = energy;
    }
  }
}

TEST_CASE("gamma and alpha conversions") {
  CHECK(gamma_from_alpha(0.9918) == doctest::Approx(7.0).epsilon(0.05 / 7.0));
  CHECK(gamma_from_alpha(0.5) == doctest::Approx(0.454936423119572).epsilon(1e-9));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(1e-4, 1.0 - 1e-4);
  for (int trial = 0; trial < 100; ++trial) {
    const double alpha = u(rng);
    CHECK(std::abs(alpha_from_gamma(gamma_from_alpha(alpha)) - alpha) < 1e-7);
  }
}

TEST_CASE("in-sample quantile risk") {
  std::mt19937_64 rng(10);
  SUBCASE("residuals orthogonal to the anchors") {
    const Matrix a = gaussian_matrix(40, 2, rng);
    const Projector proj = build_projector(a);
    const Vector r = proj.residual(gaussian_vector(40, rng));
    CHECK(insample_quantile_risk(r, proj, 0.9) == doctest::Approx(r.squaredNorm() / 40.0).epsilon(1e-12));
  }
  SUBCASE("a single spike dominates at alpha = 1") {
    Matrix a = Matrix::Zero(50, 2);
    a(0, 0) = 1.0;
    a.col(1) = gaussian_vector(50, rng);
    const Projector proj = build_projector(a);
    Vector r = 0.01 * gaussian_vector(50, rng);
    r(0) = 100.0;
    const Vector pr = proj.apply(r);
    const double expected = pr.cwiseAbs2().maxCoeff() + (r - pr).squaredNorm() / 50.0;
    CHECK(insample_quantile_risk(r, proj, 1.0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(insample_quantile_risk(r, proj, 1.0) >= 100.0 * 100.0 * 0.99);
  }
}

TEST_CASE("in-sample quantile estimate tracks the amplified out-of-sample MSE") {
  const Simulation sim = gen_linear_illustration(100000, 21);
  const EnvDataset train = center(sim.data);
  const Projector proj = build_projector(train.a());
  const AnchorLinearFit fit = fit_anchor(train, proj, 7.0);
  const double insample = insample_quantile_risk(train.y() - train.x() * fit.beta, proj, alpha_from_gamma(7.0));
  const EnvDataset test = gen_out_of_sample(sim.spec, PerturbationKind::sqrt10_amplify, 100000, 22);
  const Vector out_res = (test.y().array() - train.centering()->y_mean).matrix() -
                         (test.x().rowwise() - train.centering()->x_mean.transpose()) * fit.beta;
  const double mse = out_res.squaredNorm() / 100000.0;
  CHECK(std::abs(insample - mse) / mse < 0.10);
}

TEST_CASE("worst-case oracle") {
  SUBCASE("gamma = 0 leaves only the noise term") {
    const LinearSem sem = instrument_sem();
    const Vector b = (Vector(2) << 0.3, 0.7).finished();
    const WorstCaseRisk w = worst_case_risk_oracle(sem, b, {0.0, sem.m, sem.sigma_a});
    CHECK(w.risk == doctest::Approx(w.baseline).epsilon(1e-12));
  }
  SUBCASE("causal coefficients are shift invariant when anchors only move X") {
    const LinearSem sem = instrument_sem();
    const Vector b = (Vector(2) << 1.5, -1.0).finished();
    CHECK(max_abs(residual_loading(sem, b).transpose() * sem.m) < 1e-12);
    const double base = worst_case_risk_oracle(sem, b, {0.0, sem.m, sem.sigma_a}).risk;
    for (double gamma : {1.0, 5.0, 100.0})
      CHECK(worst_case_risk_oracle(sem, b, {gamma, sem.m, sem.sigma_a}).risk == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("analytic value equals the regularized population risk") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      const SemSpec spec = make_spec(ModelId::random_linear, 100 + trial);
      const Vector b = gaussian_vector(3, rng);
      const WorstCaseRisk w = worst_case_risk_oracle(spec.sem, b, {5.0, spec.sem.m, spec.sem.sigma_a});
      const double reg = population_regularized_risk(spec.sem, b, 5.0);
      CHECK(std::abs(w.risk - reg) / reg < 1e-6);
      CHECK(w.ascent_risk <= w.risk * (1.0 + 1e-9));
      CHECK(std::abs(w.ascent_risk - w.risk) / w.risk < 1e-6);
      const double budget = w.worst_delta.dot(spec.sem.sigma_a.ldlt().solve(w.worst_delta));
      CHECK(budget == doctest::Approx(5.0).epsilon(1e-8));
    }
  }
  SUBCASE("shape and validity checks") {
    const LinearSem sem = instrument_sem();
    const Vector b = Vector::Zero(2);
    CHECK_THROWS_AS(worst_case_risk_oracle(sem, Vector::Zero(3), {1.0, sem.m, sem.sigma_a}), UsageError);
    CHECK_THROWS_AS(worst_case_risk_oracle(sem, b, {1.0, Matrix::Zero(4, 3), sem.sigma_a}), UsageError);
    Matrix not_psd = sem.sigma_a;
    not_psd(1, 1) = -1.0;
    CHECK_THROWS_AS(worst_case_risk_oracle(sem, b, {1.0, sem.m, not_psd}), DataError);
    LinearSem cyclic = sem;
    cyclic.b(0, 2) = 1.0 / 1.5;
    cyclic.b(1, 0) = 0.0;
    cyclic.b(2, 1) = 0.0;
    cyclic.b(2, 3) = 0.0;
    cyclic.b(0, 3) = 0.0;
    CHECK_THROWS_AS(cyclic.validate(), NumericError);
  }
}

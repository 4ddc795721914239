#include "causalreg/anchor_boost.hpp"
#include "causalreg/anchor_linear.hpp"
#include "causalreg/error.hpp"
#include "causalreg/numerics.hpp"
#include "causalreg/simgen.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace causalreg;

namespace {

EnvDataset centered_m1(std::size_t n, std::uint64_t seed) { return center(simulate(ModelId::m1, n, seed).data); }

LearnerSpec linear_learner() {
  LearnerSpec s;
  s.kind = LearnerKind::linear;
  return s;
}

LearnerSpec small_forest(std::size_t trees = 20) {
  LearnerSpec s;
  s.kind = LearnerKind::forest;
  s.tree.n_trees = trees;
  return s;
}

double relative_gap(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

TEST_CASE("stopping rules on a short trace") {
  const std::vector<double> trace{10, 6, 5, 5.4, 7};
  CHECK(choose_stop(trace, StopRule::stop1).m_stop == 3);
  CHECK(choose_stop(trace, StopRule::stop2).m_stop == 4);
  const StopChoice s3 = choose_stop(trace, StopRule::stop3, 5.2);
  CHECK(s3.m_stop == 4);
  CHECK(s3.warnings.empty());

  const StopChoice fallback = choose_stop(trace, StopRule::stop3, 11.0);
  CHECK(fallback.m_stop == 3);
  CHECK(fallback.warnings.size() == 1);

  CHECK(choose_stop({4, 2, 2, 3}, StopRule::stop1).m_stop == 2);
  CHECK(choose_stop({4, 2, 2.1, 2.1, 3}, StopRule::stop2).m_stop == 4);
  CHECK_THROWS_AS(choose_stop(trace, StopRule::stop3), UsageError);
  CHECK_THROWS_AS(choose_stop({}, StopRule::stop1), UsageError);
}

TEST_CASE("objective at m = 0 is the transformed response energy") {
  const EnvDataset d = centered_m1(150, 1);
  BoostConfig cfg;
  cfg.learner = small_forest(5);
  cfg.max_iter = 3;
  const BoostFit fit = boost_fit(d, cfg);
  const Vector wy = transform_w(cfg.gamma, build_projector(d.a()), d.y());
  CHECK(fit.objective(0) == doctest::Approx(wy.squaredNorm() / (2.0 * d.n())).epsilon(1e-12));
  CHECK(fit.trace().size() == 3);
  CHECK(fit.predict_at(d.x(), 0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear base learner with gamma = 1 converges to least squares") {
  const EnvDataset d = centered_m1(300, 2);
  BoostConfig cfg;
  cfg.gamma = 1.0;
  cfg.nu = 0.5;
  cfg.max_iter = 200;
  cfg.stop_rule = StopRule::stop1;
  cfg.learner = linear_learner();
  const BoostFit fit = boost_fit(d, cfg);
  const Vector ols_fit = d.x() * ols(d.x(), d.y()).beta;
  CHECK(relative_gap(fit.predict_at(d.x(), 200), ols_fit) < 1e-3);
}

TEST_CASE("linear base learner converges to the closed-form anchor fit") {
  for (double gamma : {0.5, 2.0, 7.0}) {
    for (std::uint64_t seed = 10; seed < 13; ++seed) {
      const EnvDataset d = centered_m1(300, seed);
      BoostConfig cfg;
      cfg.gamma = gamma;
      cfg.nu = 0.1;
      cfg.max_iter = 400;
      cfg.learner = linear_learner();
      const BoostFit fit = boost_fit(d, cfg);
      const Vector target = fit_anchor(d, gamma).predict(d.x());
      CHECK(relative_gap(fit.predict_at(d.x(), 400), target) < 1e-3);
    }
  }
}

TEST_CASE("property: gamma = 1 is plain L2 boosting") {
  const EnvDataset d = centered_m1(200, 3);
  BoostConfig cfg;
  cfg.gamma = 1.0;
  cfg.max_iter = 15;
  cfg.learner = small_forest(10);
  cfg.learner.seed = 99;
  const BoostFit fit = boost_fit(d, cfg);

  Vector f = Vector::Zero(d.y().size());
  for (std::size_t m = 1; m <= cfg.max_iter; ++m) {
    const Vector r = d.y() - f;
    const FittedPredictor stage = fit_learner(cfg.learner.with_seed(derive_seed(99, m)), r, d.x());
    CHECK(stage->predict(d.x()) == fit.stages()[m - 1]->predict(d.x()));
    f += cfg.nu * stage->fitted_values(d.x());
    CHECK(fit.trace()[m - 1] == doctest::Approx((d.y() - f).squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("property: the linear learner never increases the gamma = 1 objective") {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    const EnvDataset d = centered_m1(120, seed);
    BoostConfig cfg;
    cfg.gamma = 1.0;
    cfg.max_iter = 60;
    cfg.learner = linear_learner();
    const BoostFit fit = boost_fit(d, cfg);
    double prev = fit.initial_rss();
    for (double v : fit.trace()) {
      CHECK(v <= prev * (1.0 + 1e-12));
      prev = v;
    }
  }
}

TEST_CASE("property: the stop2 iterate stays within the overshoot band") {
  for (std::uint64_t seed = 40; seed < 45; ++seed) {
    const EnvDataset d = centered_m1(150, seed);
    BoostConfig cfg;
    cfg.max_iter = 40;
    cfg.learner = small_forest(10);
    const BoostFit fit = boost_fit(d, cfg);
    const double lo = *std::min_element(fit.trace().begin(), fit.trace().end());
    CHECK(fit.trace()[fit.m_stop() - 1] <= 1.1 * lo);
  }
}

TEST_CASE("benchmark fit on (X, A)") {
  SUBCASE("a single-leaf forest on independent data recovers the energy of W Y") {
    std::mt19937_64 rng(50);
    const std::size_t n = 200;
    const EnvDataset d = center(EnvDataset(testsupport::gaussian_vector(n, rng), testsupport::gaussian_matrix(n, 2, rng),
                                           testsupport::gaussian_matrix(n, 1, rng)));
    LearnerSpec s = small_forest(20);
    s.tree.min_leaf = n;
    const double rss = fit_g_opt(d, 7.0, s);
    const Vector wy = transform_w(7.0, build_projector(d.a()), d.y());
    CHECK(rss == doctest::Approx(wy.squaredNorm()).epsilon(0.05));
  }
  SUBCASE("linear learner with gamma = 1 is least squares on the augmented design") {
    const EnvDataset d = centered_m1(200, 51);
    Matrix xa(d.x().rows(), d.x().cols() + d.a().cols());
    xa << d.x(), d.a();
    const double expected = ols_with_intercept(xa, d.y()).rss;
    CHECK(fit_g_opt(d, 1.0, linear_learner()) == doctest::Approx(expected).epsilon(1e-10));
  }
  SUBCASE("LM+RF fits a nonlinear response at least as well as the linear learner") {
    std::vector<double> diff;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const EnvDataset d = centered_m1(200, 60 + seed);
      LearnerSpec lmrf = small_forest(30);
      lmrf.kind = LearnerKind::lm_rf;
      diff.push_back(fit_g_opt(d, 7.0, lmrf) - fit_g_opt(d, 7.0, linear_learner()));
    }
    CHECK(median(diff) <= 0.0);
  }
}

TEST_CASE("stop3 uses the benchmark and records it") {
  const EnvDataset d = centered_m1(150, 70);
  BoostConfig cfg;
  cfg.max_iter = 30;
  cfg.stop_rule = StopRule::stop3;
  cfg.learner = small_forest(10);
  cfg.g_opt_learner = small_forest(10);
  const BoostFit fit = boost_fit(d, cfg);
  REQUIRE(fit.g_opt_rss());
  const StopChoice expected = choose_stop(fit.trace(), StopRule::stop3, *fit.g_opt_rss());
  CHECK(fit.m_stop() == expected.m_stop);
}

TEST_CASE("divergent steps abort with the partial trace") {
  const EnvDataset d = centered_m1(100, 80);
  BoostConfig cfg;
  cfg.gamma = 1e6;
  cfg.nu = 0.9;
  cfg.max_iter = 500;
  cfg.learner = linear_learner();
  try {
    boost_fit(d, cfg);
    FAIL("expected BoostAborted");
  } catch (const BoostAborted& e) {
    CHECK_FALSE(e.partial_trace().empty());
    CHECK(e.partial_trace().size() < 500);
    CHECK(e.exit_code() == 4);
  }
}

TEST_CASE("boost configuration validation") {
  const EnvDataset d = centered_m1(60, 90);
  BoostConfig cfg;
  cfg.learner = small_forest(2);
  cfg.max_iter = 2;
  cfg.nu = 0.0;
  CHECK_THROWS_AS(boost_fit(d, cfg), UsageError);
  cfg.nu = 1.0;
  CHECK_THROWS_AS(boost_fit(d, cfg), UsageError);
  cfg.nu = 0.1;
  cfg.max_iter = 0;
  CHECK_THROWS_AS(boost_fit(d, cfg), UsageError);
  cfg.max_iter = 2;
  cfg.stop_rule = StopRule::stop3;
  CHECK_THROWS_AS(boost_fit(d, cfg), UsageError);
  cfg.stop_rule = StopRule::stop1;
  cfg.gamma = -1.0;
  CHECK_THROWS_AS(boost_fit(d, cfg), UsageError);
  CHECK_THROWS_AS(stop_rule_from_string("stop4"), UsageError);
}

TEST_CASE("select changes only the stopping iteration") {
  const EnvDataset d = centered_m1(100, 91);
  BoostConfig cfg;
  cfg.max_iter = 10;
  cfg.learner = small_forest(5);
  const BoostFit fit = boost_fit(d, cfg);
  const BoostFit s = fit.select(4);
  CHECK(s.m_stop() == 4);
  CHECK(s.predict(d.x()) == fit.predict_at(d.x(), 4));
  CHECK(s.trace() == fit.trace());
  CHECK_THROWS_AS(fit.select(0), UsageError);
  CHECK_THROWS_AS(fit.select(11), UsageError);
}

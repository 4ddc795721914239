#include "causalreg/error.hpp"
#include "causalreg/numerics.hpp"
#include "causalreg/simgen.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace causalreg;

namespace {

double sample_sd(const Vector& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

double corr(const Vector& a, const Vector& b) {
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

}  // namespace

TEST_CASE("linear illustration dimensions and moments") {
  const Simulation sim = gen_linear_illustration(100000, 1);
  CHECK(sim.spec.p() == 10);
  CHECK(sim.spec.r() == 2);
  CHECK(sim.spec.q() == 1);
  const Vector& y = sim.data.y();
  const double se = sample_sd(y) / std::sqrt(static_cast<double>(y.size()));
  CHECK(std::abs(y.mean()) < 3.0 * se);
}

TEST_CASE("linear illustration: removing the structural part of Y leaves noise independent of A") {
  const Simulation sim = gen_linear_illustration(100000, 2);
  const EnvDataset& d = sim.data;
  // H + eps_Y, with Var = 1 + 0.25^2
  const Vector rest = d.y() - 3.0 * d.x().col(1) - 3.0 * d.x().col(2) + 2.0 * d.a().col(0);
  const double bound = 3.0 / std::sqrt(static_cast<double>(d.n()));
  CHECK(std::abs(corr(rest, d.a().col(0))) < bound);
  CHECK(std::abs(corr(rest, d.a().col(1))) < bound);
  CHECK(sample_sd(rest) * sample_sd(rest) == doctest::Approx(1.0625).epsilon(0.02));

  const LinearFit fit = ols(d.a(), rest);
  CHECK(std::abs(fit.beta(0)) < 0.02);
  CHECK(std::abs(fit.beta(1)) < 0.02);
}

TEST_CASE("linear illustration loadings are drawn per covariate unless shared") {
  const SemSpec spec = make_spec(ModelId::linear_illustration, 3);
  CHECK(spec.sem.m.row(0) != spec.sem.m.row(1));
  SimOptions shared;
  shared.shared_loadings = true;
  const SemSpec s = make_spec(ModelId::linear_illustration, 3, shared);
  for (Eigen::Index j = 1; j < 10; ++j) CHECK(s.sem.m.row(j) == s.sem.m.row(0));
}

TEST_CASE("structural step function") {
  CHECK(step_function(-1.0, 0.0) == 2.0);
  CHECK(step_function(1.0, 2.0) == 0.0);
  CHECK(step_function(-0.2, 0.0) == 1.0);
  CHECK(step_function(-1.0, 1.5) == 1.0);
}

TEST_CASE("M1 and M2 response equations without noise") {
  SimOptions quiet;
  quiet.zero_noise = true;
  const EnvDataset m1 = gen_m1(1, 1).data;  // exercise the fixed-coefficient entry point
  CHECK(m1.p() == 10);
  for (ModelId id : {ModelId::m1, ModelId::m2}) {
    const EnvDataset d = simulate(id, 500, 4, quiet).data;
    const Vector x2 = d.x().col(1), x3 = d.x().col(2);
    for (Eigen::Index i = 0; i < d.x().rows(); ++i) {
      const double lin = id == ModelId::m2 ? x2(i) + x3(i) : 0.0;
      CHECK(d.y()(i) == doctest::Approx(lin + step_function(x2(i), x3(i)) - 2.0 * d.a()(i, 0)).epsilon(1e-12));
      CHECK(d.x()(i, 4) == doctest::Approx(d.a()(i, 0) + d.a()(i, 1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("covariates of M1 are nearly collinear") {
  const double c = mean_abs_offdiag_correlation(gen_m1(300, 5).data.x());
  CHECK(c == doctest::Approx(0.97).epsilon(0.02 / 0.97));
}

TEST_CASE("M3 loadings") {
  const Simulation a = gen_m3(300, 6);
  CHECK(a.spec.p() == 10);
  CHECK(a.spec.r() == 2);
  CHECK(a.spec.q() == 1);
  CHECK(gen_m3(300, 7).spec.sem.m.topRows(10) != a.spec.sem.m.topRows(10));

  SUBCASE("all-ones loadings reduce to the M1 covariate equation") {
    SimOptions ones;
    ones.gamma_override = Matrix::Ones(2, 10);
    const SemSpec m3 = make_spec(ModelId::m3, 8, ones);
    const SemSpec m1 = make_spec(ModelId::m1, 8);
    CHECK(m3.sem.m.topRows(10) == m1.sem.m.topRows(10));
    const EnvDataset d3 = sample_from_spec(m3, 200, PerturbationKind::none, 9, true);
    const EnvDataset d1 = sample_from_spec(m1, 200, PerturbationKind::none, 9, true);
    CHECK(testsupport::max_abs(d3.x() - d1.x()) < 1e-12);
    CHECK(m3.sem.noise_sd(0) == 1.0);
    CHECK(m1.sem.noise_sd(0) == 0.5);
  }
  SUBCASE("override shape is checked") {
    SimOptions bad;
    bad.gamma_override = Matrix::Ones(3, 10);
    CHECK_THROWS_AS(make_spec(ModelId::m3, 1, bad), UsageError);
  }
}

TEST_CASE("discrete anchors come in two blocks") {
  const Simulation sim = gen_m2_discr(300, 10);
  const Matrix& a = sim.data.a();
  for (Eigen::Index i = 0; i < 300; ++i) {
    CHECK(a(i, 0) == (i < 150 ? 1.0 : 0.0));
    CHECK(a(i, 1) == (i < 150 ? 0.0 : 1.0));
  }
  REQUIRE(sim.data.env_labels());
  CHECK((*sim.data.env_labels())[0] == 1);
  CHECK((*sim.data.env_labels())[299] == 2);

  const EnvDataset out = gen_out_of_sample(sim.spec, PerturbationKind::discrete_amplify_3x, 2000, 11);
  CHECK(out.a()(0, 0) == 3.0);
  CHECK(out.a()(1999, 1) == 3.0);
  CHECK(out.a().sum() == 3.0 * 2000);

  SimOptions quiet;
  quiet.zero_noise = true;
  const EnvDataset d = gen_m2_discr(300, 12, quiet).data;
  CHECK(testsupport::max_abs((d.x().topRows(150).array() - 2.0).matrix()) < 1e-12);
  CHECK(testsupport::max_abs((d.x().bottomRows(150).array() + 2.0).matrix()) < 1e-12);
  quiet.m2_discr_flipped = true;
  CHECK(testsupport::max_abs((gen_m2_discr(300, 12, quiet).data.x().topRows(150).array() + 2.0).matrix()) < 1e-12);

  CHECK_THROWS_AS(gen_m2_discr(301, 1), UsageError);
}

TEST_CASE("out-of-sample perturbations") {
  SUBCASE("no perturbation keeps the training law") {
    const SemSpec spec = make_spec(ModelId::m1, 13);
    int non_significant = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
      const Vector y1 = sample_from_spec(spec, 300, PerturbationKind::none, 1000 + k).y();
      const Vector y2 = gen_out_of_sample(spec, PerturbationKind::none, 2000, 5000 + k).y();
      const double se = std::sqrt(sample_sd(y1) * sample_sd(y1) / 300.0 + sample_sd(y2) * sample_sd(y2) / 2000.0);
      if (std::abs(y1.mean() - y2.mean()) / se < 1.959963984540054) ++non_significant;
    }
    CHECK(non_significant >= 90);
  }
  SUBCASE("sqrt(10) amplification multiplies the anchor variance by ten") {
    const SemSpec spec = make_spec(ModelId::linear_illustration, 14);
    const Matrix a_in = sample_from_spec(spec, 100000, PerturbationKind::none, 15).a();
    const Matrix a_out = gen_out_of_sample(spec, PerturbationKind::sqrt10_amplify, 100000, 16).a();
    for (Eigen::Index k = 0; k < 2; ++k) {
      const double ratio = std::pow(sample_sd(a_out.col(k)) / sample_sd(a_in.col(k)), 2);
      CHECK(ratio == doctest::Approx(10.0).epsilon(0.03));
    }
  }
  SUBCASE("strong shift centres the anchors at ten") {
    const Matrix a = gen_out_of_sample(make_spec(ModelId::m1, 17), PerturbationKind::strong_shift, 2000, 18).a();
    const double se = std::sqrt(2.0 / static_cast<double>(a.size()));
    CHECK(std::abs(a.mean() - 10.0) < 3.0 * se);
  }
  SUBCASE("moderate shift has mean one and variance five") {
    const Matrix a = gen_out_of_sample(make_spec(ModelId::m1, 19), PerturbationKind::moderate_shift, 50000, 20).a();
    const Vector flat = Eigen::Map<const Vector>(a.data(), a.size());
    CHECK(std::abs(flat.mean() - 1.0) < 3.0 * std::sqrt(5.0 / static_cast<double>(flat.size())));
    CHECK(std::pow(sample_sd(flat), 2) == doctest::Approx(5.0).epsilon(0.03));
  }
  SUBCASE("incompatible perturbations") {
    CHECK_THROWS_AS(gen_out_of_sample(make_spec(ModelId::m1, 1), PerturbationKind::discrete_amplify_3x, 10, 1),
                    UsageError);
    CHECK_THROWS_AS(gen_out_of_sample(make_spec(ModelId::m2_discr, 1), PerturbationKind::strong_shift, 10, 1),
                    UsageError);
  }
}

TEST_CASE("property: simulations are deterministic in (model, n, seed)") {
  for (ModelId id : {ModelId::linear_illustration, ModelId::m1, ModelId::m2, ModelId::m3, ModelId::m2_discr,
                     ModelId::icp_shift, ModelId::random_linear}) {
    for (std::uint64_t seed : {1ULL, 99ULL}) {
      const Simulation a = simulate(id, 100, seed);
      const Simulation b = simulate(id, 100, seed);
      CHECK(a.data.y() == b.data.y());
      CHECK(a.data.x() == b.data.x());
      CHECK(a.data.a() == b.data.a());
    }
  }
}

TEST_CASE("property: a reloaded spec reproduces out-of-sample draws") {
  for (ModelId id : {ModelId::linear_illustration, ModelId::m3, ModelId::m2_discr, ModelId::random_linear}) {
    const SemSpec spec = make_spec(id, 21);
    const SemSpec back = sem_spec_from_json(sem_spec_to_json(spec));
    CHECK(back.sem.b == spec.sem.b);
    CHECK(back.sem.m == spec.sem.m);
    CHECK(back.sem.noise_sd == spec.sem.noise_sd);
    const PerturbationKind kind = id == ModelId::m2_discr ? PerturbationKind::discrete_amplify_3x
                                  : id == ModelId::random_linear ? PerturbationKind::none
                                                                 : PerturbationKind::moderate_shift;
    const EnvDataset a = gen_out_of_sample(spec, kind, 200, 22);
    const EnvDataset b = gen_out_of_sample(back, kind, 200, 22);
    CHECK(a.y() == b.y());
    CHECK(a.x() == b.x());
  }
  CHECK_THROWS_AS(sem_spec_from_json("{\"model\": \"m1\"}"), DataError);
  CHECK_THROWS_AS(sem_spec_from_json("not json"), DataError);
}

TEST_CASE("ICP shift model parents") {
  const SemSpec spec = make_spec(ModelId::icp_shift, 1);
  CHECK(spec.parents_of_y() == std::vector<std::size_t>{1, 2});
  CHECK(make_spec(ModelId::m1, 1).parents_of_y() == std::vector<std::size_t>{1, 2});
  CHECK(make_spec(ModelId::random_linear, 1).p() == 3);
  CHECK(make_spec(ModelId::linear_illustration, 1).parents_of_y() == std::vector<std::size_t>{1, 2});
}

TEST_CASE("model and perturbation names") {
  for (ModelId id : {ModelId::linear_illustration, ModelId::m1, ModelId::m2, ModelId::m3, ModelId::m2_discr})
    CHECK(model_from_string(to_string(id)) == id);
  for (PerturbationKind k : {PerturbationKind::none, PerturbationKind::moderate_shift, PerturbationKind::strong_shift,
                             PerturbationKind::sqrt10_amplify, PerturbationKind::discrete_amplify_3x})
    CHECK(perturbation_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(model_from_string("m9"), UsageError);
}

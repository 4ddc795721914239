#include "causalreg/error.hpp"
#include "causalreg/importance.hpp"
#include "causalreg/learners.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>

using namespace causalreg;

namespace {

class ConstantPredictor final : public Predictor {
 public:
  explicit ConstantPredictor(double c) : c_(c) {}
  Vector predict(const Matrix& x) const override { return Vector::Constant(x.rows(), c_); }

 private:
  double c_;
};

EnvDataset two_signal_data(std::size_t n, std::mt19937_64& rng) {
  const Matrix x = testsupport::gaussian_matrix(static_cast<Eigen::Index>(n), 4, rng);
  const Vector y = 2.0 * x.col(1) + (x.col(3).array() > 0.0).cast<double>().matrix() +
                   0.3 * testsupport::gaussian_vector(static_cast<Eigen::Index>(n), rng);
  return EnvDataset(y, x, Matrix::Zero(static_cast<Eigen::Index>(n), 1));
}

bool is_permutation_of_1_to_p(std::vector<std::size_t> ranks) {
  std::sort(ranks.begin(), ranks.end());
  for (std::size_t k = 0; k < ranks.size(); ++k)
    if (ranks[k] != k + 1) return false;
  return true;
}

}  // namespace

TEST_CASE("identity permutation gives zero importance") {
  std::mt19937_64 rng(1);
  const EnvDataset d = two_signal_data(150, rng);
  TreeParams params;
  params.n_trees = 20;
  const auto forest = fit_forest(d.y(), d.x(), params, 3);
  ImportanceOptions opts;
  opts.identity_permutation = true;
  opts.repetitions = 3;
  const ImportanceReport r = permutation_importance(*forest, d, opts);
  CHECK(r.imp_rss.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.imp_med.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a covariate the tree never splits on has zero importance") {
  std::mt19937_64 rng(2);
  const EnvDataset d = two_signal_data(200, rng);
  TreeParams params;
  params.max_depth = 2;
  const auto tree = fit_tree(d.y(), d.x(), params);
  const ImportanceReport r = permutation_importance(*tree, d);
  bool found_unused = false;
  for (std::size_t j = 0; j < 4; ++j) {
    if (tree->uses_feature(j)) continue;
    found_unused = true;
    CHECK(r.imp_rss(static_cast<Eigen::Index>(j)) == 0.0);
    CHECK(r.imp_med(static_cast<Eigen::Index>(j)) == 0.0);
  }
  CHECK(found_unused);
  CHECK(r.rank_rss[1] == 4);
}

TEST_CASE("property: importances are bounded below and ranks are permutations") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const EnvDataset d = two_signal_data(40 + rng() % 100, rng);
    TreeParams params;
    params.n_trees = 10;
    const auto forest = fit_forest(d.y(), d.x(), params, trial);
    ImportanceOptions opts;
    opts.seed = static_cast<std::uint64_t>(trial);
    opts.repetitions = 1 + rng() % 3;
    const ImportanceReport r = permutation_importance(*forest, d, opts);
    CHECK(r.imp_rss.minCoeff() >= -1.0);
    CHECK(r.imp_med.minCoeff() >= -1.0);
    CHECK(is_permutation_of_1_to_p(r.rank_rss));
    CHECK(is_permutation_of_1_to_p(r.rank_med));
  }
}

TEST_CASE("property: the same seed reproduces the report") {
  std::mt19937_64 rng(4);
  const EnvDataset d = two_signal_data(120, rng);
  const auto lin = fit_linear(d.y(), d.x());
  ImportanceOptions opts;
  opts.seed = 17;
  opts.repetitions = 4;
  const ImportanceReport a = permutation_importance(*lin, d, opts);
  opts.threads = 3;
  const ImportanceReport b = permutation_importance(*lin, d, opts);
  CHECK(a.imp_rss == b.imp_rss);
  CHECK(a.imp_med == b.imp_med);
  opts.seed = 18;
  CHECK(permutation_importance(*lin, d, opts).imp_rss != a.imp_rss);
}

TEST_CASE("mean-only predictor on independent data gives zero importance") {
  std::mt19937_64 rng(5);
  const EnvDataset d(testsupport::gaussian_vector(80, rng), testsupport::gaussian_matrix(80, 3, rng),
                     Matrix::Zero(80, 1));
  const ConstantPredictor mean_only(d.y().mean());
  ImportanceOptions opts;
  opts.repetitions = 5;
  const ImportanceReport r = permutation_importance(mean_only, d, opts);
  CHECK(r.imp_rss.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.imp_med.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.rank_rss == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("ranks run upward with ties broken by index") {
  CHECK(importance_ranks((Vector(4) << 0.3, -0.1, 0.3, 2.0).finished()) == std::vector<std::size_t>{2, 1, 3, 4});
}

TEST_CASE("CSV layout") {
  ImportanceReport r;
  r.imp_rss = (Vector(2) << 0.5, 0.25).finished();
  r.imp_med = (Vector(2) << 0.125, 1.0).finished();
  r.rank_rss = {2, 1};
  r.rank_med = {1, 2};
  std::istringstream in(importance_csv(r));
  std::string line;
  std::getline(in, line);
  CHECK(line == "variable,imp_rss,imp_med,rank_rss,rank_med");
  std::getline(in, line);
  CHECK(line == "X1,0.5,0.125,2,1");
  std::getline(in, line);
  CHECK(line == "X2,0.25,1,1,2");
}

TEST_CASE("OOB importance singles out the signal covariates") {
  std::mt19937_64 rng(6);
  const EnvDataset d = two_signal_data(300, rng);
  TreeParams params;
  params.n_trees = 100;
  const auto forest = fit_forest(d.y(), d.x(), params, 8);
  const Vector imp = forest_oob_importance(*forest, d.x(), d.y(), 2);
  const auto ranks = importance_ranks(imp);
  CHECK(ranks[1] == 4);
  CHECK(ranks[3] == 3);
  CHECK(forest_oob_importance(*forest, d.x(), d.y(), 2) == imp);
}

TEST_CASE("importance input validation") {
  const EnvDataset one(Vector::Ones(1), Matrix::Ones(1, 1), Matrix::Zero(1, 1));
  CHECK_THROWS_AS(permutation_importance(ConstantPredictor(0.0), one), DataError);
  std::mt19937_64 rng(7);
  const EnvDataset d = two_signal_data(30, rng);
  ImportanceOptions opts;
  opts.repetitions = 0;
  CHECK_THROWS_AS(permutation_importance(ConstantPredictor(0.0), d, opts), UsageError);
}

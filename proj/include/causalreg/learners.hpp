#pragma once

#include "causalreg/data_model.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace causalreg {

enum class LearnerKind { tree, forest, linear, lm_rf };

std::string to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);

struct TreeParams {
  std::optional<std::size_t> max_depth;  // unlimited when empty
  std::size_t min_leaf = 5;
  std::optional<std::size_t> mtry;       // default max(1, floor(p/3)) for forests, p for trees
  std::size_t n_trees = 100;
  bool bootstrap = true;
};

struct LearnerSpec {
  LearnerKind kind = LearnerKind::forest;
  TreeParams tree;
  std::uint64_t seed = 1;

  /// Throws UsageError when the parameters are invalid for p covariates.
  void validate(std::size_t p) const;

  /// Same learner with a different seed.
  LearnerSpec with_seed(std::uint64_t s) const {
    LearnerSpec out = *this;
    out.seed = s;
    return out;
  }
};

/// Flat key/value form used by experiment configs: kind, max_depth, min_leaf,
/// mtry, n_trees, bootstrap, seed. Unknown keys are a UsageError.
LearnerSpec learner_spec_from_map(const std::map<std::string, std::string>& values);
std::map<std::string, std::string> learner_spec_to_map(const LearnerSpec& spec);

/// splitmix64 finaliser applied to (seed, index); used for every per-tree,
/// per-stage and per-replicate stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Vector predict(const Matrix& x) const = 0;

  /// Fitted values on the training design `x`. Forests return out-of-bag
  /// predictions here (falling back to the full forest for rows that were
  /// never out of bag); other learners return predict(x).
  virtual Vector fitted_values(const Matrix& x) const { return predict(x); }
};

using FittedPredictor = std::shared_ptr<const Predictor>;

/// Regression tree stored as a flat node array. The right child of an inner
/// node always sits directly after its left child.
class Tree final : public Predictor {
 public:
  struct Node {
    double value = 0.0;       // threshold for inner nodes, mean for leaves
    std::int32_t feature = -1;
    std::uint32_t left = 0;
  };

  explicit Tree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  Vector predict(const Matrix& x) const override;
  double predict_row(const Matrix& x, Eigen::Index row) const;

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t leaf_count() const;
  bool uses_feature(std::size_t j) const;

 private:
  std::vector<Node> nodes_;
};

/// CART on the rows listed in `rows` (repeats count as separate
/// observations). Splits maximise the reduction in squared error at the
/// midpoint between consecutive distinct values; x <= threshold goes left.
/// Ties keep the first candidate found, scanning features in increasing index
/// and thresholds in increasing value. `feature_seed` drives the per-node mtry
/// draw and is unused when mtry >= p.
Tree fit_tree_on_rows(const Vector& u, const Matrix& x, const std::vector<std::uint32_t>& rows,
                      const TreeParams& params, std::uint64_t feature_seed);

/// Single tree on all rows, mtry = p unless set.
std::shared_ptr<const Tree> fit_tree(const Vector& u, const Matrix& x, const TreeParams& params = {},
                                     std::uint64_t seed = 1);

class Forest final : public Predictor {
 public:
  Forest(std::vector<Tree> trees, std::vector<std::vector<std::uint32_t>> inbag, Vector oob_prediction,
         std::vector<std::uint32_t> oob_count)
      : trees_(std::move(trees)),
        inbag_(std::move(inbag)),
        oob_prediction_(std::move(oob_prediction)),
        oob_count_(std::move(oob_count)) {}

  Vector predict(const Matrix& x) const override;
  Vector fitted_values(const Matrix& x) const override;

  const std::vector<Tree>& trees() const noexcept { return trees_; }
  /// In-bag multiplicity of each training row, per tree.
  const std::vector<std::vector<std::uint32_t>>& inbag() const noexcept { return inbag_; }
  /// Mean prediction over trees for which the row was out of bag; NaN when the
  /// row was in bag for every tree.
  const Vector& oob_prediction() const noexcept { return oob_prediction_; }
  const std::vector<std::uint32_t>& oob_count() const noexcept { return oob_count_; }

 private:
  std::vector<Tree> trees_;
  std::vector<std::vector<std::uint32_t>> inbag_;
  Vector oob_prediction_;
  std::vector<std::uint32_t> oob_count_;
};

/// Tree t uses the stream derive_seed(seed, t) for both its bootstrap draw and
/// its feature subsampling.
std::shared_ptr<const Forest> fit_forest(const Vector& u, const Matrix& x, const TreeParams& params,
                                         std::uint64_t seed, std::size_t threads = 1);

class LinearPredictor final : public Predictor {
 public:
  LinearPredictor(double intercept, Vector beta) : intercept_(intercept), beta_(std::move(beta)) {}
  Vector predict(const Matrix& x) const override;
  double intercept() const noexcept { return intercept_; }
  const Vector& beta() const noexcept { return beta_; }

 private:
  double intercept_;
  Vector beta_;
};

/// Least squares with intercept.
std::shared_ptr<const LinearPredictor> fit_linear(const Vector& u, const Matrix& x);

class LmRfPredictor final : public Predictor {
 public:
  LmRfPredictor(std::shared_ptr<const LinearPredictor> linear, std::shared_ptr<const Forest> forest)
      : linear_(std::move(linear)), forest_(std::move(forest)) {}
  Vector predict(const Matrix& x) const override;
  Vector fitted_values(const Matrix& x) const override;
  const LinearPredictor& linear() const noexcept { return *linear_; }
  const Forest& forest() const noexcept { return *forest_; }

 private:
  std::shared_ptr<const LinearPredictor> linear_;
  std::shared_ptr<const Forest> forest_;
};

/// Linear fit with intercept, then a forest on its residuals.
std::shared_ptr<const LmRfPredictor> fit_lm_rf(const Vector& u, const Matrix& x, const TreeParams& params,
                                               std::uint64_t seed, std::size_t threads = 1);

FittedPredictor fit_learner(const LearnerSpec& spec, const Vector& u, const Matrix& x,
                            std::size_t threads = 1);

}  // namespace causalreg

#include "causalreg/learners.hpp"

#include "causalreg/error.hpp"
#include "causalreg/numerics.hpp"
#include "causalreg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace causalreg {

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::tree: return "tree";
    case LearnerKind::forest: return "rf";
    case LearnerKind::linear: return "linear";
    case LearnerKind::lm_rf: return "lmrf";
  }
  return "unknown";
}

LearnerKind learner_kind_from_string(const std::string& name) {
  if (name == "tree") return LearnerKind::tree;
  if (name == "rf" || name == "forest") return LearnerKind::forest;
  if (name == "linear" || name == "lm") return LearnerKind::linear;
  if (name == "lmrf" || name == "lm_rf" || name == "lm+rf") return LearnerKind::lm_rf;
  throw UsageError("unknown learner '" + name + "' (expected tree, rf, linear or lmrf)");
}

void LearnerSpec::validate(std::size_t p) const {
  if (kind == LearnerKind::linear) return;
  if (tree.min_leaf < 1) throw UsageError("min_leaf must be at least 1");
  if (tree.n_trees < 1) throw UsageError("n_trees must be at least 1");
  if (tree.mtry && (*tree.mtry < 1 || *tree.mtry > p))
    throw UsageError("mtry must lie in [1, p] (p=" + std::to_string(p) + ")");
  if (tree.max_depth && *tree.max_depth == 0) throw UsageError("max_depth must be positive");
}

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
  try {
    if (value.empty() || value[0] == '-') throw std::invalid_argument(value);
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError("learner option " + key + ": expected a nonnegative integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError("learner option " + key + ": expected true or false, got '" + value + "'");
}

}  // namespace

LearnerSpec learner_spec_from_map(const std::map<std::string, std::string>& values) {
  LearnerSpec spec;
  for (const auto& [key, value] : values) {
    if (key == "kind") spec.kind = learner_kind_from_string(value);
    else if (key == "max_depth") spec.tree.max_depth = parse_count(key, value);
    else if (key == "min_leaf") spec.tree.min_leaf = parse_count(key, value);
    else if (key == "mtry") spec.tree.mtry = parse_count(key, value);
    else if (key == "n_trees") spec.tree.n_trees = parse_count(key, value);
    else if (key == "bootstrap") spec.tree.bootstrap = parse_bool(key, value);
    else if (key == "seed") spec.seed = parse_count(key, value);
    else throw UsageError("unknown learner option '" + key + "'");
  }
  return spec;
}

std::map<std::string, std::string> learner_spec_to_map(const LearnerSpec& spec) {
  std::map<std::string, std::string> out;
  out["kind"] = to_string(spec.kind);
  if (spec.tree.max_depth) out["max_depth"] = std::to_string(*spec.tree.max_depth);
  out["min_leaf"] = std::to_string(spec.tree.min_leaf);
  if (spec.tree.mtry) out["mtry"] = std::to_string(*spec.tree.mtry);
  out["n_trees"] = std::to_string(spec.tree.n_trees);
  out["bootstrap"] = spec.tree.bootstrap ? "true" : "false";
  out["seed"] = std::to_string(spec.seed);
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Tree::predict_row(const Matrix& x, Eigen::Index row) const {
  std::size_t k = 0;
  while (nodes_[k].feature >= 0) {
    const Node& nd = nodes_[k];
    k = x(row, nd.feature) <= nd.value ? nd.left : nd.left + 1;
  }
  return nodes_[k].value;
}

Vector Tree::predict(const Matrix& x) const {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict_row(x, i);
  return out;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& nd) { return nd.feature < 0; }));
}

bool Tree::uses_feature(std::size_t j) const {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [j](const Node& nd) { return nd.feature == static_cast<std::int32_t>(j); });
}

namespace {

// Rows of x sorted by each column, and each row's position in that order.
// Shared by all trees of a forest so that nodes can avoid comparison sorts.
struct ColumnOrder {
  std::vector<std::vector<std::uint32_t>> order;
  std::vector<std::vector<std::uint32_t>> position;
};

ColumnOrder column_order(const Matrix& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  ColumnOrder co;
  co.order.resize(static_cast<std::size_t>(x.cols()));
  co.position.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& ord = co.order[static_cast<std::size_t>(f)];
    ord.resize(n);
    std::iota(ord.begin(), ord.end(), 0U);
    std::stable_sort(ord.begin(), ord.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    auto& pos = co.position[static_cast<std::size_t>(f)];
    pos.resize(n);
    for (std::size_t k = 0; k < n; ++k) pos[ord[k]] = static_cast<std::uint32_t>(k);
  }
  return co;
}

Tree grow_tree(const Vector& u, const Matrix& x, const ColumnOrder& co,
               const std::vector<std::uint32_t>& rows, const TreeParams& params,
               std::uint64_t feature_seed) {
  const auto p = static_cast<std::size_t>(x.cols());
  const auto n = static_cast<std::size_t>(x.rows());
  if (u.size() != x.rows()) throw DataError("tree: response and design differ in length");
  if (rows.empty()) throw DataError("tree: no training rows");
  const std::size_t mtry = std::clamp<std::size_t>(params.mtry.value_or(p), 1, std::max<std::size_t>(p, 1));
  const std::size_t min_leaf = std::max<std::size_t>(params.min_leaf, 1);
  std::mt19937_64 rng(feature_seed);

  struct Task {
    std::uint32_t node;
    std::size_t begin;
    std::size_t end;
    std::size_t depth;
  };

  std::vector<std::uint32_t> idx = rows;
  std::vector<Tree::Node> nodes(1);
  std::vector<Task> stack{{0, 0, idx.size(), 0}};
  std::vector<double> vals;
  std::vector<double> us;
  std::vector<std::uint64_t> keys;
  std::vector<std::uint32_t> multiplicity(n, 0);
  std::vector<std::size_t> features(p);

  while (!stack.empty()) {
    const Task t = stack.back();
    stack.pop_back();
    const std::size_t count = t.end - t.begin;

    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = t.begin; i < t.end; ++i) {
      const double v = u(idx[i]);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = sum / static_cast<double>(count);
    nodes[t.node].value = mean;

    const bool depth_capped = params.max_depth && t.depth >= *params.max_depth;
    if (count < 2 * min_leaf || depth_capped || lo == hi || p == 0) continue;

    double node_ss = 0.0;
    for (std::size_t i = t.begin; i < t.end; ++i) node_ss += (u(idx[i]) - mean) * (u(idx[i]) - mean);
    const double base = sum * sum / static_cast<double>(count);

    std::iota(features.begin(), features.end(), std::size_t{0});
    if (mtry < p) {
      for (std::size_t i = 0; i < mtry; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, p - 1);
        std::swap(features[i], features[pick(rng)]);
      }
      std::sort(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(mtry));
    }

    // Large nodes walk the presorted column; small ones sort their own rows.
    const bool scan = static_cast<double>(count) * std::log2(static_cast<double>(count) + 1.0) >
                      2.0 * static_cast<double>(n);
    if (scan) {
      for (std::size_t i = t.begin; i < t.end; ++i) ++multiplicity[idx[i]];
    }

    // Candidates must beat the incumbent by more than rounding noise, so that
    // ties keep the first candidate whatever order the rows arrived in.
    const double tie_tol = 1e-11 * (node_ss + std::abs(base));
    double best_gain = 0.0;
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;
    for (std::size_t c = 0; c < mtry; ++c) {
      const std::size_t f = features[c];
      const auto fi = static_cast<Eigen::Index>(f);
      vals.clear();
      us.clear();
      if (scan) {
        for (const std::uint32_t r : co.order[f]) {
          for (std::uint32_t k = 0; k < multiplicity[r]; ++k) {
            vals.push_back(x(r, fi));
            us.push_back(u(r));
          }
        }
      } else {
        keys.clear();
        for (std::size_t i = t.begin; i < t.end; ++i)
          keys.push_back((static_cast<std::uint64_t>(co.position[f][idx[i]]) << 32) | idx[i]);
        std::sort(keys.begin(), keys.end());
        for (const std::uint64_t key : keys) {
          const auto r = static_cast<std::uint32_t>(key & 0xffffffffULL);
          vals.push_back(x(r, fi));
          us.push_back(u(r));
        }
      }

      double left = 0.0;
      for (std::size_t i = 0; i + 1 < count; ++i) {
        left += us[i];
        const std::size_t nl = i + 1;
        const std::size_t nr = count - nl;
        if (nr < min_leaf) break;
        if (nl < min_leaf || vals[i] == vals[i + 1]) continue;
        const double right = sum - left;
        const double gain = left * left / static_cast<double>(nl) +
                            right * right / static_cast<double>(nr) - base;
        if (gain > best_gain + tie_tol) {
          best_gain = gain;
          best_feature = static_cast<std::int32_t>(f);
          double mid = 0.5 * (vals[i] + vals[i + 1]);
          if (!(mid < vals[i + 1])) mid = vals[i];
          best_threshold = mid;
        }
      }
    }
    if (scan) {
      for (std::size_t i = t.begin; i < t.end; ++i) multiplicity[idx[i]] = 0;
    }
    if (best_feature < 0 || !(best_gain > 1e-12 * node_ss)) continue;

    const auto first = idx.begin() + static_cast<std::ptrdiff_t>(t.begin);
    const auto last = idx.begin() + static_cast<std::ptrdiff_t>(t.end);
    const auto split = std::stable_partition(first, last, [&](std::uint32_t r) {
      return x(r, best_feature) <= best_threshold;
    });
    const std::size_t mid_pos = t.begin + static_cast<std::size_t>(split - first);

    const auto left_child = static_cast<std::uint32_t>(nodes.size());
    nodes[t.node].feature = best_feature;
    nodes[t.node].value = best_threshold;
    nodes[t.node].left = left_child;
    nodes.emplace_back();
    nodes.emplace_back();
    stack.push_back({left_child + 1, mid_pos, t.end, t.depth + 1});
    stack.push_back({left_child, t.begin, mid_pos, t.depth + 1});
  }
  return Tree(std::move(nodes));
}

}  // namespace

Tree fit_tree_on_rows(const Vector& u, const Matrix& x, const std::vector<std::uint32_t>& rows,
                      const TreeParams& params, std::uint64_t feature_seed) {
  return grow_tree(u, x, column_order(x), rows, params, feature_seed);
}

std::shared_ptr<const Tree> fit_tree(const Vector& u, const Matrix& x, const TreeParams& params,
                                     std::uint64_t seed) {
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(u.size()));
  std::iota(rows.begin(), rows.end(), 0U);
  return std::make_shared<const Tree>(fit_tree_on_rows(u, x, rows, params, seed));
}

Vector Forest::predict(const Matrix& x) const {
  Vector out = Vector::Zero(x.rows());
  for (const auto& tree : trees_) out += tree.predict(x);
  return out / static_cast<double>(trees_.size());
}

Vector Forest::fitted_values(const Matrix& x) const {
  if (x.rows() != oob_prediction_.size()) throw UsageError("fitted values need the training design");
  Vector out = oob_prediction_;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (oob_count_[static_cast<std::size_t>(i)] > 0) continue;
    double s = 0.0;
    for (const auto& tree : trees_) s += tree.predict_row(x, i);
    out(i) = s / static_cast<double>(trees_.size());
  }
  return out;
}

std::shared_ptr<const Forest> fit_forest(const Vector& u, const Matrix& x, const TreeParams& params,
                                         std::uint64_t seed, std::size_t threads) {
  const auto n = static_cast<std::size_t>(u.size());
  const auto p = static_cast<std::size_t>(x.cols());
  if (n == 0) throw DataError("forest: no training rows");
  TreeParams tp = params;
  if (!tp.mtry) tp.mtry = std::max<std::size_t>(1, p / 3);

  const ColumnOrder co = column_order(x);
  std::vector<Tree> trees(tp.n_trees, Tree({}));
  std::vector<std::vector<std::uint32_t>> inbag(tp.n_trees);
  parallel_for(tp.n_trees, threads, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(seed, t));
    std::vector<std::uint32_t> rows(n);
    std::vector<std::uint32_t> counts(n, 0);
    if (tp.bootstrap) {
      std::uniform_int_distribution<std::uint32_t> draw(0, static_cast<std::uint32_t>(n - 1));
      for (auto& r : rows) {
        r = draw(rng);
        ++counts[r];
      }
    } else {
      std::iota(rows.begin(), rows.end(), 0U);
      std::fill(counts.begin(), counts.end(), 1U);
    }
    trees[t] = grow_tree(u, x, co, rows, tp, rng());
    inbag[t] = std::move(counts);
  });

  Vector oob = Vector::Zero(static_cast<Eigen::Index>(n));
  std::vector<std::uint32_t> oob_count(n, 0);
  for (std::size_t t = 0; t < trees.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (inbag[t][i] != 0) continue;
      oob(static_cast<Eigen::Index>(i)) += trees[t].predict_row(x, static_cast<Eigen::Index>(i));
      ++oob_count[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    oob(static_cast<Eigen::Index>(i)) = oob_count[i] > 0 ? oob(static_cast<Eigen::Index>(i)) / oob_count[i]
                                                         : std::numeric_limits<double>::quiet_NaN();
  }
  return std::make_shared<const Forest>(std::move(trees), std::move(inbag), std::move(oob),
                                        std::move(oob_count));
}

Vector LinearPredictor::predict(const Matrix& x) const {
  return (x * beta_).array() + intercept_;
}

std::shared_ptr<const LinearPredictor> fit_linear(const Vector& u, const Matrix& x) {
  const InterceptFit fit = ols_with_intercept(x, u);
  return std::make_shared<const LinearPredictor>(fit.intercept, fit.beta);
}

Vector LmRfPredictor::predict(const Matrix& x) const {
  return linear_->predict(x) + forest_->predict(x);
}

Vector LmRfPredictor::fitted_values(const Matrix& x) const {
  return linear_->predict(x) + forest_->fitted_values(x);
}

std::shared_ptr<const LmRfPredictor> fit_lm_rf(const Vector& u, const Matrix& x, const TreeParams& params,
                                               std::uint64_t seed, std::size_t threads) {
  auto linear = fit_linear(u, x);
  const Vector residual = u - linear->predict(x);
  auto forest = fit_forest(residual, x, params, seed, threads);
  return std::make_shared<const LmRfPredictor>(std::move(linear), std::move(forest));
}

FittedPredictor fit_learner(const LearnerSpec& spec, const Vector& u, const Matrix& x,
                            std::size_t threads) {
  spec.validate(static_cast<std::size_t>(x.cols()));
  switch (spec.kind) {
    case LearnerKind::tree: return fit_tree(u, x, spec.tree, spec.seed);
    case LearnerKind::forest: return fit_forest(u, x, spec.tree, spec.seed, threads);
    case LearnerKind::linear: return fit_linear(u, x);
    case LearnerKind::lm_rf: return fit_lm_rf(u, x, spec.tree, spec.seed, threads);
  }
  throw UsageError("unknown learner kind");
}

}  // namespace causalreg

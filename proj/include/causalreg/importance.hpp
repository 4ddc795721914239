#pragma once

#include "causalreg/data_model.hpp"
#include "causalreg/learners.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace causalreg {

struct ImportanceOptions {
  std::size_t repetitions = 1;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  // Test hook: replace every permutation by the identity.
  bool identity_permutation = false;
};

/// Relative loss increases after permuting each covariate on the training rows.
///   imp_rss[j] = (RSS_j - RSS) / RSS with RSS the mean squared residual,
///   imp_med[j] = (h_j - h) / h with h the median absolute residual,
/// averaged over repetitions. Ranks run from 1 (least important) to p, ties
/// broken by variable index.
struct ImportanceReport {
  Vector imp_rss;
  Vector imp_med;
  std::vector<std::size_t> rank_rss;
  std::vector<std::size_t> rank_med;
  std::uint64_t seed = 1;
  std::size_t repetitions = 1;
};

ImportanceReport permutation_importance(const Predictor& predictor, const EnvDataset& data,
                                        const ImportanceOptions& options = {});

/// Ranks 1..p by ascending value; equal values rank by variable index.
std::vector<std::size_t> importance_ranks(const Vector& importance);

/// Out-of-bag importance of a forest: per tree, the increase in mean squared
/// error on its out-of-bag rows after permuting covariate j among those rows,
/// averaged over trees. x and y must be the forest's training data.
Vector forest_oob_importance(const Forest& forest, const Matrix& x, const Vector& y, std::uint64_t seed);

/// CSV with columns variable, imp_rss, imp_med, rank_rss, rank_med.
std::string importance_csv(const ImportanceReport& report);

}  // namespace causalreg

#include "causalreg/icp.hpp"

#include "causalreg/error.hpp"
#include "causalreg/numerics.hpp"
#include "causalreg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace causalreg {

namespace {

constexpr double kMaxSubsets = 1048576.0;  // 2^20

double binomial(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

}  // namespace

std::vector<SubsetS> enumerate_subsets(const std::vector<std::size_t>& candidates,
                                       std::size_t max_size) {
  std::vector<std::size_t> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  max_size = std::min(max_size, m);

  std::vector<SubsetS> out;
  out.emplace_back();
  for (std::size_t size = 1; size <= max_size; ++size) {
    std::vector<std::size_t> pos(size);
    for (std::size_t i = 0; i < size; ++i) pos[i] = i;
    while (true) {
      std::vector<std::size_t> idx(size);
      for (std::size_t i = 0; i < size; ++i) idx[i] = sorted[pos[i]];
      out.emplace_back(std::move(idx));
      // next combination in lexicographic order
      std::size_t i = size;
      while (i > 0 && pos[i - 1] == m - size + i - 1) --i;
      if (i == 0) break;
      ++pos[i - 1];
      for (std::size_t j = i; j < size; ++j) pos[j] = pos[j - 1] + 1;
    }
  }
  return out;
}

IcpResult assemble_icp(std::vector<AcceptedSet> accepted, std::vector<std::size_t> screened,
                       double alpha) {
  IcpResult res;
  res.alpha = alpha;
  res.screened = std::move(screened);
  res.accepted = std::move(accepted);
  res.model_rejected = res.accepted.empty();
  if (!res.model_rejected) {
    SubsetS inter = res.accepted.front().set;
    for (const auto& a : res.accepted) inter = inter.intersect(a.set);
    res.s_hat = std::move(inter);
  }
  return res;
}

IcpResult icp_search(const EnvDataset& data, const EnvironmentPartition& part,
                     const IcpOptions& options) {
  const std::size_t p = data.p();
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
  const std::size_t k = options.screen_k.value_or(std::min<std::size_t>(p, 10));
  const std::size_t max_size = options.max_subset_size.value_or(k);
  if (k > p) throw UsageError("screen_k exceeds the number of covariates");
  if (max_size > k) throw UsageError("max_subset_size exceeds screen_k");

  double count = 0.0;
  for (std::size_t s = 0; s <= max_size; ++s) count += binomial(k, s);
  if (count > kMaxSubsets) {
    std::ostringstream msg;
    msg << "ICP would test " << count << " subsets (limit 2^20); reduce screen_k or max_subset_size";
    throw UsageError(msg.str());
  }

  std::vector<std::size_t> screened;
  if (k > 0) screened = lasso_path_order(data.x(), data.y(), k);
  const auto subsets = enumerate_subsets(screened, max_size);

  std::vector<InvarianceTestResult> results(subsets.size());
  parallel_for(subsets.size(), options.threads, [&](std::size_t i) {
    results[i] = test_invariance(data, subsets[i], part, options.alpha, options.mode);
  });

  std::vector<AcceptedSet> accepted;
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    if (results[i].accepted) accepted.push_back({subsets[i], results[i].p_value});
  }
  auto res = assemble_icp(std::move(accepted), std::move(screened), options.alpha);
  res.subsets_tested = subsets.size();
  return res;
}

IcpConfidence icp_confidence_statement(const IcpResult& result, std::size_t p) {
  IcpConfidence out;
  out.model_rejected = result.model_rejected;
  if (result.model_rejected) {
    out.notice = "no subset was accepted at level " + std::to_string(result.alpha) +
                 "; the invariance model is rejected and no variable is claimed causal";
  }
  for (std::size_t j = 0; j < p; ++j) {
    VariableConfidence v;
    v.index = j;
    v.causal_at_level = !result.model_rejected && result.s_hat.contains(j);
    for (const auto& a : result.accepted) {
      if (!a.set.contains(j)) {
        v.max_p_without = std::max(v.max_p_without.value_or(0.0), a.p_value);
      }
    }
    out.variables.push_back(v);
  }
  return out;
}

}  // namespace causalreg

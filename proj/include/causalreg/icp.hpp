#pragma once

#include "causalreg/data_model.hpp"
#include "causalreg/invariance.hpp"

#include <optional>
#include <string>
#include <vector>

namespace causalreg {

struct IcpOptions {
  double alpha = 0.05;
  std::optional<std::size_t> screen_k;          // default min(p, 10)
  std::optional<std::size_t> max_subset_size;   // default screen_k
  InvarianceMode mode = InvarianceMode::coefficients_and_variance;
  std::size_t threads = 1;
};

struct AcceptedSet {
  SubsetS set;
  double p_value = 1.0;
};

struct IcpResult {
  SubsetS s_hat;
  std::vector<AcceptedSet> accepted;   // in enumeration order
  std::vector<std::size_t> screened;   // candidate indices in lasso entry order
  bool model_rejected = true;
  double alpha = 0.05;
  std::size_t subsets_tested = 0;
};

/// Subsets are enumerated by size, then lexicographically over the sorted
/// screened candidates; the empty set comes first.
std::vector<SubsetS> enumerate_subsets(const std::vector<std::size_t>& candidates,
                                       std::size_t max_size);

/// Intersection of accepted sets; an empty family gives s_hat = {} and
/// model_rejected = true.
IcpResult assemble_icp(std::vector<AcceptedSet> accepted, std::vector<std::size_t> screened,
                       double alpha);

/// Invariant causal prediction over lasso-screened candidates. Throws
/// UsageError when more than 2^20 subsets would be tested.
IcpResult icp_search(const EnvDataset& data, const EnvironmentPartition& part,
                     const IcpOptions& options = {});

struct VariableConfidence {
  std::size_t index = 0;
  bool causal_at_level = false;
  std::optional<double> max_p_without;  // max p over accepted sets lacking the variable
};

struct IcpConfidence {
  std::vector<VariableConfidence> variables;
  bool model_rejected = false;
  std::string notice;
};

IcpConfidence icp_confidence_statement(const IcpResult& result, std::size_t p);

}  // namespace causalreg

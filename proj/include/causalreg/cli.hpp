#pragma once

#include "causalreg/eval.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace causalreg {

/// Knobs shared by every reproduction target.
struct ReproduceOptions {
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  std::size_t max_iter = 100;  // boosting cap; the objective minimum sits in the first few iterations
  std::size_t n_trees = 100;
  std::size_t n = 300;
  std::size_t n_out = 2000;
  std::size_t threads = 1;
};

/// Experiment plans behind fig8, fig9, fig11, fig12 and table1 (gamma = 7).
/// fig9 and fig11 return the moderate and the strong shift experiment; table1
/// returns the four (model, shift) experiments whose gain rows make up the table.
std::vector<ExperimentPlan> reproduction_plans(const std::string& target, const ReproduceOptions& options);

/// Importance study behind fig10.
ImportancePlan importance_plan(const ReproduceOptions& options);

/// Runs one command line (without the program name). Results go to `out`,
/// a single line "error: code=<usage|data|numeric> message=..." to `err` on
/// failure. Returns the process exit code: 0, 2 (usage), 3 (data) or 4 (numeric).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace causalreg

#pragma once

#include "causalreg/anchor_boost.hpp"
#include "causalreg/learners.hpp"
#include "causalreg/simgen.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace causalreg {

/// 0.05, 0.10, ..., 1.00
std::vector<double> default_alpha_grid();

/// Empirical alpha-quantiles: order statistics with linear interpolation at
/// position alpha * (n - 1) of the sorted sample, so alpha = 1 is the maximum.
Vector quantile_curve(const Vector& abs_errors, const std::vector<double>& alphas);

/// 100 (q_base - q_method) / q_base; positive when the method has smaller error.
double relative_gain(double q_base, double q_method);

enum class MethodKind { ols, anchor_linear, plain_learner, anchor_boost };

std::string to_string(MethodKind kind);
MethodKind method_kind_from_string(const std::string& name);

struct MethodSpec {
  std::string name;
  MethodKind kind = MethodKind::ols;
  double gamma = 7.0;
  LearnerSpec learner;  // learner.seed selects the stream within a replicate
  StopRule stop = StopRule::stop2;
  double nu = 0.1;
  std::size_t max_iter = 500;
  bool oob_fitted = true;
  std::optional<LearnerSpec> g_opt_learner;
};

struct GainSpec {
  std::string label;
  std::string method;
  std::string baseline;
};

struct ExperimentPlan {
  std::string name = "experiment";
  ModelId model = ModelId::m1;
  PerturbationKind perturbation = PerturbationKind::moderate_shift;
  std::vector<MethodSpec> methods;
  std::vector<GainSpec> gains;
  std::size_t n = 300;
  std::size_t n_out = 2000;
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  std::vector<double> alphas = default_alpha_grid();
  std::vector<double> gain_alphas{0.5, 0.8, 1.0};
  SimOptions sim;
  std::size_t threads = 1;

  void validate() const;
};

struct QuantileReport {
  std::vector<double> alphas;
  std::vector<std::string> methods;
  std::vector<std::vector<Vector>> curves;  // [method][replicate], one entry per alpha
  Matrix mean;                              // method x alpha, mean over replicates
  Matrix se;                                // method x alpha, standard error of that mean
  std::size_t replicates = 0;
  std::uint64_t seed = 0;

  std::size_t method_index(const std::string& name) const;
};

struct GainRow {
  std::string label;
  std::string method;
  std::string baseline;
  std::vector<double> alphas;
  std::vector<double> gains;  // relative_gain of the replicate-mean quantiles
};

struct ExperimentResult {
  std::string name;
  QuantileReport report;
  std::vector<GainRow> gains;
};

/// Replicate k draws training and test data from seed derive_seed(plan.seed, k),
/// fits every method on the centered training sample and scores absolute
/// prediction errors on the perturbed test sample. Boosting methods that differ
/// only in their stop rule share one fit.
ExperimentResult run_experiment(const ExperimentPlan& plan);

/// Mean over the alpha grid of the per-replicate relative gains of `method`
/// over `baseline`; one value per replicate.
std::vector<double> replicate_mean_gains(const QuantileReport& report, const std::string& method,
                                         const std::string& baseline);

/// Long format: replicate,method,alpha,value.
std::string quantile_long_csv(const QuantileReport& report);
/// label,method,baseline,alpha,gain
std::string gain_table_csv(const std::vector<GainRow>& rows);
/// Replicate-mean curves, standard errors and gains.
std::string experiment_summary_json(const ExperimentResult& result);

struct ImportancePlan {
  ModelId model = ModelId::m3;
  std::size_t n = 300;
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  BoostConfig boost;            // anchor boosting configuration (LM+RF by default in plans)
  LearnerSpec baseline_forest;  // plain forest for the out-of-bag baseline
  std::size_t repetitions = 1;
  std::size_t threads = 1;
};

/// Per-replicate ranks (1 = least important) of every covariate.
struct ImportanceStudy {
  std::vector<std::vector<std::size_t>> rank_rss;  // anchor boosting, squared loss
  std::vector<std::vector<std::size_t>> rank_med;  // anchor boosting, median absolute loss
  std::vector<std::vector<std::size_t>> rank_oob;  // plain forest, out-of-bag
  std::size_t p = 0;

  /// Share of replicates in which `vars` hold the top |vars| ranks.
  static double top_rate(const std::vector<std::vector<std::size_t>>& ranks,
                         const std::vector<std::size_t>& vars);
};

ImportanceStudy run_importance_study(const ImportancePlan& plan);

/// replicate,variant,variable,rank
std::string rank_distribution_csv(const ImportanceStudy& study);

struct DualityCheck {
  double max_relative_error = 0.0;
  std::size_t trials = 0;
};

/// Random coefficient vectors b ~ N(0, I) and gamma ~ U(0, gamma_max): the
/// worst-case oracle against the closed-form regularized population risk.
DualityCheck verify_duality(const SemSpec& spec, std::size_t trials, std::uint64_t seed,
                            double gamma_max = 10.0);

struct CoverageCheck {
  double coverage = 0.0;    // share of replicates with S_hat inside pa(Y)
  double empty_rate = 0.0;  // share with S_hat empty
  std::size_t replicates = 0;
  double alpha = 0.05;
};

/// Fresh samples from a fixed spec with discrete environments; ICP over all
/// covariates at level alpha.
CoverageCheck verify_icp_coverage(const SemSpec& spec, std::size_t n, std::size_t replicates,
                                  double alpha, std::uint64_t seed, std::size_t threads = 1);

struct QuantileLinkCheck {
  double gamma = 7.0;
  double alpha = 0.0;           // chi-square(1) cdf at gamma
  double insample = 0.0;        // in-sample quantile estimate at alpha
  double population = 0.0;      // regularized population risk at gamma
  double relative_error = 0.0;
};

/// Fits anchor regression at gamma on the linear illustration and compares
/// the in-sample quantile estimate with the model's regularized risk.
QuantileLinkCheck verify_quantile_link(std::size_t n, std::uint64_t seed, double gamma = 7.0);

}  // namespace causalreg

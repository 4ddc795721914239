#pragma once

#include "causalreg/data_model.hpp"
#include "causalreg/error.hpp"
#include "causalreg/learners.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace causalreg {

enum class StopRule { stop1, stop2, stop3 };

std::string to_string(StopRule rule);
StopRule stop_rule_from_string(const std::string& name);

struct BoostConfig {
  double gamma = 7.0;
  double nu = 0.1;
  std::size_t max_iter = 500;
  StopRule stop_rule = StopRule::stop2;
  double overshoot = 1.1;
  LearnerSpec learner;
  std::optional<LearnerSpec> g_opt_learner;  // required for stop3
  // Divide the pseudo-response by n as in the textbook gradient. Off by
  // default: every learner here is scale-equivariant, so the factor only
  // shrinks the effective step by n.
  bool strict_gradient_scaling = false;
  // Update the training fit with out-of-bag values for forest stages (the
  // learner's fitted_values) instead of in-bag predictions.
  bool oob_fitted = true;
  std::size_t threads = 1;

  void validate() const;
};

struct StopChoice {
  std::size_t m_stop = 1;  // one-based
  std::vector<std::string> warnings;
};

/// Post-hoc choice of the stopping iteration from trace[m-1] = ||W(Y - f^[m])||^2.
///   stop1: global argmin, smallest m on ties.
///   stop2: among m with trace <= overshoot * min, the largest trace, ties to the largest m.
///   stop3: smallest trace among m with trace >= g_opt_rss (ties to the smallest m); when
///          no m qualifies, falls back to stop1 and records a warning.
StopChoice choose_stop(const std::vector<double>& trace, StopRule rule,
                       std::optional<double> g_opt_rss = std::nullopt, double overshoot = 1.1);

/// Boosted predictor f^[m] = nu * (sum of the first m stage predictions).
class BoostFit final : public Predictor {
 public:
  BoostFit(std::shared_ptr<const std::vector<FittedPredictor>> stages, std::vector<double> trace,
           double initial_rss, std::size_t n, double gamma, double nu, std::size_t m_stop,
           std::optional<double> g_opt_rss, std::vector<std::string> warnings);

  /// Prediction at m_stop.
  Vector predict(const Matrix& x) const override;
  /// Prediction after m stages (0 <= m <= max_iter).
  Vector predict_at(const Matrix& x, std::size_t m) const;

  /// Same stages, different stopping iteration.
  BoostFit select(std::size_t m) const;

  const std::vector<double>& trace() const noexcept { return trace_; }
  /// ||W Y||^2, the trace value of f^[0] = 0.
  double initial_rss() const noexcept { return initial_rss_; }
  /// G(f^[m]) = ||W(Y - f^[m])||^2 / (2n), m = 0 allowed.
  double objective(std::size_t m) const;

  std::size_t m_stop() const noexcept { return m_stop_; }
  std::size_t max_iter() const noexcept { return trace_.size(); }
  double gamma() const noexcept { return gamma_; }
  double nu() const noexcept { return nu_; }
  std::optional<double> g_opt_rss() const noexcept { return g_opt_rss_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  const std::vector<FittedPredictor>& stages() const noexcept { return *stages_; }

 private:
  std::shared_ptr<const std::vector<FittedPredictor>> stages_;
  std::vector<double> trace_;
  double initial_rss_;
  std::size_t n_;
  double gamma_;
  double nu_;
  std::size_t m_stop_;
  std::optional<double> g_opt_rss_;
  std::vector<std::string> warnings_;
};

/// Raised when the base learner fails or the iterates stop being finite. The
/// trace up to the last completed iteration is kept.
class BoostAborted : public NumericError {
 public:
  BoostAborted(const std::string& message, std::vector<double> partial_trace)
      : NumericError(message), partial_trace_(std::move(partial_trace)) {}
  const std::vector<double>& partial_trace() const noexcept { return partial_trace_; }

 private:
  std::vector<double> partial_trace_;
};

/// Anchor boosting on centered data. Stage m fits the learner (seeded with
/// derive_seed(learner.seed, m)) to the pseudo-response W^2 (Y - f^[m-1]) and
/// adds nu times its fit. The trace is always run to max_iter and m_stop is
/// chosen afterwards.
BoostFit boost_fit(const EnvDataset& data, const BoostConfig& config);

/// Training RSS ||W Y - g(X, A)||^2 of the learner regressing W Y on the
/// concatenated covariates (X, A).
double fit_g_opt(const EnvDataset& data, double gamma, const LearnerSpec& learner,
                 std::size_t threads = 1);

}  // namespace causalreg

#include "causalreg/anchor_boost.hpp"

#include "causalreg/anchor_linear.hpp"
#include "causalreg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace causalreg {

std::string to_string(StopRule rule) {
  switch (rule) {
    case StopRule::stop1: return "stop1";
    case StopRule::stop2: return "stop2";
    case StopRule::stop3: return "stop3";
  }
  return "unknown";
}

StopRule stop_rule_from_string(const std::string& name) {
  if (name == "stop1") return StopRule::stop1;
  if (name == "stop2") return StopRule::stop2;
  if (name == "stop3") return StopRule::stop3;
  throw UsageError("unknown stop rule '" + name + "' (expected stop1, stop2 or stop3)");
}

void BoostConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw UsageError("gamma must be finite and nonnegative");
  if (!(nu > 0.0 && nu < 1.0)) throw UsageError("nu must lie in (0,1)");
  if (max_iter < 1) throw UsageError("max_iter must be at least 1");
  if (!(overshoot >= 1.0)) throw UsageError("overshoot factor must be at least 1");
  if (stop_rule == StopRule::stop3 && !g_opt_learner)
    throw UsageError("stop3 requires a learner for the (X,A) benchmark fit");
}

StopChoice choose_stop(const std::vector<double>& trace, StopRule rule,
                       std::optional<double> g_opt_rss, double overshoot) {
  if (trace.empty()) throw UsageError("empty objective trace");
  StopChoice out;
  const auto argmin = static_cast<std::size_t>(std::min_element(trace.begin(), trace.end()) - trace.begin());
  const double min_value = trace[argmin];

  switch (rule) {
    case StopRule::stop1:
      out.m_stop = argmin + 1;
      break;
    case StopRule::stop2: {
      const double threshold = overshoot * min_value;
      std::size_t best = argmin;
      for (std::size_t m = 0; m < trace.size(); ++m) {
        if (trace[m] <= threshold && trace[m] >= trace[best]) best = m;
      }
      out.m_stop = best + 1;
      break;
    }
    case StopRule::stop3: {
      if (!g_opt_rss) throw UsageError("stop3 requires the benchmark RSS");
      std::optional<std::size_t> best;
      for (std::size_t m = 0; m < trace.size(); ++m) {
        if (trace[m] >= *g_opt_rss && (!best || trace[m] < trace[*best])) best = m;
      }
      if (best) {
        out.m_stop = *best + 1;
      } else {
        out.m_stop = argmin + 1;
        std::ostringstream msg;
        msg << "stop3: every iterate undercuts the benchmark RSS " << *g_opt_rss
            << "; fell back to stop1";
        out.warnings.push_back(msg.str());
      }
      break;
    }
  }
  return out;
}

BoostFit::BoostFit(std::shared_ptr<const std::vector<FittedPredictor>> stages, std::vector<double> trace,
                   double initial_rss, std::size_t n, double gamma, double nu, std::size_t m_stop,
                   std::optional<double> g_opt_rss, std::vector<std::string> warnings)
    : stages_(std::move(stages)),
      trace_(std::move(trace)),
      initial_rss_(initial_rss),
      n_(n),
      gamma_(gamma),
      nu_(nu),
      m_stop_(m_stop),
      g_opt_rss_(g_opt_rss),
      warnings_(std::move(warnings)) {}

Vector BoostFit::predict(const Matrix& x) const { return predict_at(x, m_stop_); }

Vector BoostFit::predict_at(const Matrix& x, std::size_t m) const {
  if (m > stages_->size()) throw UsageError("boosting iteration beyond the fitted stages");
  Vector f = Vector::Zero(x.rows());
  for (std::size_t k = 0; k < m; ++k) f += nu_ * (*stages_)[k]->predict(x);
  return f;
}

BoostFit BoostFit::select(std::size_t m) const {
  if (m < 1 || m > stages_->size()) throw UsageError("stopping iteration out of range");
  BoostFit out = *this;
  out.m_stop_ = m;
  return out;
}

double BoostFit::objective(std::size_t m) const {
  if (m > trace_.size()) throw UsageError("boosting iteration beyond the trace");
  const double rss = m == 0 ? initial_rss_ : trace_[m - 1];
  return rss / (2.0 * static_cast<double>(n_));
}

namespace {

double weighted_rss(const Projector& proj, double gamma, const Vector& r) {
  const Vector pr = proj.apply(r);
  return (r - pr).squaredNorm() + gamma * pr.squaredNorm();
}

}  // namespace

BoostFit boost_fit(const EnvDataset& data, const BoostConfig& config) {
  config.validate();
  config.learner.validate(data.p());
  const Projector proj = build_projector(data.a());
  const Vector& y = data.y();
  const Matrix& x = data.x();
  const double n = static_cast<double>(data.n());

  std::optional<double> g_opt_rss;
  if (config.stop_rule == StopRule::stop3)
    g_opt_rss = fit_g_opt(data, config.gamma, *config.g_opt_learner, config.threads);

  auto stages = std::make_shared<std::vector<FittedPredictor>>();
  stages->reserve(config.max_iter);
  std::vector<double> trace;
  trace.reserve(config.max_iter);
  std::size_t increases = 0;

  Vector f = Vector::Zero(y.size());
  const double initial = weighted_rss(proj, config.gamma, y);
  for (std::size_t m = 1; m <= config.max_iter; ++m) {
    const Vector r = y - f;
    // W^2 r = r + (gamma - 1) P r, the same as applying W twice.
    Vector pseudo = r + (config.gamma - 1.0) * proj.apply(r);
    if (config.strict_gradient_scaling) pseudo /= n;

    FittedPredictor stage;
    try {
      stage = fit_learner(config.learner.with_seed(derive_seed(config.learner.seed, m)), pseudo, x,
                          config.threads);
    } catch (const std::exception& e) {
      throw BoostAborted("base learner failed at iteration " + std::to_string(m) + ": " + e.what(),
                         trace);
    }
    f += config.nu * (config.oob_fitted ? stage->fitted_values(x) : stage->predict(x));
    const double value = weighted_rss(proj, config.gamma, y - f);
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "boosting diverged at iteration " << m << " (nu*gamma=" << config.nu * config.gamma
          << "); use a smaller step size";
      throw BoostAborted(msg.str(), trace);
    }
    if (!trace.empty() && value > trace.back()) ++increases;
    stages->push_back(std::move(stage));
    trace.push_back(value);
  }

  StopChoice choice = choose_stop(trace, config.stop_rule, g_opt_rss, config.overshoot);
  if (increases > 0) {
    choice.warnings.push_back("objective trace increased at " + std::to_string(increases) +
                              " iteration(s)");
  }
  return BoostFit(std::move(stages), std::move(trace), initial, data.n(), config.gamma, config.nu,
                  choice.m_stop, g_opt_rss, std::move(choice.warnings));
}

double fit_g_opt(const EnvDataset& data, double gamma, const LearnerSpec& learner, std::size_t threads) {
  const Projector proj = build_projector(data.a());
  const Vector wy = transform_w(gamma, proj, data.y());
  Matrix xa(static_cast<Eigen::Index>(data.n()), static_cast<Eigen::Index>(data.p() + data.r()));
  xa << data.x(), data.a();
  const FittedPredictor g = fit_learner(learner, wy, xa, threads);
  return (wy - g->predict(xa)).squaredNorm();
}

}  // namespace causalreg

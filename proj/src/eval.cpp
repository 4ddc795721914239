#include "causalreg/eval.hpp"

#include "causalreg/anchor_linear.hpp"
#include "causalreg/error.hpp"
#include "causalreg/icp.hpp"
#include "causalreg/importance.hpp"
#include "causalreg/numerics.hpp"
#include "causalreg/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace causalreg {

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 20; ++k) grid.push_back(k / 20.0);
  return grid;
}

Vector quantile_curve(const Vector& abs_errors, const std::vector<double>& alphas) {
  if (abs_errors.size() == 0) throw DataError("quantile curve of an empty sample");
  std::vector<double> v(abs_errors.data(), abs_errors.data() + abs_errors.size());
  for (double e : v)
    if (!(e >= 0.0)) throw DataError("absolute errors must be nonnegative");
  std::sort(v.begin(), v.end());
  Vector out(static_cast<Eigen::Index>(alphas.size()));
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    const double a = alphas[k];
    if (!(a >= 0.0 && a <= 1.0)) throw UsageError("quantile levels must lie in [0,1]");
    const double pos = a * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    out(static_cast<Eigen::Index>(k)) = v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  }
  return out;
}

double relative_gain(double q_base, double q_method) {
  if (!(q_base > 0.0)) throw NumericError("relative gain needs a positive baseline quantile");
  return 100.0 * (q_base - q_method) / q_base;
}

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::ols: return "ols";
    case MethodKind::anchor_linear: return "anchor";
    case MethodKind::plain_learner: return "learner";
    case MethodKind::anchor_boost: return "boost";
  }
  return "unknown";
}

MethodKind method_kind_from_string(const std::string& name) {
  if (name == "ols") return MethodKind::ols;
  if (name == "anchor") return MethodKind::anchor_linear;
  if (name == "learner") return MethodKind::plain_learner;
  if (name == "boost") return MethodKind::anchor_boost;
  throw UsageError("unknown method kind '" + name + "' (expected ols, anchor, learner or boost)");
}

namespace {

std::size_t alpha_index(const std::vector<double>& alphas, double a) {
  for (std::size_t k = 0; k < alphas.size(); ++k)
    if (std::abs(alphas[k] - a) < 1e-12) return k;
  throw UsageError("gain level " + std::to_string(a) + " is not on the alpha grid");
}

}  // namespace

void ExperimentPlan::validate() const {
  if (replicates < 1) throw UsageError("replicates must be at least 1");
  if (n < 2 || n_out < 1) throw UsageError("sample sizes too small");
  if (methods.empty()) throw UsageError("experiment needs at least one method");
  if (alphas.empty()) throw UsageError("empty alpha grid");
  std::vector<std::string> names;
  for (const auto& m : methods) {
    if (std::find(names.begin(), names.end(), m.name) != names.end())
      throw UsageError("duplicate method name '" + m.name + "'");
    names.push_back(m.name);
    if (m.kind == MethodKind::anchor_boost && m.stop == StopRule::stop3 && !m.g_opt_learner)
      throw UsageError("method " + m.name + ": stop3 requires a benchmark learner");
  }
  for (const auto& g : gains) {
    for (const auto* which : {&g.method, &g.baseline})
      if (std::find(names.begin(), names.end(), *which) == names.end())
        throw UsageError("gain row '" + g.label + "' refers to unknown method '" + *which + "'");
  }
  for (double a : gain_alphas) alpha_index(alphas, a);
}

std::size_t QuantileReport::method_index(const std::string& name) const {
  const auto it = std::find(methods.begin(), methods.end(), name);
  if (it == methods.end()) throw UsageError("no method named '" + name + "' in report");
  return static_cast<std::size_t>(it - methods.begin());
}

namespace {

std::string boost_key(const MethodSpec& m) {
  std::ostringstream key;
  key.precision(17);
  key << m.gamma << '|' << m.nu << '|' << m.max_iter << '|' << m.oob_fitted;
  for (const auto& [k, v] : learner_spec_to_map(m.learner)) key << '|' << k << '=' << v;
  return key.str();
}

Vector predict_method(const MethodSpec& m, const EnvDataset& train, const Projector& proj,
                      const Matrix& x_test, std::uint64_t rep_seed, std::map<std::string, BoostFit>& cache) {
  switch (m.kind) {
    case MethodKind::ols:
      return x_test * ols(train.x(), train.y()).beta;
    case MethodKind::anchor_linear:
      return fit_anchor(train, proj, m.gamma).predict(x_test);
    case MethodKind::plain_learner: {
      const LearnerSpec spec = m.learner.with_seed(derive_seed(rep_seed, 100 + m.learner.seed));
      return fit_learner(spec, train.y(), train.x())->predict(x_test);
    }
    case MethodKind::anchor_boost: {
      const std::string key = boost_key(m);
      auto it = cache.find(key);
      if (it == cache.end()) {
        BoostConfig cfg;
        cfg.gamma = m.gamma;
        cfg.nu = m.nu;
        cfg.max_iter = m.max_iter;
        cfg.oob_fitted = m.oob_fitted;
        cfg.stop_rule = StopRule::stop1;
        cfg.learner = m.learner.with_seed(derive_seed(rep_seed, 100 + m.learner.seed));
        it = cache.emplace(key, boost_fit(train, cfg)).first;
      }
      std::optional<double> g_opt;
      if (m.stop == StopRule::stop3)
        g_opt = fit_g_opt(train, m.gamma, m.g_opt_learner->with_seed(derive_seed(rep_seed, 300)));
      const StopChoice choice = choose_stop(it->second.trace(), m.stop, g_opt);
      return it->second.select(choice.m_stop).predict(x_test);
    }
  }
  throw UsageError("unknown method kind");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  const std::size_t nm = plan.methods.size();
  ExperimentResult result;
  result.name = plan.name;
  QuantileReport& report = result.report;
  report.alphas = plan.alphas;
  report.replicates = plan.replicates;
  report.seed = plan.seed;
  for (const auto& m : plan.methods) report.methods.push_back(m.name);
  report.curves.assign(nm, std::vector<Vector>(plan.replicates));

  parallel_for(plan.replicates, plan.threads, [&](std::size_t k) {
    const std::uint64_t rep_seed = derive_seed(plan.seed, k);
    const Simulation sim = simulate(plan.model, plan.n, rep_seed, plan.sim);
    const EnvDataset train = center(sim.data);
    const EnvDataset test = gen_out_of_sample(sim.spec, plan.perturbation, plan.n_out, derive_seed(rep_seed, 2));
    const CenteringInfo& shift = *train.centering();
    const Matrix x_test = test.x().rowwise() - shift.x_mean.transpose();
    const Vector y_test = test.y().array() - shift.y_mean;
    const Projector proj = build_projector(train.a());
    std::map<std::string, BoostFit> cache;
    for (std::size_t i = 0; i < nm; ++i) {
      const Vector pred = predict_method(plan.methods[i], train, proj, x_test, rep_seed, cache);
      report.curves[i][k] = quantile_curve((y_test - pred).cwiseAbs(), plan.alphas);
    }
  });

  const auto na = static_cast<Eigen::Index>(plan.alphas.size());
  const double r = static_cast<double>(plan.replicates);
  report.mean = Matrix::Zero(static_cast<Eigen::Index>(nm), na);
  report.se = Matrix::Zero(static_cast<Eigen::Index>(nm), na);
  for (std::size_t i = 0; i < nm; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (const auto& c : report.curves[i]) report.mean.row(row) += c.transpose();
    report.mean.row(row) /= r;
    if (plan.replicates > 1) {
      for (const auto& c : report.curves[i])
        report.se.row(row).array() += (c.transpose() - report.mean.row(row)).array().square();
      report.se.row(row) = (report.se.row(row) / (r - 1.0) / r).cwiseSqrt();
    }
  }

  for (const auto& g : plan.gains) {
    GainRow row{g.label, g.method, g.baseline, plan.gain_alphas, {}};
    const auto mi = static_cast<Eigen::Index>(report.method_index(g.method));
    const auto bi = static_cast<Eigen::Index>(report.method_index(g.baseline));
    for (double a : plan.gain_alphas) {
      const auto col = static_cast<Eigen::Index>(alpha_index(plan.alphas, a));
      row.gains.push_back(relative_gain(report.mean(bi, col), report.mean(mi, col)));
    }
    result.gains.push_back(std::move(row));
  }
  return result;
}

std::vector<double> replicate_mean_gains(const QuantileReport& report, const std::string& method,
                                         const std::string& baseline) {
  const std::size_t mi = report.method_index(method);
  const std::size_t bi = report.method_index(baseline);
  std::vector<double> out;
  for (std::size_t k = 0; k < report.replicates; ++k) {
    const Vector& m = report.curves[mi][k];
    const Vector& b = report.curves[bi][k];
    double total = 0.0;
    for (Eigen::Index a = 0; a < m.size(); ++a) total += relative_gain(b(a), m(a));
    out.push_back(total / static_cast<double>(m.size()));
  }
  return out;
}

std::string quantile_long_csv(const QuantileReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "replicate,method,alpha,value\n";
  for (std::size_t k = 0; k < report.replicates; ++k)
    for (std::size_t i = 0; i < report.methods.size(); ++i)
      for (std::size_t a = 0; a < report.alphas.size(); ++a)
        out << k + 1 << ',' << report.methods[i] << ',' << report.alphas[a] << ','
            << report.curves[i][k](static_cast<Eigen::Index>(a)) << '\n';
  return out.str();
}

std::string gain_table_csv(const std::vector<GainRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "label,method,baseline,alpha,gain\n";
  for (const auto& row : rows)
    for (std::size_t a = 0; a < row.alphas.size(); ++a)
      out << '"' << row.label << "\"," << row.method << ',' << row.baseline << ',' << row.alphas[a] << ','
          << row.gains[a] << '\n';
  return out.str();
}

std::string experiment_summary_json(const ExperimentResult& result) {
  const QuantileReport& rep = result.report;
  nlohmann::json j;
  j["name"] = result.name;
  j["replicates"] = rep.replicates;
  j["seed"] = rep.seed;
  j["alphas"] = rep.alphas;
  for (std::size_t i = 0; i < rep.methods.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::vector<double> mean(rep.mean.cols()), se(rep.se.cols());
    for (Eigen::Index a = 0; a < rep.mean.cols(); ++a) {
      mean[static_cast<std::size_t>(a)] = rep.mean(row, a);
      se[static_cast<std::size_t>(a)] = rep.se(row, a);
    }
    j["methods"][rep.methods[i]] = {{"mean", mean}, {"se", se}};
  }
  j["gains"] = nlohmann::json::array();
  for (const auto& g : result.gains)
    j["gains"].push_back({{"label", g.label}, {"method", g.method}, {"baseline", g.baseline},
                          {"alphas", g.alphas}, {"gains", g.gains}});
  return j.dump(2);
}

double ImportanceStudy::top_rate(const std::vector<std::vector<std::size_t>>& ranks,
                                 const std::vector<std::size_t>& vars) {
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : ranks) {
    const std::size_t p = r.size();
    const bool top = std::all_of(vars.begin(), vars.end(), [&](std::size_t j) { return r[j] + vars.size() > p; });
    if (top) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

ImportanceStudy run_importance_study(const ImportancePlan& plan) {
  if (plan.replicates < 1) throw UsageError("replicates must be at least 1");
  ImportanceStudy study;
  study.rank_rss.resize(plan.replicates);
  study.rank_med.resize(plan.replicates);
  study.rank_oob.resize(plan.replicates);

  parallel_for(plan.replicates, plan.threads, [&](std::size_t k) {
    const std::uint64_t rep_seed = derive_seed(plan.seed, k);
    const Simulation sim = simulate(plan.model, plan.n, rep_seed);
    const EnvDataset train = center(sim.data);

    BoostConfig cfg = plan.boost;
    cfg.learner = cfg.learner.with_seed(derive_seed(rep_seed, 100 + cfg.learner.seed));
    cfg.threads = 1;
    const BoostFit fit = boost_fit(train, cfg);
    ImportanceOptions opts;
    opts.repetitions = plan.repetitions;
    opts.seed = derive_seed(rep_seed, 7);
    const ImportanceReport report = permutation_importance(fit, train, opts);
    study.rank_rss[k] = report.rank_rss;
    study.rank_med[k] = report.rank_med;

    const auto forest = fit_forest(train.y(), train.x(), plan.baseline_forest.tree,
                                   derive_seed(rep_seed, 200 + plan.baseline_forest.seed));
    study.rank_oob[k] = importance_ranks(forest_oob_importance(*forest, train.x(), train.y(), derive_seed(rep_seed, 8)));
  });
  study.p = study.rank_rss.front().size();
  return study;
}

std::string rank_distribution_csv(const ImportanceStudy& study) {
  std::ostringstream out;
  out << "replicate,variant,variable,rank\n";
  const std::pair<const char*, const std::vector<std::vector<std::size_t>>*> variants[] = {
      {"anchor_boost_rss", &study.rank_rss}, {"anchor_boost_median", &study.rank_med}, {"forest_oob", &study.rank_oob}};
  for (const auto& [name, ranks] : variants)
    for (std::size_t k = 0; k < ranks->size(); ++k)
      for (std::size_t j = 0; j < (*ranks)[k].size(); ++j)
        out << k + 1 << ',' << name << ",X" << j + 1 << ',' << (*ranks)[k][j] << '\n';
  return out.str();
}

DualityCheck verify_duality(const SemSpec& spec, std::size_t trials, std::uint64_t seed, double gamma_max) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, gamma_max);
  DualityCheck out;
  out.trials = trials;
  const ShiftClassSpec base{0.0, spec.sem.m, spec.sem.sigma_a};
  for (std::size_t t = 0; t < trials; ++t) {
    Vector b(static_cast<Eigen::Index>(spec.p()));
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = normal(rng);
    ShiftClassSpec shift = base;
    shift.gamma = unif(rng);
    WorstCaseOptions opts;
    opts.seed = derive_seed(seed, t);
    const double sup = worst_case_risk_oracle(spec.sem, b, shift, opts).risk;
    const double reg = population_regularized_risk(spec.sem, b, shift.gamma);
    out.max_relative_error = std::max(out.max_relative_error, std::abs(sup - reg) / std::abs(reg));
  }
  return out;
}

CoverageCheck verify_icp_coverage(const SemSpec& spec, std::size_t n, std::size_t replicates, double alpha,
                                  std::uint64_t seed, std::size_t threads) {
  if (replicates < 1) throw UsageError("replicates must be at least 1");
  const SubsetS parents(spec.parents_of_y(), spec.p());
  std::vector<char> covered(replicates, 0);
  std::vector<char> empty(replicates, 0);
  IcpOptions opts;
  opts.alpha = alpha;
  opts.screen_k = spec.p();
  parallel_for(replicates, threads, [&](std::size_t k) {
    const EnvDataset data = sample_from_spec(spec, n, PerturbationKind::none, derive_seed(seed, k));
    if (!data.env_labels()) throw UsageError("ICP coverage needs a spec with discrete environments");
    const auto part = EnvironmentPartition::from_labels(*data.env_labels());
    const IcpResult res = icp_search(data, part, opts);
    covered[k] = res.s_hat.is_subset_of(parents) ? 1 : 0;
    empty[k] = res.s_hat.empty() ? 1 : 0;
  });
  CoverageCheck out;
  out.replicates = replicates;
  out.alpha = alpha;
  out.coverage = static_cast<double>(std::count(covered.begin(), covered.end(), 1)) / static_cast<double>(replicates);
  out.empty_rate = static_cast<double>(std::count(empty.begin(), empty.end(), 1)) / static_cast<double>(replicates);
  return out;
}

QuantileLinkCheck verify_quantile_link(std::size_t n, std::uint64_t seed, double gamma) {
  const Simulation sim = gen_linear_illustration(n, seed);
  const EnvDataset train = center(sim.data);
  const Projector proj = build_projector(train.a());
  const AnchorLinearFit fit = fit_anchor(train, proj, gamma);
  QuantileLinkCheck out;
  out.gamma = gamma;
  out.alpha = alpha_from_gamma(gamma);
  out.insample = insample_quantile_risk(train.y() - train.x() * fit.beta, proj, out.alpha);
  out.population = population_regularized_risk(sim.spec.sem, fit.beta, gamma);
  out.relative_error = std::abs(out.insample - out.population) / out.population;
  return out;
}

}  // namespace causalreg

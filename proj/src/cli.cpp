#include "causalreg/cli.hpp"

#include "causalreg/anchor_boost.hpp"
#include "causalreg/anchor_linear.hpp"
#include "causalreg/data_model.hpp"
#include "causalreg/error.hpp"
#include "causalreg/icp.hpp"
#include "causalreg/importance.hpp"
#include "causalreg/numerics.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace causalreg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDefaultGamma = 7.0;

LearnerSpec make_learner(LearnerKind kind, std::size_t n_trees) {
  LearnerSpec spec;
  spec.kind = kind;
  spec.tree.n_trees = n_trees;
  return spec;
}

MethodSpec plain_method(const std::string& name, LearnerKind kind, const ReproduceOptions& o) {
  MethodSpec m;
  m.name = name;
  m.kind = MethodKind::plain_learner;
  m.learner = make_learner(kind, o.n_trees);
  return m;
}

MethodSpec boost_method(const std::string& name, LearnerKind kind, StopRule stop, const ReproduceOptions& o) {
  MethodSpec m = plain_method(name, kind, o);
  m.kind = MethodKind::anchor_boost;
  m.gamma = kDefaultGamma;
  m.stop = stop;
  m.max_iter = o.max_iter;
  return m;
}

ExperimentPlan base_plan(const std::string& name, ModelId model, PerturbationKind pert, const ReproduceOptions& o) {
  ExperimentPlan plan;
  plan.name = name;
  plan.model = model;
  plan.perturbation = pert;
  plan.n = o.n;
  plan.n_out = o.n_out;
  plan.replicates = o.replicates;
  plan.seed = o.seed;
  plan.threads = o.threads;
  return plan;
}

// Plain RF and LM+RF against anchor boosting with stop1 and stop2.
ExperimentPlan boosting_plan(const std::string& name, ModelId model, PerturbationKind pert,
                             const std::string& row_prefix, const ReproduceOptions& o) {
  ExperimentPlan plan = base_plan(name, model, pert, o);
  plan.methods = {plain_method("rf", LearnerKind::forest, o),
                  boost_method("anchor_rf_stop1", LearnerKind::forest, StopRule::stop1, o),
                  boost_method("anchor_rf_stop2", LearnerKind::forest, StopRule::stop2, o),
                  plain_method("lmrf", LearnerKind::lm_rf, o),
                  boost_method("anchor_lmrf_stop1", LearnerKind::lm_rf, StopRule::stop1, o),
                  boost_method("anchor_lmrf_stop2", LearnerKind::lm_rf, StopRule::stop2, o)};
  plan.gains = {{row_prefix + " & RF", "anchor_rf_stop2", "rf"},
                {row_prefix + " & LM+RF", "anchor_lmrf_stop2", "lmrf"}};
  return plan;
}

std::string shift_label(PerturbationKind pert) {
  return pert == PerturbationKind::strong_shift ? "strong shift" : "moderate shift";
}

}  // namespace

std::vector<ExperimentPlan> reproduction_plans(const std::string& target, const ReproduceOptions& o) {
  if (target == "fig8") {
    ExperimentPlan plan = base_plan("fig8", ModelId::linear_illustration, PerturbationKind::sqrt10_amplify, o);
    MethodSpec ols_m;
    ols_m.name = "ols";
    ols_m.kind = MethodKind::ols;
    MethodSpec anchor_m;
    anchor_m.name = "anchor";
    anchor_m.kind = MethodKind::anchor_linear;
    anchor_m.gamma = kDefaultGamma;
    plan.methods = {ols_m, anchor_m};
    plan.gains = {{"anchor vs OLS", "anchor", "ols"}};
    return {plan};
  }
  const auto pair_for = [&](const std::string& stem, ModelId model, const std::string& model_label) {
    std::vector<ExperimentPlan> plans;
    for (PerturbationKind pert : {PerturbationKind::moderate_shift, PerturbationKind::strong_shift}) {
      const std::string suffix = pert == PerturbationKind::strong_shift ? "_strong" : "_moderate";
      plans.push_back(boosting_plan(stem + suffix, model, pert, model_label + "; " + shift_label(pert), o));
    }
    return plans;
  };
  if (target == "fig9") return pair_for("fig9", ModelId::m1, "(M1)");
  if (target == "fig11") return pair_for("fig11", ModelId::m2, "(M2)");
  if (target == "fig12")
    return {boosting_plan("fig12", ModelId::m2_discr, PerturbationKind::discrete_amplify_3x,
                          "(M2-discr); 3-fold amplification", o)};
  if (target == "table1") {
    std::vector<ExperimentPlan> plans = pair_for("table1_m1", ModelId::m1, "(M1)");
    for (auto& plan : pair_for("table1_m2", ModelId::m2, "(M2)")) plans.push_back(std::move(plan));
    return plans;
  }
  throw UsageError("unknown reproduction target '" + target +
                   "' (expected fig8, fig9, fig10, fig11, fig12, table1 or custom)");
}

ImportancePlan importance_plan(const ReproduceOptions& o) {
  ImportancePlan plan;
  plan.model = ModelId::m3;
  plan.n = o.n;
  plan.replicates = o.replicates;
  plan.seed = o.seed;
  plan.threads = o.threads;
  plan.boost.gamma = kDefaultGamma;
  plan.boost.max_iter = o.max_iter;
  plan.boost.stop_rule = StopRule::stop2;
  plan.boost.learner = make_learner(LearnerKind::lm_rf, o.n_trees);
  plan.baseline_forest = make_learner(LearnerKind::forest, o.n_trees);
  return plan;
}

namespace {

fs::path default_out_dir() {
  if (const char* env = std::getenv("CAUSALREG_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write " + path.string());
  file << text;
  if (!file) throw DataError("write failed for " + path.string());
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
  } else {
    write_text(out_path, text);
  }
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

// ---------------------------------------------------------------------------
// Configuration files. Scalars become "--key=value" flags appended after the
// command line; every option keeps its first value, so explicit flags win.

struct ConfigFile {
  std::vector<std::string> flags;
  YAML::Node methods;
  YAML::Node gains;
};

std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file name");
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

ConfigFile load_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw DataError("cannot read config file " + path);
  } catch (const YAML::Exception& e) {
    throw UsageError("malformed config file " + path + ": " + e.what());
  }
  ConfigFile cfg;
  if (!root || root.IsNull()) return cfg;
  if (!root.IsMap()) throw UsageError("config file must hold a key/value map");
  for (const auto& entry : root) {
    const auto key = entry.first.as<std::string>();
    const YAML::Node& value = entry.second;
    if (key == "methods") {
      cfg.methods = value;
      continue;
    }
    if (key == "gains") {
      cfg.gains = value;
      continue;
    }
    if (!value.IsScalar()) throw UsageError("config key '" + key + "' must be a scalar");
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    const auto text = value.as<std::string>();
    if (text == "true") {
      cfg.flags.push_back(flag);
    } else if (text != "false") {
      cfg.flags.push_back(flag + "=" + text);
    }
  }
  return cfg;
}

std::map<std::string, std::string> scalar_map(const YAML::Node& node, const std::string& what) {
  if (!node.IsMap()) throw UsageError(what + " must be a key/value block");
  std::map<std::string, std::string> out;
  for (const auto& entry : node) {
    if (!entry.second.IsScalar()) throw UsageError(what + ": values must be scalars");
    out[entry.first.as<std::string>()] = entry.second.as<std::string>();
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !in.eof()) throw UsageError("invalid value '" + text + "' for " + key);
  return value;
}

MethodSpec method_from_yaml(const YAML::Node& node) {
  if (!node.IsMap()) throw UsageError("each method must be a key/value block");
  MethodSpec m;
  bool has_name = false;
  for (const auto& entry : node) {
    const auto key = entry.first.as<std::string>();
    const YAML::Node& v = entry.second;
    if (key == "learner") {
      m.learner = learner_spec_from_map(scalar_map(v, "learner"));
    } else if (key == "gopt_learner") {
      m.g_opt_learner = learner_spec_from_map(scalar_map(v, "gopt_learner"));
    } else if (!v.IsScalar()) {
      throw UsageError("method key '" + key + "' must be a scalar");
    } else if (key == "name") {
      m.name = v.as<std::string>();
      has_name = true;
    } else if (key == "kind") {
      m.kind = method_kind_from_string(v.as<std::string>());
    } else if (key == "gamma") {
      m.gamma = parse_number<double>(v.as<std::string>(), key);
    } else if (key == "nu") {
      m.nu = parse_number<double>(v.as<std::string>(), key);
    } else if (key == "max_iter") {
      m.max_iter = parse_number<std::size_t>(v.as<std::string>(), key);
    } else if (key == "stop") {
      m.stop = stop_rule_from_string(v.as<std::string>());
    } else if (key == "oob_fitted") {
      m.oob_fitted = v.as<std::string>() == "true";
    } else {
      throw UsageError("unknown method key '" + key + "'");
    }
  }
  if (!has_name) throw UsageError("every method needs a name");
  return m;
}

// ---------------------------------------------------------------------------
// Shared flag groups.

struct GammaFlags {
  std::optional<double> gamma;
  std::optional<double> alpha;

  void add(CLI::App* app) {
    auto* g = app->add_option("--gamma", gamma, "Causal regularization strength (gamma >= 0)");
    auto* a = app->add_option("--alpha", alpha, "Quantile level; gamma = chi2(1) quantile at alpha");
    g->excludes(a);
  }

  double resolve(double fallback) const {
    if (alpha) {
      if (!(*alpha > 0.0 && *alpha < 1.0)) throw UsageError("--alpha must lie in (0,1)");
      return gamma_from_alpha(*alpha);
    }
    return gamma.value_or(fallback);
  }
};

struct LearnerFlags {
  std::string kind = "rf";
  std::size_t n_trees = 100;
  std::size_t min_leaf = 5;
  std::optional<std::size_t> mtry;
  std::optional<std::size_t> max_depth;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    app->add_option("--learner", kind, "Base learner: rf, lmrf, linear or tree");
    app->add_option("--n-trees", n_trees, "Trees per forest");
    app->add_option("--min-leaf", min_leaf, "Minimum leaf size");
    app->add_option("--mtry", mtry, "Features tried per split");
    app->add_option("--max-depth", max_depth, "Maximum tree depth");
    app->add_option("--seed", seed, "Learner seed");
  }

  LearnerSpec spec() const {
    LearnerSpec s;
    s.kind = learner_kind_from_string(kind);
    s.tree.n_trees = n_trees;
    s.tree.min_leaf = min_leaf;
    s.tree.mtry = mtry;
    s.tree.max_depth = max_depth;
    s.seed = seed;
    return s;
  }
};

struct BoostFlags {
  GammaFlags gamma;
  std::optional<double> lambda;
  double nu = 0.1;
  std::size_t max_iter = 500;
  std::string stop = "stop2";
  LearnerFlags learner;
  std::optional<std::string> gopt_learner;
  bool strict = false;
  bool in_bag = false;
  std::size_t threads = 1;

  void add(CLI::App* app) {
    gamma.add(app);
    app->add_option("--lambda", lambda, "Not available for boosting");
    app->add_option("--nu", nu, "Step size");
    app->add_option("--max-iter", max_iter, "Boosting iterations");
    app->add_option("--stop", stop, "Stopping rule: stop1, stop2 or stop3");
    learner.add(app);
    app->add_option("--gopt-learner", gopt_learner, "Learner for the (X,A) benchmark of stop3");
    app->add_flag("--strict-gradient-scaling", strict, "Divide the pseudo-response by n");
    app->add_flag("--in-bag", in_bag, "Update the training fit with in-bag forest predictions");
    app->add_option("--threads", threads, "Worker threads");
  }

  BoostConfig config() const {
    if (lambda) throw UsageError("--lambda cannot be combined with boosting");
    BoostConfig cfg;
    cfg.gamma = gamma.resolve(kDefaultGamma);
    cfg.nu = nu;
    cfg.max_iter = max_iter;
    cfg.stop_rule = stop_rule_from_string(stop);
    cfg.learner = learner.spec();
    if (gopt_learner) {
      LearnerSpec g = cfg.learner;
      g.kind = learner_kind_from_string(*gopt_learner);
      cfg.g_opt_learner = g;
    }
    cfg.strict_gradient_scaling = strict;
    cfg.oob_fitted = !in_bag;
    cfg.threads = threads;
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Commands.

struct SimulateArgs {
  std::string model;
  std::size_t n = 300;
  std::size_t n_out = 2000;
  std::string perturbation = "none";
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string prefix;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const ModelId model = model_from_string(a.model);
  const PerturbationKind pert = perturbation_from_string(a.perturbation);
  const Simulation sim = simulate(model, a.n, a.seed);
  const EnvDataset test = gen_out_of_sample(sim.spec, pert, a.n_out, derive_seed(a.seed, 2));
  const fs::path dir = a.out_dir.empty() ? default_out_dir() : fs::path(a.out_dir);
  const std::string stem = a.prefix.empty() ? a.model + "_seed" + std::to_string(a.seed) : a.prefix;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path train_path = dir / (stem + "_train.csv");
  const fs::path test_path = dir / (stem + "_test.csv");
  const fs::path spec_path = dir / (stem + "_spec.json");
  save_csv(train_path, sim.data);
  save_csv(test_path, test);
  write_text(spec_path, sem_spec_to_json(sim.spec));
  out << train_path.string() << '\n' << test_path.string() << '\n' << spec_path.string() << '\n';
  return 0;
}

struct FitAnchorArgs {
  std::string data;
  std::string out;
  GammaFlags gamma;
  std::optional<double> lambda;
};

int cmd_fit_anchor(const FitAnchorArgs& a, std::ostream& out) {
  const double gamma = a.gamma.resolve(kDefaultGamma);
  const EnvDataset raw = load_csv(a.data);
  const EnvDataset data = center(raw);
  const AnchorLinearFit fit = fit_anchor(data, gamma, a.lambda);
  const CenteringInfo& c = *data.centering();
  json j;
  j["gamma"] = gamma;
  j["alpha"] = alpha_from_gamma(std::min(gamma, kGammaCap));
  if (a.lambda) j["lambda"] = *a.lambda;
  j["method"] = fit.method == AnchorMethod::ols_transformed ? "ols_transformed" : "lasso_transformed";
  j["intercept"] = c.y_mean - c.x_mean.dot(fit.beta);
  j["beta"] = to_std(fit.beta);
  j["objective"] = {{"total", fit.objective.total},
                    {"orthogonal", fit.objective.orthogonal_term},
                    {"anchor", fit.objective.anchor_term}};
  j["n"] = data.n();
  emit(j.dump(2), a.out, out);
  return 0;
}

struct FitIcpArgs {
  std::string data;
  std::string out;
  double alpha = 0.05;
  std::optional<std::size_t> screen_k;
  std::optional<std::size_t> max_subset_size;
  std::string mode = "full";
  std::size_t threads = 1;
};

int cmd_fit_icp(const FitIcpArgs& a, std::ostream& out) {
  IcpOptions opts;
  opts.alpha = a.alpha;
  opts.screen_k = a.screen_k;
  opts.max_subset_size = a.max_subset_size;
  opts.threads = a.threads;
  if (a.mode == "full") {
    opts.mode = InvarianceMode::coefficients_and_variance;
  } else if (a.mode == "coefficients") {
    opts.mode = InvarianceMode::coefficients_only;
  } else {
    throw UsageError("--mode must be full or coefficients");
  }
  const EnvDataset data = load_csv(a.data);
  if (!data.env_labels()) throw DataError("ICP needs an ENV column with environment labels");
  const auto part = EnvironmentPartition::from_labels(*data.env_labels());
  const IcpResult res = icp_search(data, part, opts);
  const IcpConfidence conf = icp_confidence_statement(res, data.p());

  json j;
  j["alpha"] = res.alpha;
  j["s_hat"] = res.s_hat.label();
  j["s_hat_indices"] = res.s_hat.indices();
  j["model_rejected"] = res.model_rejected;
  j["subsets_tested"] = res.subsets_tested;
  j["screened"] = res.screened;
  j["accepted"] = json::array();
  for (const auto& acc : res.accepted)
    j["accepted"].push_back({{"set", acc.set.label()}, {"indices", acc.set.indices()}, {"p_value", acc.p_value}});
  j["confidence"] = json::array();
  for (const auto& v : conf.variables) {
    json row{{"variable", "X" + std::to_string(v.index + 1)}, {"causal_at_level", v.causal_at_level}};
    row["max_p_without"] = v.max_p_without ? json(*v.max_p_without) : json(nullptr);
    j["confidence"].push_back(row);
  }
  if (!conf.notice.empty()) j["notice"] = conf.notice;
  emit(j.dump(2), a.out, out);
  return 0;
}

struct FitBoostArgs {
  std::string data;
  std::string out;
  BoostFlags boost;
  std::size_t repetitions = 1;
  std::uint64_t importance_seed = 1;
};

int cmd_fit_boost(const FitBoostArgs& a, std::ostream& out) {
  const BoostConfig cfg = a.boost.config();
  const EnvDataset data = center(load_csv(a.data));
  const BoostFit fit = boost_fit(data, cfg);
  json j;
  j["gamma"] = fit.gamma();
  j["nu"] = fit.nu();
  j["learner"] = learner_spec_to_map(cfg.learner);
  j["stop_rule"] = to_string(cfg.stop_rule);
  j["m_stop"] = fit.m_stop();
  j["objective_at_stop"] = fit.objective(fit.m_stop());
  j["initial_rss"] = fit.initial_rss();
  j["trace"] = fit.trace();
  if (fit.g_opt_rss()) j["g_opt_rss"] = *fit.g_opt_rss();
  j["warnings"] = fit.warnings();
  emit(j.dump(2), a.out, out);
  return 0;
}

int cmd_fit_importance(const FitBoostArgs& a, std::ostream& out) {
  const BoostConfig cfg = a.boost.config();
  const EnvDataset data = center(load_csv(a.data));
  const BoostFit fit = boost_fit(data, cfg);
  ImportanceOptions opts;
  opts.repetitions = a.repetitions;
  opts.seed = a.importance_seed;
  opts.threads = a.boost.threads;
  emit(importance_csv(permutation_importance(fit, data, opts)), a.out, out);
  return 0;
}

struct ReproduceArgs {
  std::string target;
  std::optional<std::size_t> runs;
  bool quick = false;
  ReproduceOptions options;
  std::string out_dir;
  std::string model = "m1";
  std::string perturbation = "moderate_shift";
};

ExperimentPlan custom_plan(const ReproduceArgs& a, const ConfigFile& cfg) {
  if (!cfg.methods || !cfg.methods.IsSequence() || cfg.methods.size() == 0)
    throw UsageError("reproduce custom needs a 'methods' list in the config file");
  ExperimentPlan plan = base_plan("custom", model_from_string(a.model), perturbation_from_string(a.perturbation),
                                  a.options);
  for (const auto& node : cfg.methods) plan.methods.push_back(method_from_yaml(node));
  if (cfg.gains) {
    if (!cfg.gains.IsSequence()) throw UsageError("'gains' must be a list");
    for (const auto& node : cfg.gains) {
      auto m = scalar_map(node, "gain row");
      for (const char* key : {"method", "baseline"})
        if (!m.count(key)) throw UsageError(std::string("gain row needs '") + key + "'");
      plan.gains.push_back({m.count("label") ? m["label"] : m["method"] + " vs " + m["baseline"], m["method"],
                            m["baseline"]});
    }
  }
  return plan;
}

void print_gains(const std::vector<GainRow>& rows, std::ostream& out) {
  for (const auto& row : rows) {
    out << row.label << ':';
    for (std::size_t k = 0; k < row.gains.size(); ++k)
      out << (k ? ", " : " ") << std::fixed << std::setprecision(1) << row.gains[k] << '%';
    out << std::defaultfloat << std::setprecision(6) << '\n';
  }
}

int cmd_reproduce(ReproduceArgs a, const ConfigFile& cfg, std::ostream& out) {
  a.options.replicates = a.runs.value_or(a.quick ? 20 : 100);
  if (a.options.replicates < 1) throw UsageError("--runs must be at least 1");
  const fs::path dir = a.out_dir.empty() ? default_out_dir() : fs::path(a.out_dir);

  if (a.target == "fig10") {
    const ImportancePlan plan = importance_plan(a.options);
    const ImportanceStudy study = run_importance_study(plan);
    write_text(dir / "fig10_ranks.csv", rank_distribution_csv(study));
    const std::vector<std::size_t> active{1, 2};
    json j{{"replicates", plan.replicates},
           {"seed", plan.seed},
           {"top2_rate_x2_x3",
            {{"anchor_boost_rss", ImportanceStudy::top_rate(study.rank_rss, active)},
             {"anchor_boost_median", ImportanceStudy::top_rate(study.rank_med, active)},
             {"forest_oob", ImportanceStudy::top_rate(study.rank_oob, active)}}}};
    write_text(dir / "fig10_summary.json", j.dump(2) + "\n");
    out << (dir / "fig10_ranks.csv").string() << '\n' << (dir / "fig10_summary.json").string() << '\n';
    return 0;
  }

  const std::vector<ExperimentPlan> plans =
      a.target == "custom" ? std::vector<ExperimentPlan>{custom_plan(a, cfg)} : reproduction_plans(a.target, a.options);
  std::vector<GainRow> all_gains;
  for (const auto& plan : plans) {
    const ExperimentResult result = run_experiment(plan);
    write_text(dir / (plan.name + "_quantiles.csv"), quantile_long_csv(result.report));
    write_text(dir / (plan.name + "_summary.json"), experiment_summary_json(result) + "\n");
    out << (dir / (plan.name + "_quantiles.csv")).string() << '\n';
    out << (dir / (plan.name + "_summary.json")).string() << '\n';
    all_gains.insert(all_gains.end(), result.gains.begin(), result.gains.end());
  }
  if (a.target == "table1") {
    // Row order of the published table: model, then shift, then learner.
    std::stable_sort(all_gains.begin(), all_gains.end(), [](const GainRow& x, const GainRow& y) {
      return x.label.substr(0, 4) < y.label.substr(0, 4);
    });
    write_text(dir / "table1_gains.csv", gain_table_csv(all_gains));
    out << (dir / "table1_gains.csv").string() << '\n';
  }
  print_gains(all_gains, out);
  return 0;
}

struct VerifyArgs {
  std::size_t trials = 50;
  std::uint64_t seed = 1;
  double gamma_max = 10.0;
  double tolerance = -1.0;
  std::size_t replicates = 200;
  std::size_t n = 0;
  double alpha = 0.05;
  double env_shift = 1.5;
  double gamma = kDefaultGamma;
  std::size_t threads = 1;
};

int cmd_verify_duality(const VerifyArgs& a, std::ostream& out) {
  const double tol = a.tolerance < 0 ? 1e-6 : a.tolerance;
  const SemSpec spec = make_spec(ModelId::random_linear, a.seed);
  const DualityCheck check = verify_duality(spec, a.trials, derive_seed(a.seed, 1), a.gamma_max);
  const bool pass = check.max_relative_error < tol;
  out << json{{"check", "duality"},
              {"trials", check.trials},
              {"max_relative_error", check.max_relative_error},
              {"tolerance", tol},
              {"pass", pass}}
             .dump()
      << '\n';
  if (!pass) throw NumericError("duality discrepancy above tolerance");
  return 0;
}

int cmd_verify_coverage(const VerifyArgs& a, std::ostream& out) {
  SimOptions sim;
  sim.env_shift = a.env_shift;
  const SemSpec spec = make_spec(ModelId::icp_shift, a.seed, sim);
  const std::size_t n = a.n == 0 ? 200 : a.n;
  const CoverageCheck check = verify_icp_coverage(spec, n, a.replicates, a.alpha, derive_seed(a.seed, 1), a.threads);
  const double level = 1.0 - a.alpha;
  const double bound = level - 3.0 * std::sqrt(level * a.alpha / static_cast<double>(a.replicates));
  const bool pass = check.coverage >= bound;
  out << json{{"check", "coverage"},    {"replicates", check.replicates}, {"alpha", check.alpha},
              {"coverage", check.coverage}, {"empty_rate", check.empty_rate}, {"lower_bound", bound},
              {"pass", pass}}
             .dump()
      << '\n';
  if (!pass) throw NumericError("ICP coverage below its lower bound");
  return 0;
}

int cmd_verify_quantile_link(const VerifyArgs& a, std::ostream& out) {
  const double tol = a.tolerance < 0 ? 0.05 : a.tolerance;
  const QuantileLinkCheck check = verify_quantile_link(a.n == 0 ? 100000 : a.n, a.seed, a.gamma);
  const bool pass = check.relative_error < tol;
  out << json{{"check", "quantile-link"},      {"gamma", check.gamma},
              {"alpha", check.alpha},          {"insample", check.insample},
              {"population", check.population}, {"relative_error", check.relative_error},
              {"tolerance", tol},              {"pass", pass}}
             .dump()
      << '\n';
  if (!pass) throw NumericError("in-sample quantile estimate differs from the regularized risk");
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto fail = [&](std::string_view code, const std::string& message, int exit_code) {
    err << "error: code=" << code << " message=" << one_line(message) << '\n';
    return exit_code;
  };

  CLI::App app{"Causal regularization toolkit: anchor regression, invariant causal prediction and anchor boosting",
               "causalreg"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeFirst);
  app.require_subcommand(1);
  std::string config_path;
  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "YAML file with default flag values");
  };

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Write train/test CSV files and the generating spec");
  sim_cmd->add_option("--model", sim_args.model,
                      "linear_illustration, m1, m2, m3, m2_discr, icp_shift or random_linear")
      ->required();
  sim_cmd->add_option("--n", sim_args.n, "Training rows");
  sim_cmd->add_option("--n-out", sim_args.n_out, "Test rows");
  sim_cmd->add_option("--perturbation", sim_args.perturbation, "Anchor law of the test sample");
  sim_cmd->add_option("--seed", sim_args.seed, "Master seed");
  sim_cmd->add_option("--out-dir", sim_args.out_dir, "Output directory (default $CAUSALREG_OUT_DIR or .)");
  sim_cmd->add_option("--prefix", sim_args.prefix, "File name stem");
  add_config(sim_cmd);

  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a CSV dataset");
  fit_cmd->require_subcommand(1);

  FitAnchorArgs anchor_args;
  auto* anchor_cmd = fit_cmd->add_subcommand("anchor", "Linear anchor regression");
  anchor_cmd->add_option("--data", anchor_args.data, "Input CSV")->required();
  anchor_cmd->add_option("--out", anchor_args.out, "Output JSON (default stdout)");
  anchor_args.gamma.add(anchor_cmd);
  anchor_cmd->add_option("--lambda", anchor_args.lambda, "Lasso penalty on the transformed problem");
  add_config(anchor_cmd);

  FitIcpArgs icp_args;
  auto* icp_cmd = fit_cmd->add_subcommand("icp", "Invariant causal prediction over the ENV column");
  icp_cmd->add_option("--data", icp_args.data, "Input CSV with an ENV column")->required();
  icp_cmd->add_option("--out", icp_args.out, "Output JSON (default stdout)");
  icp_cmd->add_option("--alpha", icp_args.alpha, "Test level");
  icp_cmd->add_option("--screen-k", icp_args.screen_k, "Covariates kept by lasso screening");
  icp_cmd->add_option("--max-subset-size", icp_args.max_subset_size, "Largest subset tested");
  icp_cmd->add_option("--mode", icp_args.mode, "full (coefficients and variance) or coefficients");
  icp_cmd->add_option("--threads", icp_args.threads, "Worker threads");
  add_config(icp_cmd);

  FitBoostArgs boost_args;
  auto* boost_cmd = fit_cmd->add_subcommand("boost", "Anchor boosting; reports the trace and stopping point");
  boost_cmd->add_option("--data", boost_args.data, "Input CSV")->required();
  boost_cmd->add_option("--out", boost_args.out, "Output JSON (default stdout)");
  boost_args.boost.add(boost_cmd);
  add_config(boost_cmd);

  FitBoostArgs imp_args;
  auto* imp_cmd = fit_cmd->add_subcommand("importance", "Permutation importance of an anchor-boosted fit");
  imp_cmd->add_option("--data", imp_args.data, "Input CSV")->required();
  imp_cmd->add_option("--out", imp_args.out, "Output CSV (default stdout)");
  imp_args.boost.add(imp_cmd);
  imp_cmd->add_option("--repetitions", imp_args.repetitions, "Permutations per variable");
  imp_cmd->add_option("--importance-seed", imp_args.importance_seed, "Permutation seed");
  add_config(imp_cmd);

  ReproduceArgs rep_args;
  auto* rep_cmd = app.add_subcommand("reproduce", "Simulation study behind a figure or table");
  rep_cmd->add_option("target", rep_args.target, "fig8, fig9, fig10, fig11, fig12, table1 or custom")->required();
  rep_cmd->add_option("--runs", rep_args.runs, "Replicates (default 100)");
  rep_cmd->add_flag("--quick", rep_args.quick, "Desk scale: 20 replicates unless --runs is given");
  rep_cmd->add_option("--seed", rep_args.options.seed, "Master seed");
  rep_cmd->add_option("--max-iter", rep_args.options.max_iter, "Boosting iterations");
  rep_cmd->add_option("--n-trees", rep_args.options.n_trees, "Trees per forest");
  rep_cmd->add_option("--n", rep_args.options.n, "Training rows");
  rep_cmd->add_option("--n-out", rep_args.options.n_out, "Test rows");
  rep_cmd->add_option("--threads", rep_args.options.threads, "Worker threads");
  rep_cmd->add_option("--out-dir", rep_args.out_dir, "Output directory (default $CAUSALREG_OUT_DIR or .)");
  rep_cmd->add_option("--model", rep_args.model, "Model for target custom");
  rep_cmd->add_option("--perturbation", rep_args.perturbation, "Test perturbation for target custom");
  add_config(rep_cmd);

  auto* verify_cmd = app.add_subcommand("verify", "Numerical self-checks");
  verify_cmd->require_subcommand(1);
  VerifyArgs ver;
  auto* dual_cmd = verify_cmd->add_subcommand("duality", "Worst-case risk against the regularized risk");
  dual_cmd->add_option("--trials", ver.trials, "Random (b, gamma) pairs");
  dual_cmd->add_option("--gamma-max", ver.gamma_max, "gamma ~ U(0, gamma-max)");
  auto* cov_cmd = verify_cmd->add_subcommand("coverage", "ICP type I error control");
  cov_cmd->add_option("--replicates", ver.replicates, "Simulated data sets");
  cov_cmd->add_option("--alpha", ver.alpha, "Test level");
  cov_cmd->add_option("--env-shift", ver.env_shift, "Mean shift of the covariates in environment 2");
  cov_cmd->add_option("--threads", ver.threads, "Worker threads");
  auto* ql_cmd = verify_cmd->add_subcommand("quantile-link", "In-sample quantile against the regularized risk");
  ql_cmd->add_option("--gamma", ver.gamma, "Regularization strength");
  for (auto* sub : {dual_cmd, cov_cmd, ql_cmd}) {
    sub->add_option("--seed", ver.seed, "Seed");
    add_config(sub);
  }
  for (auto* sub : {dual_cmd, ql_cmd}) sub->add_option("--tolerance", ver.tolerance, "Pass threshold");
  for (auto* sub : {cov_cmd, ql_cmd}) sub->add_option("--n", ver.n, "Rows per data set");

  ConfigFile cfg;
  std::vector<std::string> argv = args;
  try {
    if (const auto path = find_config_path(args)) {
      cfg = load_config(*path);
      argv.insert(argv.end(), cfg.flags.begin(), cfg.flags.end());
    }
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    return fail("usage", e.what(), 2);
  } catch (const Error& e) {
    return fail(e.code(), e.what(), e.exit_code());
  }

  try {
    if (*sim_cmd) return cmd_simulate(sim_args, out);
    if (*anchor_cmd) return cmd_fit_anchor(anchor_args, out);
    if (*icp_cmd) return cmd_fit_icp(icp_args, out);
    if (*boost_cmd) return cmd_fit_boost(boost_args, out);
    if (*imp_cmd) return cmd_fit_importance(imp_args, out);
    if (*rep_cmd) return cmd_reproduce(rep_args, cfg, out);
    if (*dual_cmd) return cmd_verify_duality(ver, out);
    if (*cov_cmd) return cmd_verify_coverage(ver, out);
    if (*ql_cmd) return cmd_verify_quantile_link(ver, out);
  } catch (const Error& e) {
    return fail(e.code(), e.what(), e.exit_code());
  } catch (const std::exception& e) {
    return fail("numeric", e.what(), 4);
  }
  return fail("usage", "no command given", 2);
}

}  // namespace causalreg

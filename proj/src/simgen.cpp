#include "causalreg/simgen.hpp"

#include "causalreg/error.hpp"
#include "causalreg/learners.hpp"

#include <json.hpp>

#include <cmath>
#include <random>

namespace causalreg {

std::string to_string(ModelId id) {
  switch (id) {
    case ModelId::linear_illustration: return "linear_illustration";
    case ModelId::m1: return "m1";
    case ModelId::m2: return "m2";
    case ModelId::m3: return "m3";
    case ModelId::m2_discr: return "m2_discr";
    case ModelId::icp_shift: return "icp_shift";
    case ModelId::random_linear: return "random_linear";
  }
  return "unknown";
}

ModelId model_from_string(const std::string& name) {
  for (ModelId id : {ModelId::linear_illustration, ModelId::m1, ModelId::m2, ModelId::m3,
                     ModelId::m2_discr, ModelId::icp_shift, ModelId::random_linear}) {
    if (to_string(id) == name) return id;
  }
  throw UsageError("unknown model '" + name +
                   "' (expected linear_illustration, m1, m2, m3, m2_discr, icp_shift or random_linear)");
}

std::string to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::none: return "none";
    case PerturbationKind::moderate_shift: return "moderate_shift";
    case PerturbationKind::strong_shift: return "strong_shift";
    case PerturbationKind::sqrt10_amplify: return "sqrt10_amplify";
    case PerturbationKind::discrete_amplify_3x: return "discrete_amplify_3x";
  }
  return "unknown";
}

PerturbationKind perturbation_from_string(const std::string& name) {
  for (PerturbationKind k : {PerturbationKind::none, PerturbationKind::moderate_shift,
                             PerturbationKind::strong_shift, PerturbationKind::sqrt10_amplify,
                             PerturbationKind::discrete_amplify_3x}) {
    if (to_string(k) == name) return k;
  }
  throw UsageError("unknown perturbation '" + name + "'");
}

namespace {

std::string to_string(StructuralFunction f) { return f == StructuralFunction::step ? "step" : "none"; }

std::string to_string(AnchorLaw law) {
  switch (law) {
    case AnchorLaw::gaussian: return "gaussian";
    case AnchorLaw::blocks: return "blocks";
    case AnchorLaw::environments: return "environments";
  }
  return "unknown";
}

AnchorLaw anchor_law_from_string(const std::string& s) {
  if (s == "gaussian") return AnchorLaw::gaussian;
  if (s == "blocks") return AnchorLaw::blocks;
  if (s == "environments") return AnchorLaw::environments;
  throw DataError("unknown anchor law '" + s + "'");
}

// Empty spec with the shared layout: X_j <- h_on_x H + eps, H <- eps_H.
SemSpec base_spec(ModelId model, std::size_t p, std::size_t r, std::size_t q) {
  SemSpec s;
  s.model = model;
  s.sem.p = p;
  s.sem.q = q;
  const auto d = static_cast<Eigen::Index>(p + 1 + q);
  s.sem.b = Matrix::Zero(d, d);
  s.sem.m = Matrix::Zero(d, static_cast<Eigen::Index>(r));
  s.sem.noise_sd = Vector::Ones(d);
  s.sem.sigma_a = Matrix::Identity(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r));
  return s;
}

// (SEM1)-family layout: p = 10, r = 2, q = 1, Y <- -2 A1 + 3 H + eps_Y.
SemSpec nonlinear_family(ModelId model, double h_on_x, double x_sd, const Matrix& loadings,
                         bool linear_part) {
  SemSpec s = base_spec(model, 10, 2, 1);
  const Eigen::Index y = 10;
  const Eigen::Index h = 11;
  for (Eigen::Index j = 0; j < 10; ++j) {
    s.sem.b(j, h) = h_on_x;
    s.sem.m.row(j) = loadings.col(j).transpose();
    s.sem.noise_sd(j) = x_sd;
  }
  s.sem.b(y, h) = 3.0;
  s.sem.m(y, 0) = -2.0;
  s.sem.noise_sd(y) = 0.25;
  if (linear_part) {
    s.sem.b(y, 1) = 1.0;
    s.sem.b(y, 2) = 1.0;
  }
  s.f = StructuralFunction::step;
  return s;
}

Matrix normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal;
  Matrix out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

SemSpec random_linear_spec(std::mt19937_64& rng) {
  SemSpec s = base_spec(ModelId::random_linear, 3, 2, 1);
  const Eigen::Index d = 5;
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_real_distribution<double> sd(0.5, 1.5);
  std::bernoulli_distribution edge(0.6);
  // random causal order over all five variables, edges only from earlier to later
  std::vector<Eigen::Index> order{0, 1, 2, 3, 4};
  std::shuffle(order.begin(), order.end(), rng);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a + 1; b < d; ++b)
      if (edge(rng)) s.sem.b(order[static_cast<std::size_t>(b)], order[static_cast<std::size_t>(a)]) = coef(rng);
  s.sem.m = normal_matrix(rng, d, 2);
  for (Eigen::Index i = 0; i < d; ++i) s.sem.noise_sd(i) = sd(rng);
  const Matrix l = normal_matrix(rng, 2, 2);
  s.sem.sigma_a = l * l.transpose() + 0.5 * Matrix::Identity(2, 2);
  return s;
}

}  // namespace

void SemSpec::validate() const {
  sem.validate();
  if (f != StructuralFunction::none) {
    if (sem.p < 3) throw DataError("structural function needs at least three covariates");
    if (!sem.b.col(static_cast<Eigen::Index>(sem.y_index())).isZero(0.0))
      throw DataError("a structural function on Y requires that no variable depends on Y");
  }
  if (law == AnchorLaw::blocks && r() != 2) throw DataError("block anchors need r = 2");
  if (law == AnchorLaw::environments && r() != 1) throw DataError("environment anchors need r = 1");
}

std::vector<std::size_t> SemSpec::parents_of_y() const {
  std::vector<std::size_t> out;
  const auto y = static_cast<Eigen::Index>(sem.y_index());
  for (std::size_t j = 0; j < sem.p; ++j) {
    const bool linear = sem.b(y, static_cast<Eigen::Index>(j)) != 0.0;
    const bool nonlinear = f == StructuralFunction::step && (j == 1 || j == 2);
    if (linear || nonlinear) out.push_back(j);
  }
  return out;
}

double step_function(double x2, double x3) {
  return (x2 <= 0.0 ? 1.0 : 0.0) + ((x2 <= -0.5 && x3 <= 1.0) ? 1.0 : 0.0);
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw DataError(std::string("SemSpec JSON: ") + name + " has the wrong number of rows");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw DataError(std::string("SemSpec JSON: ") + name + " has the wrong number of columns");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

}  // namespace

std::string sem_spec_to_json(const SemSpec& spec) {
  nlohmann::json j;
  j["model"] = to_string(spec.model);
  j["p"] = spec.sem.p;
  j["r"] = spec.r();
  j["q"] = spec.sem.q;
  j["B"] = matrix_to_json(spec.sem.b);
  j["M"] = matrix_to_json(spec.sem.m);
  j["noise_sd"] = std::vector<double>(spec.sem.noise_sd.data(), spec.sem.noise_sd.data() + spec.sem.noise_sd.size());
  j["sigma_a"] = matrix_to_json(spec.sem.sigma_a);
  j["f"] = to_string(spec.f);
  j["anchor_law"] = to_string(spec.law);
  return j.dump(2);
}

SemSpec sem_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("SemSpec JSON: ") + e.what());
  }
  try {
    SemSpec s;
    s.model = model_from_string(j.at("model").get<std::string>());
    s.sem.p = j.at("p").get<std::size_t>();
    s.sem.q = j.at("q").get<std::size_t>();
    const auto r = static_cast<Eigen::Index>(j.at("r").get<std::size_t>());
    const auto d = static_cast<Eigen::Index>(s.sem.p + 1 + s.sem.q);
    s.sem.b = matrix_from_json(j.at("B"), d, d, "B");
    s.sem.m = matrix_from_json(j.at("M"), d, r, "M");
    const auto sd = j.at("noise_sd").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(sd.size()) != d) throw DataError("SemSpec JSON: noise_sd has the wrong length");
    s.sem.noise_sd = Eigen::Map<const Vector>(sd.data(), d);
    s.sem.sigma_a = matrix_from_json(j.at("sigma_a"), r, r, "sigma_a");
    const auto f = j.at("f").get<std::string>();
    if (f == "step") s.f = StructuralFunction::step;
    else if (f == "none") s.f = StructuralFunction::none;
    else throw DataError("SemSpec JSON: unknown structural function '" + f + "'");
    s.law = anchor_law_from_string(j.at("anchor_law").get<std::string>());
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("SemSpec JSON: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("SemSpec JSON: ") + e.what());
  }
}

SemSpec make_spec(ModelId model, std::uint64_t seed, const SimOptions& options) {
  std::mt19937_64 rng(derive_seed(seed, 0));
  SemSpec s;
  switch (model) {
    case ModelId::linear_illustration: {
      s = base_spec(model, 10, 2, 1);
      Matrix loadings = normal_matrix(rng, 2, options.shared_loadings ? 1 : 10);
      if (options.shared_loadings) loadings = loadings.replicate(1, 10).eval();
      for (Eigen::Index j = 0; j < 10; ++j) {
        s.sem.b(j, 11) = 1.0;
        s.sem.m.row(j) = loadings.col(j).transpose();
      }
      s.sem.b(10, 1) = 3.0;
      s.sem.b(10, 2) = 3.0;
      s.sem.b(10, 11) = 1.0;
      s.sem.m(10, 0) = -2.0;
      s.sem.noise_sd(10) = 0.25;
      break;
    }
    case ModelId::m1:
      s = nonlinear_family(model, 2.0, 0.5, Matrix::Ones(2, 10), false);
      break;
    case ModelId::m2:
      s = nonlinear_family(model, 2.0, 0.5, Matrix::Ones(2, 10), true);
      break;
    case ModelId::m3: {
      Matrix gamma = options.gamma_override ? *options.gamma_override : normal_matrix(rng, 2, 10);
      if (gamma.rows() != 2 || gamma.cols() != 10) throw UsageError("M3 loadings must be 2 x 10");
      s = nonlinear_family(model, 1.0, 1.0, gamma, true);
      break;
    }
    case ModelId::m2_discr: {
      Matrix loadings(2, 10);
      const double sign = options.m2_discr_flipped ? -1.0 : 1.0;
      loadings.row(0).setConstant(2.0 * sign);
      loadings.row(1).setConstant(-2.0 * sign);
      s = nonlinear_family(model, 2.0, 0.5, loadings, true);
      s.law = AnchorLaw::blocks;
      break;
    }
    case ModelId::icp_shift: {
      // X1 <- eps; X2 <- 0.8 X1 + eps; X3 <- eps; Y <- X2 - 0.8 X3 + eps;
      // X4 <- 0.7 Y + eps; X5 <- 0.5 X4 + eps; environment 2 shifts every X_j.
      s = base_spec(model, 5, 1, 0);
      s.sem.b(1, 0) = 0.8;
      s.sem.b(5, 1) = 1.0;
      s.sem.b(5, 2) = -0.8;
      s.sem.b(3, 5) = 0.7;
      s.sem.b(4, 3) = 0.5;
      for (Eigen::Index j = 0; j < 5; ++j) s.sem.m(j, 0) = options.env_shift;
      s.law = AnchorLaw::environments;
      break;
    }
    case ModelId::random_linear:
      s = random_linear_spec(rng);
      break;
  }
  s.validate();
  return s;
}

namespace {

Matrix draw_anchors(const SemSpec& spec, std::size_t n, PerturbationKind kind, std::mt19937_64& rng) {
  const auto nn = static_cast<Eigen::Index>(n);
  const auto r = static_cast<Eigen::Index>(spec.r());
  std::normal_distribution<double> normal;
  const bool gaussian_kind = kind == PerturbationKind::moderate_shift ||
                             kind == PerturbationKind::strong_shift ||
                             kind == PerturbationKind::sqrt10_amplify;
  if (gaussian_kind && spec.law != AnchorLaw::gaussian)
    throw UsageError("perturbation " + to_string(kind) + " needs Gaussian anchors");
  if (kind == PerturbationKind::discrete_amplify_3x && spec.law != AnchorLaw::blocks)
    throw UsageError("discrete_amplify_3x needs the block anchor design");

  switch (spec.law) {
    case AnchorLaw::blocks: {
      if (n % 2 != 0) throw UsageError("the block anchor design needs an even sample size");
      const double level = kind == PerturbationKind::discrete_amplify_3x ? 3.0 : 1.0;
      Matrix a = Matrix::Zero(nn, 2);
      a.block(0, 0, nn / 2, 1).setConstant(level);
      a.block(nn / 2, 1, nn - nn / 2, 1).setConstant(level);
      return a;
    }
    case AnchorLaw::environments: {
      if (kind != PerturbationKind::none) throw UsageError("environment anchors accept only perturbation none");
      Matrix a = Matrix::Zero(nn, 1);
      a.bottomRows(nn - nn / 2).setConstant(1.0);
      return a;
    }
    case AnchorLaw::gaussian:
      break;
  }

  if (kind == PerturbationKind::moderate_shift || kind == PerturbationKind::strong_shift) {
    const double mu_mean = kind == PerturbationKind::moderate_shift ? 1.0 : 10.0;
    const double mu_sd = kind == PerturbationKind::moderate_shift ? 2.0 : 1.0;
    Matrix a(nn, r);
    for (Eigen::Index i = 0; i < nn; ++i) {
      for (Eigen::Index k = 0; k < r; ++k) {
        const double mu = mu_mean + mu_sd * normal(rng);
        a(i, k) = mu + normal(rng);
      }
    }
    return a;
  }
  Eigen::LLT<Matrix> llt(spec.sem.sigma_a);
  if (llt.info() != Eigen::Success) throw DataError("anchor covariance is not positive definite");
  Matrix z = normal_matrix(rng, nn, r);
  Matrix a = z * llt.matrixL().transpose();
  if (kind == PerturbationKind::sqrt10_amplify) a *= std::sqrt(10.0);
  return a;
}

}  // namespace

EnvDataset sample_from_spec(const SemSpec& spec, std::size_t n, PerturbationKind kind,
                            std::uint64_t seed, bool zero_noise) {
  spec.validate();
  if (n < 1) throw UsageError("sample size must be at least 1");
  std::mt19937_64 rng(seed);
  const Matrix a = draw_anchors(spec, n, kind, rng);
  const auto nn = static_cast<Eigen::Index>(n);
  const auto d = static_cast<Eigen::Index>(spec.sem.d());

  Matrix eps = normal_matrix(rng, nn, d);
  if (zero_noise) eps.setZero();
  eps = eps * spec.sem.noise_sd.asDiagonal();
  // rows z_i = (I - B)^{-1}(eps_i + M a_i)
  const Matrix t = spec.sem.total_effects();
  Matrix z = (eps + a * spec.sem.m.transpose()) * t.transpose();

  const auto p = static_cast<Eigen::Index>(spec.p());
  const Eigen::Index yi = p;
  if (spec.f == StructuralFunction::step) {
    for (Eigen::Index i = 0; i < nn; ++i) z(i, yi) += step_function(z(i, 1), z(i, 2));
  }

  std::optional<std::vector<int>> labels;
  if (spec.law != AnchorLaw::gaussian) {
    labels = std::vector<int>(n, 1);
    for (std::size_t i = n / 2; i < n; ++i) (*labels)[i] = 2;
  }
  return EnvDataset(z.col(yi), z.leftCols(p), a, std::move(labels));
}

Simulation simulate(ModelId model, std::size_t n, std::uint64_t seed, const SimOptions& options) {
  SemSpec spec = make_spec(model, seed, options);
  EnvDataset data = sample_from_spec(spec, n, PerturbationKind::none, derive_seed(seed, 1), options.zero_noise);
  return {std::move(data), std::move(spec)};
}

Simulation gen_linear_illustration(std::size_t n, std::uint64_t seed, const SimOptions& options) {
  return simulate(ModelId::linear_illustration, n, seed, options);
}
Simulation gen_m1(std::size_t n, std::uint64_t seed) { return simulate(ModelId::m1, n, seed); }
Simulation gen_m2(std::size_t n, std::uint64_t seed) { return simulate(ModelId::m2, n, seed); }
Simulation gen_m3(std::size_t n, std::uint64_t seed, const SimOptions& options) {
  return simulate(ModelId::m3, n, seed, options);
}
Simulation gen_m2_discr(std::size_t n, std::uint64_t seed, const SimOptions& options) {
  return simulate(ModelId::m2_discr, n, seed, options);
}

EnvDataset gen_out_of_sample(const SemSpec& spec, PerturbationKind kind, std::size_t n_out,
                             std::uint64_t seed) {
  return sample_from_spec(spec, n_out, kind, seed);
}

double mean_abs_offdiag_correlation(const Matrix& x) {
  const Eigen::Index p = x.cols();
  if (p < 2) throw UsageError("need at least two columns");
  const Matrix c = x.rowwise() - x.colwise().mean();
  const Matrix cov = c.transpose() * c;
  const Vector sd = cov.diagonal().cwiseSqrt();
  double total = 0.0;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = 0; k < p; ++k)
      if (j != k) total += std::abs(cov(j, k) / (sd(j) * sd(k)));
  return total / static_cast<double>(p * (p - 1));
}

}  // namespace causalreg

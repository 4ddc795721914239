#pragma once

#include "causalreg/data_model.hpp"
#include "causalreg/linear_sem.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace causalreg {

enum class ModelId {
  linear_illustration,
  m1,
  m2,
  m3,
  m2_discr,
  icp_shift,      // five covariates, two shift environments, pa(Y) = {X2, X3}
  random_linear,  // random acyclic linear model (p=3, r=2, q=1) for the duality check
};

std::string to_string(ModelId id);
ModelId model_from_string(const std::string& name);

enum class PerturbationKind { none, moderate_shift, strong_shift, sqrt10_amplify, discrete_amplify_3x };

std::string to_string(PerturbationKind kind);
PerturbationKind perturbation_from_string(const std::string& name);

/// Nonlinear part added to Y on top of the linear equations.
enum class StructuralFunction {
  none,
  step,  // 1{x2 <= 0} + 1{x2 <= -0.5} 1{x3 <= 1}
};

enum class AnchorLaw {
  gaussian,      // A ~ N(0, sigma_a)
  blocks,        // first half of rows A = e1, second half A = e2
  environments,  // A1 = 0 in the first half, 1 in the second; labels 1 and 2
};

/// Full generating description. Variables are ordered (X_1..X_p, Y, H_1..H_q)
/// and solve Z = B Z + eps + M A; the structural function, when present, is
/// added to Y afterwards, so nothing may depend on Y in that case.
struct SemSpec {
  ModelId model = ModelId::m1;
  LinearSem sem;
  StructuralFunction f = StructuralFunction::none;
  AnchorLaw law = AnchorLaw::gaussian;

  std::size_t p() const noexcept { return sem.p; }
  std::size_t r() const noexcept { return sem.r(); }
  std::size_t q() const noexcept { return sem.q; }

  void validate() const;

  /// Zero-based covariate indices that enter the equation of Y.
  std::vector<std::size_t> parents_of_y() const;
};

double step_function(double x2, double x3);

/// JSON text that reloads to an identical spec (doubles round-trip exactly).
std::string sem_spec_to_json(const SemSpec& spec);
SemSpec sem_spec_from_json(const std::string& text);

struct SimOptions {
  bool m2_discr_flipped = false;       // read the discrete X equation as 2A2 - 2A1
  bool shared_loadings = false;        // linear illustration: one loading pair for every X_j
  std::optional<Matrix> gamma_override;  // M3: fixed r x p loading matrix
  double env_shift = 1.5;              // icp_shift: shift applied in environment 2
  bool zero_noise = false;             // H and every eps set to 0
};

struct Simulation {
  EnvDataset data;
  SemSpec spec;
};

/// Builds the spec (drawing random coefficients from `seed`) and a training
/// sample of size n from the unperturbed law.
Simulation simulate(ModelId model, std::size_t n, std::uint64_t seed, const SimOptions& options = {});

Simulation gen_linear_illustration(std::size_t n, std::uint64_t seed, const SimOptions& options = {});
Simulation gen_m1(std::size_t n, std::uint64_t seed);
Simulation gen_m2(std::size_t n, std::uint64_t seed);
Simulation gen_m3(std::size_t n, std::uint64_t seed, const SimOptions& options = {});
Simulation gen_m2_discr(std::size_t n, std::uint64_t seed, const SimOptions& options = {});

SemSpec make_spec(ModelId model, std::uint64_t seed, const SimOptions& options = {});

/// Fresh sample from a fixed spec with anchors drawn according to `kind`.
/// Structural coefficients are taken from the spec, never redrawn.
///   moderate_shift: mu_ij ~ N(1, 2^2), A_ij ~ N(mu_ij, 1)
///   strong_shift:   mu_ij ~ N(10, 1),  A_ij ~ N(mu_ij, 1)
///   sqrt10_amplify: sqrt(10) times a draw from the training law
///   discrete_amplify_3x: the block design multiplied by 3
EnvDataset sample_from_spec(const SemSpec& spec, std::size_t n, PerturbationKind kind,
                            std::uint64_t seed, bool zero_noise = false);

EnvDataset gen_out_of_sample(const SemSpec& spec, PerturbationKind kind, std::size_t n_out,
                             std::uint64_t seed);

/// Mean absolute off-diagonal entry of the empirical correlation matrix of x.
double mean_abs_offdiag_correlation(const Matrix& x);

}  // namespace causalreg

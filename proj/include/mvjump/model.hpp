#pragma once

// Coefficient sets for the base and hat equations, the built-in model zoo,
// assumption-constant auditing and the ergodicity rates.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvjump/jump_measure.hpp"
#include "mvjump/measure.hpp"

namespace mvjump {

struct CoefficientSet {
  using Drift = std::function<void(double t, std::span<const double> x, const MeasureView& mu,
                                   std::span<double> out)>;
  // out is d x m, row-major.
  using Diffusion = std::function<void(double t, std::span<const double> x, const MeasureView& mu,
                                       std::span<double> out)>;
  using Jump = std::function<void(double t, std::span<const double> x, const MeasureView& mu,
                                  JumpMark u, std::span<double> out)>;

  std::size_t dim_state = 1;
  std::size_t dim_noise = 1;
  Drift drift;
  Diffusion diffusion;
  Jump jump;
  bool autonomous = true;
  // False when no coefficient reads its measure argument.
  bool measure_dependent = true;

  std::vector<double> eval_drift(double t, std::span<const double> x, const MeasureView& mu) const;
  std::vector<double> eval_diffusion(double t, std::span<const double> x,
                                     const MeasureView& mu) const;
  std::vector<double> eval_jump(double t, std::span<const double> x, const MeasureView& mu,
                                JumpMark u) const;
};

// One equation: coefficients plus its jump-mark measure.
struct SdeSystem {
  std::string id;
  CoefficientSet coefficients;
  JumpMeasure nu;
  std::uint64_t fingerprint = 0;  // hash of id and parameters

  std::size_t dim() const { return coefficients.dim_state; }
};

// Constants of one equation's growth, monotonicity and jump conditions.
struct SystemConstants {
  double c1 = 0.0;        // |b|^2 + |sigma|^2 <= c1 (1 + |x|^2 + |mu|_2^2)
  double c3 = 0.0;        // one-sided Lipschitz constant
  double c4 = 0.0;        // jump growth and Lipschitz constant
  double c3_prime = 0.0;  // dissipativity: measure coefficient
  double c4_prime = 0.0;  // dissipativity: state coefficient

  bool operator==(const SystemConstants&) const = default;
};

struct AssumptionConstants {
  SystemConstants base;
  SystemConstants hat;
  double lambda = 0.0;
  double lambda_hat = 0.0;

  bool operator==(const AssumptionConstants&) const = default;
};

struct ModelPair {
  SdeSystem base;
  SdeSystem hat;
  AssumptionConstants constants;
};

struct ModelConfig {
  std::string id;
  std::map<std::string, double> params;
  std::map<std::string, std::vector<double>> arrays;
  std::vector<MarkAtom> marks;  // used by user descriptors

  bool operator==(const ModelConfig&) const = default;
};

struct PairConfig {
  ModelConfig model;
  std::optional<ModelConfig> hat_model;  // defaults to "zero" of matching dimension
  std::optional<AssumptionConstants> declared;
};

// Known zoo ids.
std::vector<std::string> zoo_ids();

// Builds one system and, for zoo models, its analytic constants.
SdeSystem build_system(const ModelConfig& config, std::optional<SystemConstants>* analytic = nullptr);

ModelPair build_model(const PairConfig& config);

struct Rates {
  double lambda = 0.0;
  double lambda_hat = 0.0;
  bool base_condition = false;  // lambda > 4 c1
  bool hat_condition = false;   // lambda_hat > 2 c1_hat
};

Rates theoretical_rates(const AssumptionConstants& constants, double nu1_mass, double nu2_mass);

struct ProbePlan {
  std::size_t pairs = 10000;
  double x_radius = 10.0;
  std::size_t cloud_size = 8;
  double cloud_radius = 10.0;
  double t_max = 10.0;
  std::uint64_t seed = 0;
  // Relative slack for equality cases the analytic constants attain.
  double rel_tol = 1e-9;
};

struct AuditEntry {
  std::string system;      // "base" or "hat"
  std::string condition;   // growth, jump_growth, jump_growth_integrated, jump_lipschitz,
                           // monotone, dissipative
  double declared = 0.0;
  double observed = 0.0;   // tightest constant seen; for "dissipative" the largest admissible c4'
  bool pass = true;
};

struct Counterexample {
  std::string system;
  std::string condition;
  std::size_t probe = 0;
  double t = 0.0;
  std::vector<double> x1, x2;
  std::vector<double> mu1, mu2;  // cloud atoms, row-major
  double mark = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct AuditReport {
  std::size_t probes = 0;
  std::vector<AuditEntry> entries;
  std::vector<Counterexample> counterexamples;  // first witness per failing condition
  bool all_pass() const;
  const AuditEntry& entry(const std::string& system, const std::string& condition) const;
};

// Falsification-only check of the declared constants on sampled pairs.
AuditReport audit_assumptions(const ModelPair& model, const ProbePlan& probe);

// Picks c3' on a log grid to maximize the margin c4' - c3', with c4' the
// largest value the probe set admits. Returns (c3', c4').
std::pair<double, double> fit_dissipativity(const SdeSystem& sys, const ProbePlan& plan);

// The probe pairs themselves; probe i depends only on (seed, i).
struct ProbePair {
  double t;
  std::vector<double> x1, x2;
  EmpiricalMeasure mu1, mu2;
};
ProbePair make_probe(const ProbePlan& plan, std::size_t dim, std::size_t i);

}  // namespace mvjump

#pragma once

// Declarative experiment configuration (JSON) and run manifests.
//
// Top-level keys: model, hat_model, constants, initial, numeric, run,
// output. Every object rejects unknown keys. parse_config collects all
// schema problems before failing; resolve_config fills defaults that
// depend on the model (state dimension, theoretical rates).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvjump/ergodicity.hpp"
#include "mvjump/error.hpp"
#include "mvjump/generator.hpp"
#include "mvjump/model.hpp"
#include "mvjump/particle.hpp"
#include "json.hpp"

namespace mvjump {

class ConfigError : public InvalidArgument {
 public:
  explicit ConfigError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

// {"kind": "dirac", "point": [...]}, {"kind": "gaussian", "mean": [...],
// "stddev": [...]} or {"kind": "cloud", "path": "cloud.csv"}.
struct LawSpec {
  std::string kind = "dirac";
  std::vector<double> point;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::string path;

  InitialLaw build() const;
  bool operator==(const LawSpec&) const = default;
};

struct NumericSection {
  std::size_t n = 1000;
  double h = 0.01;
  double horizon = 1.0;  // key "T"
  double t0 = 0.0;
  std::vector<std::uint64_t> seeds{1};
  std::string jump_mode = "raw";
  // Residual tolerance c_mc / sqrt(n) + c_h h, for the forward and the lifted
  // equation, and stationary-gap tolerance gap_c_n / n + gap_c_h h. Unset
  // constants come from the tolerance fixture, else from fixed defaults.
  std::optional<double> c_mc, c_h;
  std::optional<double> lifted_c_mc, lifted_c_h;
  std::optional<double> gap_c_n, gap_c_h;
  std::string tolerance_fixture;

  ToleranceModel fpe_tolerance() const { return {c_mc.value_or(1.0), c_h.value_or(1.0)}; }
  ToleranceModel lifted_tolerance() const { return {lifted_c_mc.value_or(1.0), lifted_c_h.value_or(1.0)}; }
  GapTolerance gap_tolerance() const { return {gap_c_n.value_or(5.0), gap_c_h.value_or(1.0)}; }

  bool operator==(const NumericSection&) const = default;
};

struct RunSection {
  std::size_t record_every = 1;
  std::size_t check_every = 10;  // residuals at every k-th grid time
  // picard
  double window = 0.0;  // 0: search for the contraction window
  std::size_t iterations = 6;
  double ratio_bound = 0.5;
  // ergodicity
  double burn_in = 40.0;
  std::size_t checkpoints = 20;
  double fit_from = 0.0;
  std::optional<double> lambda;  // defaults to the model's theoretical rate
  double rate_slack = 0.02;
  std::vector<double> x;         // hat starting point; defaults to the origin
  bool equivalence = false;      // also write the product-form report
  // flow-check
  std::optional<double> restart;  // defaults to T / 2
  // chaos
  std::vector<std::size_t> chaos_sizes{250, 1000, 4000};
  std::size_t replications = 32;
  double chaos_spread = 2.0;
  // shared
  double se_slack = 3.0;
  std::size_t assignment_cap = 1024;
  bool allow_sliced = false;
  // assumptions
  std::size_t probes = 10000;
  // noise-dump
  std::size_t noise_draws = 8;
  std::size_t noise_particles = 2;
  // w2
  std::string cloud_a, cloud_b;
  std::string w2_method = "auto";  // auto, exact_1d, exact_assignment, sliced

  bool operator==(const RunSection&) const = default;
};

struct OutputSection {
  std::string directory = "out";
  std::string format = "csv";  // csv or json

  bool operator==(const OutputSection&) const = default;
};

struct ExperimentConfig {
  ModelConfig model{"mvou-jump", {}, {}, {}};
  std::optional<ModelConfig> hat_model;
  std::optional<AssumptionConstants> constants;
  LawSpec xi;     // initial.base
  LawSpec theta;  // initial.hat
  NumericSection numeric;
  RunSection run;
  OutputSection output;

  PairConfig pair_config() const { return {model, hat_model, constants}; }
  JumpMode jump_mode() const { return jump_mode_from_name(numeric.jump_mode); }
  TimeGrid grid() const { return TimeGrid(numeric.t0, numeric.t0 + numeric.horizon, numeric.h); }
  bool operator==(const ExperimentConfig&) const = default;
};

// Throws ConfigError with one diagnostic per problem ("path: message").
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Fills model-dependent defaults and loads the tolerance fixture. Relative
// paths inside the config are taken relative to `base_dir`.
ExperimentConfig resolve_config(ExperimentConfig config, const std::string& base_dir = ".");

nlohmann::json to_json(const ExperimentConfig& config);
nlohmann::json to_json(const ModelConfig& model);

struct ManifestArtifact {
  std::string file;
  std::uint64_t bytes = 0;
  std::string fnv1a;  // 16 hex digits over the file contents
};

struct RunManifest {
  std::string subcommand;
  std::string config_hash;
  std::string code_version;
  std::vector<std::uint64_t> seeds;
  std::vector<ManifestArtifact> artifacts;
  std::vector<std::pair<std::string, double>> timings;  // seconds per phase

  nlohmann::json to_json() const;
};

std::string hex64(std::uint64_t v);
// FNV-1a of a file's bytes.
std::uint64_t file_checksum(const std::string& path, std::uint64_t* bytes = nullptr);
const char* code_version();

}  // namespace mvjump

#pragma once

// Subcommand dispatch for the mvjump tool. Every run writes into the
// output directory:
//   config.resolved.json  the fully resolved configuration
//   <numeric artifacts>   CSV (or JSON with output.format = "json")
//   report.json           gates, pass flag and the list of failed gates
//   manifest.json         config hash, version, seeds, checksums, timings

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mvjump/config.hpp"

namespace mvjump::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitGateFailed = 1,
  kExitInvalidConfig = 2,
  kExitNumerical = 3,
  kExitRuntime = 4,
};

// Command-line flags that override config keys before validation.
struct Overrides {
  std::optional<std::uint64_t> seed;      // replaces numeric.seeds with [seed]
  std::optional<std::size_t> particles;   // numeric.n
  std::optional<double> dt;               // numeric.h
  std::optional<double> horizon;          // numeric.T
  std::optional<std::string> out;         // output.directory
  std::optional<std::string> format;      // output.format
  std::optional<std::string> jump_mode;   // numeric.jump_mode
  std::optional<std::string> cloud_a;     // run.cloud_a
  std::optional<std::string> cloud_b;     // run.cloud_b
};

struct Gate {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct RunResult {
  int exit_code = kExitOk;
  std::vector<Gate> gates;
  std::vector<std::string> artifacts;  // file names inside the output directory
  std::vector<std::string> diagnostics;
  std::string output_dir;
};

std::vector<std::string> subcommands();

// Loads, overrides, validates and resolves a config. Without a path the
// defaults are used. Throws ConfigError.
ExperimentConfig prepare_config(const std::optional<std::string>& config_path, const Overrides& overrides);

// Runs one subcommand; never throws. Human-readable progress goes to `log`.
RunResult run(const std::string& subcommand, const std::optional<std::string>& config_path,
              const Overrides& overrides, std::ostream& log);

struct Calibration {
  ToleranceModel fpe;
  ToleranceModel lifted;
  GapTolerance gap;
  std::size_t seeds = 0;
};

// c_mc from the spread of residuals over seeds at fixed h, c_h from the
// change of the seed-averaged residual when h is halved; the same for the
// stationary-gap tolerance of the flow check. Needs at least 3 seeds.
Calibration calibrate(const ExperimentConfig& config);
// The fixture file contents: the six constants plus the calibration inputs.
nlohmann::json fixture_json(const Calibration& cal, const ExperimentConfig& config);

// Converts CSV text (header row first) to a JSON array of row objects.
nlohmann::json csv_to_json(const std::string& csv_text);

}  // namespace mvjump::cli

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mddmd/dmd.hpp"
#include "mddmd/dynamics.hpp"
#include "mddmd/perturbation.hpp"

namespace mddmd::experiment {

/// Everything one batch run needs. Parsed from a JSON config file, optionally
/// layered over a named preset.
struct RunConfig {
  std::string name = "custom";
  dynamics::HamiltonianSystem system = dynamics::HamiltonianSystem::coupled();
  dynamics::ExperimentConfig experiment;
  std::int64_t kernelEnsembleSize = 10000;
  std::optional<double> kernelSigma;  // defaults to experiment.sigma
  double rankTol = linalg::kDefaultRankTol;
  ExponentMap exponentMap = ExponentMap::FiniteDifference;
  perturbation::GradientLayout gradientLayout = perturbation::GradientLayout::Consistent;
  std::filesystem::path outputDir;
  bool figureData = true;

  double effectiveKernelSigma() const { return kernelSigma.value_or(experiment.sigma); }
};

std::vector<std::string> preset_names();
/// Throws ConfigError for unknown names.
RunConfig preset(const std::string& name);

/// Parses JSON text. A "preset" key (or `base_preset`) selects the starting
/// point that the remaining keys override. Errors carry line/column or the
/// offending field path.
RunConfig parse_config(const std::string& text,
                       const std::optional<std::string>& base_preset = std::nullopt);
RunConfig load_config(const std::filesystem::path& path,
                      const std::optional<std::string>& base_preset = std::nullopt);

/// Canonical JSON form of the result-determining fields.
std::string canonical_config(const RunConfig& config);
/// Hex SHA-256 of canonical_config.
std::string config_hash(const RunConfig& config);

dynamics::ValidationReport validate(const RunConfig& config);

struct ComponentRmse {
  double y1 = 0.0;
  double y2 = 0.0;
};

struct RunResult {
  std::filesystem::path outputDir;
  ComponentRmse dmdRmse;
  ComponentRmse mddmdRmse;
  ComponentRmse measurementRmse;
  std::vector<std::string> warnings;
  std::string summaryJson;
};

struct RunOptions {
  std::optional<std::filesystem::path> outputDir;  // overrides the config
  int threads = 0;                                  // 0: hardware concurrency
};

/// Ground truth, measurement, DMD and MDDMD, then CSV + summary.json output.
RunResult run(const RunConfig& config, const RunOptions& options = {});

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "MDDMD_OUTPUT_DIR";

/// 17 significant digits, the CSV number format.
std::string format_number(double value);

}  // namespace mddmd::experiment

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mddmd/error.hpp"
#include "mddmd/experiment.hpp"

namespace ex = mddmd::experiment;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

int exit_code_for(const mddmd::Error& e) {
  switch (e.code()) {
    case mddmd::ErrorCode::ConfigError:
    case mddmd::ErrorCode::InvalidArgument:
      return kExitConfig;
    default:
      return kExitNumerical;
  }
}

void print_report(const mddmd::dynamics::ValidationReport& report) {
  for (const auto& v : report.violations) std::cerr << "error: " << v << "\n";
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-dependent dynamic mode decomposition experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string preset_name;
  int threads = 0;

  auto* run = app.add_subcommand("run", "Run an experiment and write CSV + summary.json");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--preset", preset_name, "Preset the config is layered over");
  run->add_option("--threads", threads, "Worker threads (0: all cores)")
      ->check(CLI::NonNegativeNumber);

  auto* check = app.add_subcommand("validate", "Check a config without running it");
  check->add_option("config", config_path, "JSON config file")->required();
  check->add_option("--preset", preset_name, "Preset the config is layered over");

  auto* list = app.add_subcommand("presets", "List the built-in presets");
  auto* show = app.add_subcommand("show", "Print the canonical form of a preset");
  show->add_option("name", preset_name, "Preset name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      for (const auto& name : ex::preset_names()) std::cout << name << "\n";
      return kExitOk;
    }
    if (show->parsed()) {
      std::cout << ex::canonical_config(ex::preset(preset_name)) << "\n";
      return kExitOk;
    }

    std::optional<std::string> base;
    if (!preset_name.empty()) base = preset_name;
    const ex::RunConfig config = ex::load_config(config_path, base);
    const auto report = ex::validate(config);

    if (check->parsed()) {
      print_report(report);
      if (!report.ok()) return kExitConfig;
      std::cout << "ok " << config.name << " " << ex::config_hash(config) << "\n";
      return kExitOk;
    }

    if (!report.ok()) {
      print_report(report);
      return kExitConfig;
    }
    ex::RunOptions options;
    options.threads = threads;
    if (!out_dir.empty()) options.outputDir = out_dir;
    const ex::RunResult result = ex::run(config, options);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    std::printf("output %s\n", result.outputDir.string().c_str());
    std::printf("rmse dmd         y1 %.6g  y2 %.6g\n", result.dmdRmse.y1, result.dmdRmse.y2);
    std::printf("rmse mddmd       y1 %.6g  y2 %.6g\n", result.mddmdRmse.y1,
                result.mddmdRmse.y2);
    std::printf("rmse measurement y1 %.6g  y2 %.6g\n", result.measurementRmse.y1,
                result.measurementRmse.y2);
    return kExitOk;
  } catch (const mddmd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

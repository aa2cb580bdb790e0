#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "mddmd/error.hpp"
#include "mddmd/experiment.hpp"

using namespace mddmd;
namespace ex = mddmd::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mddmd_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::string* header = nullptr) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

ex::RunConfig quick(const std::string& preset = "fig-sigma-0.5") {
  ex::RunConfig c = ex::preset(preset);
  c.experiment.nEns = 200;
  c.kernelEnsembleSize = 200;
  c.experiment.tFinal = 20.0;
  return c;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MDDMD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("presets") {
  const auto names = ex::preset_names();
  CHECK(names.size() == 5);
  const auto a = ex::preset("fig-sigma-0.5");
  CHECK(a.system.kind == dynamics::HamiltonianSystem::Kind::Coupled);
  CHECK(a.experiment.sigma == 0.5);
  CHECK(a.experiment.xHat == dynamics::Observed{1.0, 0.0});
  CHECK(a.experiment.nEns == 10000);
  CHECK(a.experiment.dtInt == 0.1);
  CHECK(a.experiment.dtSample == 0.1);
  CHECK(a.experiment.tFinal == 50.0);
  CHECK(ex::validate(a).ok());
  CHECK(ex::validate(a).warnings.empty());

  const auto b = ex::preset("fig-slowfast-1.0");
  CHECK(b.system.kind == dynamics::HamiltonianSystem::Kind::SlowFast);
  CHECK(b.system.epsilon == 10.0);
  CHECK(b.experiment.sigma == doctest::Approx(1.0 / std::sqrt(10.0)));
  CHECK(b.experiment.dtInt == 0.01);
  CHECK(b.experiment.dtSample == 0.1);
  CHECK(ex::validate(b).warnings.empty());

  const auto c = ex::validate(ex::preset("fig-slowfast-2.0"));
  CHECK(c.ok());
  CHECK(c.warnings.size() == 1);
  CHECK(code_of([] { ex::preset("nope"); }) == ErrorCode::ConfigError);
}

TEST_CASE("config parsing layers over presets") {
  const auto c = ex::parse_config(R"({"preset": "fig-sigma-1.0", "experiment": {"nEns": 12},
                                     "mddmd": {"kernelSigma": 0.25, "exponentMap": "log"},
                                     "seed": 9})");
  CHECK(c.experiment.sigma == 1.0);
  CHECK(c.experiment.nEns == 12);
  CHECK(c.effectiveKernelSigma() == 0.25);
  CHECK(c.exponentMap == ExponentMap::Logarithm);
  CHECK(c.experiment.seed == 9);

  const auto d = ex::parse_config(R"({"system": {"kind": "slow-fast", "epsilon": 4}})",
                                  std::string("fig-sigma-0.5"));
  CHECK(d.system.kind == dynamics::HamiltonianSystem::Kind::SlowFast);
  CHECK(d.system.epsilon == 4.0);
  CHECK(d.effectiveKernelSigma() == 0.5);
}

TEST_CASE("config errors name the field or position") {
  try {
    ex::parse_config(R"({"experiment": {"sigmaa": 1}})");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(std::string(e.what()).find("experiment.sigmaa") != std::string::npos);
  }
  try {
    ex::parse_config("{\n  \"seed\": 1,\n  \"experiment\": {\"nEns\": }\n}");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK(code_of([] { ex::parse_config(R"({"experiment": {"nEns": 1.5}})"); }) ==
        ErrorCode::ConfigError);
  CHECK(code_of([] { ex::parse_config(R"({"system": {"kind": "chaotic"}})"); }) ==
        ErrorCode::ConfigError);
  CHECK(code_of([] { ex::parse_config(R"([1, 2])"); }) == ErrorCode::ConfigError);
}

TEST_CASE("validation reports a non-multiple sample step") {
  auto c = ex::parse_config(R"({"experiment": {"dtInt": 0.1, "dtSample": 0.15}})");
  const auto r = ex::validate(c);
  CHECK_FALSE(r.ok());
  CHECK(r.violations[0].find("dtSample") != std::string::npos);
  c.kernelEnsembleSize = 0;
  CHECK(ex::validate(c).violations.size() == 2);
}

TEST_CASE("config hash depends only on result-determining fields") {
  auto a = ex::preset("fig-sigma-0.5");
  auto b = a;
  b.outputDir = "/somewhere/else";
  b.name = "renamed";
  CHECK(ex::config_hash(a) == ex::config_hash(b));
  CHECK(ex::config_hash(a).size() == 64);
  b.experiment.seed = 2;
  CHECK(ex::config_hash(a) != ex::config_hash(b));
  // explicit kernel sigma equal to the default hashes the same
  auto c = a;
  c.kernelSigma = 0.5;
  CHECK(ex::config_hash(a) == ex::config_hash(c));
}

TEST_CASE("run writes the documented artifacts") {
  const fs::path dir = scratch("artifacts");
  ex::RunOptions opts;
  opts.outputDir = dir;
  opts.threads = 1;
  const auto cfg = quick();
  const auto result = ex::run(cfg, opts);

  std::string header;
  const auto truth = read_csv(dir / "truth.csv", &header);
  CHECK(header == "t,mean_y1,mean_y2,stderr_y1,stderr_y2");
  const std::size_t rows = static_cast<std::size_t>(std::floor(20.0 / 0.1 + 1e-9)) + 1;
  CHECK(truth.size() == rows);
  const auto meas = read_csv(dir / "measurement.csv", &header);
  CHECK(header == "t,y1,y2");
  const auto dmd = read_csv(dir / "dmd.csv", &header);
  CHECK(header == "t,re_y1,im_y1,re_y2,im_y2");
  const auto md = read_csv(dir / "mddmd.csv", &header);
  CHECK(header == "t,re_y1,im_y1,re_y2,im_y2");
  CHECK(fs::exists(dir / "figures" / "figure_panel_a_y1.csv"));
  CHECK(fs::exists(dir / "figures" / "figure_panel_b_y2.csv"));
  CHECK(slurp(dir / "truth.csv").find('\r') == std::string::npos);

  // RMSE recomputed from the CSV text
  auto rmse = [&](const std::vector<std::vector<double>>& est, int col, int truth_col) {
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const double d = est[i][col] - truth[i][truth_col];
      acc += d * d;
    }
    return std::sqrt(acc / double(truth.size()));
  };
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(std::abs(summary["rmse"]["dmd"]["y1"].get<double>() - rmse(dmd, 1, 1)) < 1e-12);
  CHECK(std::abs(summary["rmse"]["dmd"]["y2"].get<double>() - rmse(dmd, 3, 2)) < 1e-12);
  CHECK(std::abs(summary["rmse"]["mddmd"]["y1"].get<double>() - rmse(md, 1, 1)) < 1e-12);
  CHECK(std::abs(summary["rmse"]["mddmd"]["y2"].get<double>() - rmse(md, 3, 2)) < 1e-12);
  CHECK(std::abs(summary["rmse"]["measurement"]["y1"].get<double>() - rmse(meas, 1, 1)) < 1e-12);
  CHECK(result.mddmdRmse.y1 == summary["rmse"]["mddmd"]["y1"].get<double>());

  const auto& manifest = summary["manifest"];
  CHECK(manifest["configHash"] == ex::config_hash(cfg));
  CHECK(manifest["seed"] == cfg.experiment.seed);
  CHECK(manifest.contains("versions"));
  CHECK(manifest["timingMs"].contains("mddmd"));
  CHECK(manifest["warnings"].is_array());
  CHECK(summary["eigenvalues"]["dmdDiscrete"].size() == 2);
  CHECK(summary["eigenvalues"]["lambdaBar1"].size() == 2);

  // imaginary parts stay at round-off on real data
  for (const auto& row : md) {
    CHECK(std::abs(row[2]) < 1e-8);
    CHECK(std::abs(row[4]) < 1e-8);
  }
  fs::remove_all(dir);
}

TEST_CASE("run output is byte-identical across thread counts") {
  const auto cfg = quick("fig-slowfast-0.5");
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  ex::RunOptions oa;
  oa.outputDir = a;
  oa.threads = 1;
  ex::RunOptions ob;
  ob.outputDir = b;
  ob.threads = 4;
  ex::run(cfg, oa);
  ex::run(cfg, ob);
  for (const char* f : {"truth.csv", "measurement.csv", "dmd.csv", "mddmd.csv",
                        "figures/figure_panel_a_y1.csv", "figures/figure_panel_b_y2.csv"}) {
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("output directory falls back to the environment") {
  const fs::path dir = scratch("env");
  setenv(ex::kOutputDirEnv, dir.c_str(), 1);
  auto cfg = quick();
  cfg.experiment.tFinal = 5.0;
  cfg.figureData = false;
  const auto result = ex::run(cfg);
  unsetenv(ex::kOutputDirEnv);
  CHECK(result.outputDir == dir);
  CHECK(fs::exists(dir / "summary.json"));
  CHECK_FALSE(fs::exists(dir / "figures"));
  fs::remove_all(dir);
}

TEST_CASE("run refuses invalid configs") {
  auto cfg = quick();
  cfg.experiment.dtSample = 0.15;
  CHECK(code_of([&] { ex::run(cfg); }) == ErrorCode::ConfigError);
}

TEST_CASE("format_number keeps 17 significant digits") {
  CHECK(ex::format_number(0.1) == "0.10000000000000001");
  CHECK(std::stod(ex::format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  };
  const auto good = write("good.json",
                          R"({"preset": "fig-sigma-0.5", "experiment": {"nEns": 20, "tFinal": 5},
                              "mddmd": {"kernelEnsembleSize": 20}})");
  const auto bad = write("bad.json", R"({"experiment": {"dtSample": 0.15}})");
  const auto broken = write("broken.json", "{ not json");
  // a resting state gives all-zero snapshots
  const auto zero = write("zero.json",
                          R"({"experiment": {"xHat": [0, 0], "sigma": 0, "nEns": 2, "tFinal": 5},
                              "mddmd": {"kernelEnsembleSize": 2, "kernelSigma": 0.1}})");
  CHECK(run_cli("presets") == 0);
  CHECK(run_cli("validate " + good) == 0);
  CHECK(run_cli("validate " + bad) == 1);
  CHECK(run_cli("validate " + broken) == 1);
  CHECK(run_cli("run " + good + " --threads 2 --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "mddmd.csv"));
  CHECK(run_cli("run " + bad) == 1);
  CHECK(run_cli("run " + zero + " --out " + (dir / "zero").string()) == 2);
  CHECK(run_cli("run " + (dir / "missing.json").string()) == 1);
  fs::remove_all(dir);
}

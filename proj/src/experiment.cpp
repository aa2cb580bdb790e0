#include "mddmd/experiment.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mddmd/ensemble.hpp"
#include "mddmd/error.hpp"
#include "mddmd/parallel.hpp"

#ifndef MDDMD_VERSION
#define MDDMD_VERSION "0.0.0"
#endif

namespace mddmd::experiment {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& message) {
  throw Error(ErrorCode::ConfigError, message);
}

std::string system_name(const dynamics::HamiltonianSystem& system) {
  return system.kind == dynamics::HamiltonianSystem::Kind::Coupled ? "coupled"
                                                                   : "slow-fast";
}

std::string exponent_name(ExponentMap map) {
  return map == ExponentMap::FiniteDifference ? "finite-difference" : "log";
}

std::string layout_name(perturbation::GradientLayout layout) {
  return layout == perturbation::GradientLayout::Consistent ? "consistent" : "literal";
}

RunConfig coupled_preset(const std::string& name, double sigma) {
  RunConfig c;
  c.name = name;
  c.system = dynamics::HamiltonianSystem::coupled();
  c.experiment.xHat = {1.0, 0.0};
  c.experiment.sigma = sigma;
  c.experiment.nEns = 10000;
  c.experiment.dtInt = 0.1;
  c.experiment.dtSample = 0.1;
  c.experiment.tFinal = 50.0;
  c.experiment.seed = 1;
  c.kernelEnsembleSize = 10000;
  return c;
}

RunConfig slow_fast_preset(const std::string& name, double sigma_scale) {
  RunConfig c = coupled_preset(name, 0.0);
  c.system = dynamics::HamiltonianSystem::slow_fast(10.0);
  c.experiment.sigma = sigma_scale / std::sqrt(10.0);
  c.experiment.dtInt = 0.01;
  c.experiment.dtSample = 0.1;
  return c;
}

const std::map<std::string, std::function<RunConfig()>>& preset_table() {
  static const std::map<std::string, std::function<RunConfig()>> table = {
      {"fig-sigma-0.5", [] { return coupled_preset("fig-sigma-0.5", 0.5); }},
      {"fig-sigma-1.0", [] { return coupled_preset("fig-sigma-1.0", 1.0); }},
      {"fig-slowfast-0.5", [] { return slow_fast_preset("fig-slowfast-0.5", 0.5); }},
      {"fig-slowfast-1.0", [] { return slow_fast_preset("fig-slowfast-1.0", 1.0); }},
      {"fig-slowfast-2.0", [] { return slow_fast_preset("fig-slowfast-2.0", 2.0); }},
  };
  return table;
}

// Field readers with path-qualified messages.
class Reader {
 public:
  Reader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) config_error(path_ + ": expected an object");
  }

  void check_keys(std::initializer_list<const char*> allowed) const {
    for (const auto& item : object_.items()) {
      bool known = false;
      for (const char* key : allowed) known = known || item.key() == key;
      if (!known) config_error(field(item.key()) + ": unknown key");
    }
  }

  bool has(const char* key) const { return object_.contains(key); }

  double number(const char* key) const {
    const json& v = object_.at(key);
    if (!v.is_number()) config_error(field(key) + ": expected a number");
    return v.get<double>();
  }

  std::int64_t integer(const char* key) const {
    const json& v = object_.at(key);
    if (!v.is_number_integer()) config_error(field(key) + ": expected an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const char* key) const {
    const json& v = object_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      config_error(field(key) + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string string(const char* key) const {
    const json& v = object_.at(key);
    if (!v.is_string()) config_error(field(key) + ": expected a string");
    return v.get<std::string>();
  }

  bool boolean(const char* key) const {
    const json& v = object_.at(key);
    if (!v.is_boolean()) config_error(field(key) + ": expected true or false");
    return v.get<bool>();
  }

  Reader child(const char* key) const { return Reader(object_.at(key), field(key)); }
  const json& raw(const char* key) const { return object_.at(key); }
  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& object_;
  std::string path_;
};

std::string position_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

void apply(const Reader& root, RunConfig& c) {
  root.check_keys({"preset", "name", "seed", "system", "experiment", "mddmd", "output"});
  if (root.has("name")) c.name = root.string("name");
  if (root.has("seed")) c.experiment.seed = root.unsigned_integer("seed");

  if (root.has("system")) {
    const Reader sys = root.child("system");
    sys.check_keys({"kind", "epsilon"});
    if (sys.has("kind")) {
      const std::string kind = sys.string("kind");
      if (kind == "coupled") {
        c.system.kind = dynamics::HamiltonianSystem::Kind::Coupled;
      } else if (kind == "slow-fast") {
        c.system.kind = dynamics::HamiltonianSystem::Kind::SlowFast;
      } else {
        config_error(sys.field("kind") + ": expected \"coupled\" or \"slow-fast\"");
      }
    }
    if (sys.has("epsilon")) c.system.epsilon = sys.number("epsilon");
  }

  if (root.has("experiment")) {
    const Reader ex = root.child("experiment");
    ex.check_keys({"xHat", "sigma", "nEns", "dtInt", "dtSample", "tFinal",
                   "measurementIndex"});
    if (ex.has("xHat")) {
      const json& x = ex.raw("xHat");
      if (!x.is_array() || x.size() != 2 || !x[0].is_number() || !x[1].is_number()) {
        config_error(ex.field("xHat") + ": expected an array of two numbers");
      }
      c.experiment.xHat = {x[0].get<double>(), x[1].get<double>()};
    }
    if (ex.has("sigma")) c.experiment.sigma = ex.number("sigma");
    if (ex.has("nEns")) c.experiment.nEns = ex.integer("nEns");
    if (ex.has("dtInt")) c.experiment.dtInt = ex.number("dtInt");
    if (ex.has("dtSample")) c.experiment.dtSample = ex.number("dtSample");
    if (ex.has("tFinal")) c.experiment.tFinal = ex.number("tFinal");
    if (ex.has("measurementIndex")) c.experiment.measurementIndex = ex.integer("measurementIndex");
  }

  if (root.has("mddmd")) {
    const Reader md = root.child("mddmd");
    md.check_keys({"kernelEnsembleSize", "kernelSigma", "rankTol", "exponentMap",
                   "gradientLayout"});
    if (md.has("kernelEnsembleSize")) c.kernelEnsembleSize = md.integer("kernelEnsembleSize");
    if (md.has("kernelSigma")) {
      if (md.raw("kernelSigma").is_null()) {
        c.kernelSigma.reset();
      } else {
        c.kernelSigma = md.number("kernelSigma");
      }
    }
    if (md.has("rankTol")) c.rankTol = md.number("rankTol");
    if (md.has("exponentMap")) {
      const std::string m = md.string("exponentMap");
      if (m == "finite-difference") {
        c.exponentMap = ExponentMap::FiniteDifference;
      } else if (m == "log") {
        c.exponentMap = ExponentMap::Logarithm;
      } else {
        config_error(md.field("exponentMap") + ": expected \"finite-difference\" or \"log\"");
      }
    }
    if (md.has("gradientLayout")) {
      const std::string m = md.string("gradientLayout");
      if (m == "consistent") {
        c.gradientLayout = perturbation::GradientLayout::Consistent;
      } else if (m == "literal") {
        c.gradientLayout = perturbation::GradientLayout::Literal;
      } else {
        config_error(md.field("gradientLayout") + ": expected \"consistent\" or \"literal\"");
      }
    }
  }

  if (root.has("output")) {
    const Reader out = root.child("output");
    out.check_keys({"dir", "figureData"});
    if (out.has("dir")) c.outputDir = out.string("dir");
    if (out.has("figureData")) c.figureData = out.boolean("figureData");
  }
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::NumericalFailure, "config_hash: SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Re-raises library errors tagged with the pipeline stage that produced them.
template <typename F>
auto stage(const char* module, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[") + module + "] " + e.what());
  }
}

void write_lines(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::ConfigError, "cannot open " + path.string() + " for writing");
  }
  out << content;
  if (!out) throw Error(ErrorCode::ConfigError, "write failed for " + path.string());
}

double rmse(const std::vector<double>& estimate, const std::vector<double>& truth) {
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = estimate[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(truth.size()));
}

json complex_list(const CVector& values) {
  json out = json::array();
  for (Index i = 0; i < values.size(); ++i) {
    out.push_back({{"re", values(i).real()}, {"im", values(i).imag()}});
  }
  return out;
}

}  // namespace

std::string format_number(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : preset_table()) names.push_back(name);
  return names;
}

RunConfig preset(const std::string& name) {
  const auto& table = preset_table();
  const auto it = table.find(name);
  if (it == table.end()) config_error("unknown preset \"" + name + "\"");
  return it->second();
}

RunConfig parse_config(const std::string& text,
                       const std::optional<std::string>& base_preset) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error("parse error at " + position_of(text, e.byte > 0 ? e.byte - 1 : 0) +
                 ": " + e.what());
  }
  if (!root.is_object()) config_error("config root must be a JSON object");

  std::optional<std::string> base = base_preset;
  if (root.contains("preset")) {
    if (!root["preset"].is_string()) config_error("preset: expected a string");
    base = root["preset"].get<std::string>();
  }
  RunConfig config = base ? preset(*base) : RunConfig{};
  try {
    apply(Reader(root, ""), config);
  } catch (const json::exception& e) {
    config_error(std::string("invalid value: ") + e.what());
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path,
                      const std::optional<std::string>& base_preset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str(), base_preset);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string canonical_config(const RunConfig& c) {
  const json j = {
      {"system", {{"kind", system_name(c.system)}, {"epsilon", c.system.epsilon}}},
      {"experiment",
       {{"xHat", {c.experiment.xHat[0], c.experiment.xHat[1]}},
        {"sigma", c.experiment.sigma},
        {"nEns", c.experiment.nEns},
        {"dtInt", c.experiment.dtInt},
        {"dtSample", c.experiment.dtSample},
        {"tFinal", c.experiment.tFinal},
        {"measurementIndex", c.experiment.measurementIndex}}},
      {"mddmd",
       {{"kernelEnsembleSize", c.kernelEnsembleSize},
        {"kernelSigma", c.effectiveKernelSigma()},
        {"rankTol", c.rankTol},
        {"exponentMap", exponent_name(c.exponentMap)},
        {"gradientLayout", layout_name(c.gradientLayout)}}},
      {"seed", c.experiment.seed},
  };
  return j.dump();
}

std::string config_hash(const RunConfig& config) {
  return sha256_hex(canonical_config(config));
}

dynamics::ValidationReport validate(const RunConfig& config) {
  dynamics::ValidationReport report = dynamics::validate(config.system, config.experiment);
  if (config.kernelEnsembleSize < 1) {
    report.violations.push_back("mddmd.kernelEnsembleSize: must be >= 1");
  }
  const double ks = config.effectiveKernelSigma();
  if (!(ks >= 0.0) || !std::isfinite(ks)) {
    report.violations.push_back("mddmd.kernelSigma: must be a finite value >= 0");
  }
  if (!(config.rankTol > 0.0) || !(config.rankTol < 1.0)) {
    report.violations.push_back("mddmd.rankTol: must lie in (0, 1)");
  }
  return report;
}

RunResult run(const RunConfig& config, const RunOptions& options) {
  const dynamics::ValidationReport report = validate(config);
  if (!report.ok()) {
    std::string joined;
    for (const auto& v : report.violations) joined += (joined.empty() ? "" : "; ") + v;
    config_error(joined);
  }

  RunResult result;
  result.warnings = report.warnings;
  if (options.outputDir) {
    result.outputDir = *options.outputDir;
  } else if (!config.outputDir.empty()) {
    result.outputDir = config.outputDir;
  } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    result.outputDir = env;
  } else {
    result.outputDir = std::filesystem::path("mddmd-out") / config.name;
  }
  const int threads = resolve_threads(options.threads);

  dynamics::ExperimentConfig ex = config.experiment;
  ex.threads = threads;
  json timing = json::object();

  auto t0 = Clock::now();
  const auto truth = stage("dynamics_lab", [&] {
    return dynamics::monte_carlo_mean(config.system, ex);
  });
  timing["truth"] = elapsed_ms(t0);

  t0 = Clock::now();
  const auto measurement = stage("dynamics_lab", [&] {
    return dynamics::partial_measurement(config.system, ex);
  });
  timing["measurement"] = elapsed_ms(t0);

  t0 = Clock::now();
  const SnapshotPair snap = stage("dmd_core", [&] {
    return build_snapshots(measurement.as_vectors(), ex.dtSample);
  });
  const DmdModel dmd = stage("dmd_core", [&] { return fit_dmd(snap, config.rankTol); });
  timing["dmd"] = elapsed_ms(t0);

  t0 = Clock::now();
  KernelDistribution dist;
  dist.sigma = config.effectiveKernelSigma();
  dist.dimension = snap.observables();
  dist.seed = ex.seed;
  MddmdOptions md_options;
  md_options.ensembleSize = config.kernelEnsembleSize;
  md_options.rankTol = config.rankTol;
  md_options.threads = threads;
  md_options.layout = config.gradientLayout;
  const MddmdModel mddmd = stage("mddmd", [&] {
    return fit_mddmd(dmd, snap, dist, md_options);
  });
  timing["mddmd"] = elapsed_ms(t0);
  for (const auto& w : mddmd.warnings) result.warnings.push_back(w);

  t0 = Clock::now();
  const std::size_t n = truth.times.size();
  std::vector<CVector> dmd_path(n);
  std::vector<CVector> mddmd_path(n);
  stage("mddmd", [&] {
    for (std::size_t i = 0; i < n; ++i) {
      dmd_path[i] = dmd_reconstruct(dmd, truth.times[i], config.exponentMap);
      mddmd_path[i] = mddmd_reconstruct(mddmd, truth.times[i], config.exponentMap);
    }
    return 0;
  });

  std::filesystem::create_directories(result.outputDir);
  auto row = [](std::initializer_list<double> values) {
    std::string line;
    bool first = true;
    for (double v : values) {
      if (!first) line += ',';
      line += format_number(v);
      first = false;
    }
    line += '\n';
    return line;
  };

  std::string truth_csv = "t,mean_y1,mean_y2,stderr_y1,stderr_y2\n";
  std::string measurement_csv = "t,y1,y2\n";
  std::string dmd_csv = "t,re_y1,im_y1,re_y2,im_y2\n";
  std::string mddmd_csv = dmd_csv;
  std::string panel_a = "t,measurement,truth,mddmd,dmd\n";
  std::string panel_b = panel_a;
  std::vector<double> truth1(n), truth2(n), meas1(n), meas2(n), dmd1(n), dmd2(n),
      md1(n), md2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = truth.times[i];
    truth1[i] = truth.mean[i][0];
    truth2[i] = truth.mean[i][1];
    meas1[i] = measurement.values[i][0];
    meas2[i] = measurement.values[i][1];
    dmd1[i] = dmd_path[i](0).real();
    dmd2[i] = dmd_path[i](1).real();
    md1[i] = mddmd_path[i](0).real();
    md2[i] = mddmd_path[i](1).real();
    truth_csv += row({t, truth1[i], truth2[i], truth.stdErr[i][0], truth.stdErr[i][1]});
    measurement_csv += row({t, meas1[i], meas2[i]});
    dmd_csv += row({t, dmd1[i], dmd_path[i](0).imag(), dmd2[i], dmd_path[i](1).imag()});
    mddmd_csv += row({t, md1[i], mddmd_path[i](0).imag(), md2[i], mddmd_path[i](1).imag()});
    panel_a += row({t, meas1[i], truth1[i], md1[i], dmd1[i]});
    panel_b += row({t, meas2[i], truth2[i], md2[i], dmd2[i]});
  }
  write_lines(result.outputDir / "truth.csv", truth_csv);
  write_lines(result.outputDir / "measurement.csv", measurement_csv);
  write_lines(result.outputDir / "dmd.csv", dmd_csv);
  write_lines(result.outputDir / "mddmd.csv", mddmd_csv);
  if (config.figureData) {
    const auto fig_dir = result.outputDir / "figures";
    std::filesystem::create_directories(fig_dir);
    write_lines(fig_dir / "figure_panel_a_y1.csv", panel_a);
    write_lines(fig_dir / "figure_panel_b_y2.csv", panel_b);
  }

  result.dmdRmse = {rmse(dmd1, truth1), rmse(dmd2, truth2)};
  result.mddmdRmse = {rmse(md1, truth1), rmse(md2, truth2)};
  result.measurementRmse = {rmse(meas1, truth1), rmse(meas2, truth2)};
  timing["write"] = elapsed_ms(t0);

  auto rmse_json = [](const ComponentRmse& r) { return json{{"y1", r.y1}, {"y2", r.y2}}; };
  CVector continuous_dmd(dmd.modeCount());
  CVector continuous_mddmd(dmd.modeCount());
  for (Index l = 0; l < dmd.modeCount(); ++l) {
    continuous_dmd(l) = continuous_exponent(dmd.discreteEigenvalues(l), dmd.dt,
                                            config.exponentMap);
    continuous_mddmd(l) = continuous_dmd(l) + std::log(mddmd.lambdaBar1(l)) / dmd.dt;
  }
  json lambda_var = json::array();
  json v1_var = json::array();
  for (Index l = 0; l < mddmd.fluctuations.lambdaVariance.size(); ++l) {
    lambda_var.push_back(mddmd.fluctuations.lambdaVariance(l));
    v1_var.push_back(mddmd.fluctuations.v1Variance(l));
  }

  json summary = {
      {"name", config.name},
      {"rmse",
       {{"dmd", rmse_json(result.dmdRmse)},
        {"mddmd", rmse_json(result.mddmdRmse)},
        {"measurement", rmse_json(result.measurementRmse)}}},
      {"eigenvalues",
       {{"dmdDiscrete", complex_list(dmd.discreteEigenvalues)},
        {"dmdContinuous", complex_list(continuous_dmd)},
        {"lambdaBar1", complex_list(mddmd.lambdaBar1)},
        {"mddmdContinuous", complex_list(continuous_mddmd)}}},
      {"ensemble",
       {{"kernelSamples", mddmd.ensembleSize},
        {"skipped", mddmd.skipped},
        {"lambdaVariance", lambda_var},
        {"v1Variance", v1_var},
        {"truthDraws", ex.nEns}}},
      {"rows", n},
      {"manifest",
       {{"configHash", config_hash(config)},
        {"config", json::parse(canonical_config(config))},
        {"seed", ex.seed},
        {"threads", threads},
        {"versions",
         {{"mddmd", MDDMD_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__}}},
        {"timingMs", timing},
        {"warnings", result.warnings}}},
  };
  result.summaryJson = summary.dump(2) + "\n";
  write_lines(result.outputDir / "summary.json", result.summaryJson);
  return result;
}

}  // namespace mddmd::experiment

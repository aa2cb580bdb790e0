#include "mddmd/dynamics.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "mddmd/error.hpp"
#include "mddmd/parallel.hpp"

namespace mddmd::dynamics {

namespace {

constexpr std::int64_t kReductionBlock = 64;

bool finite(const State& y) {
  for (double v : y) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

State axpy(const State& y, double a, const State& k) {
  return {y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2], y[3] + a * k[3]};
}

void require_valid(const HamiltonianSystem& system, const ExperimentConfig& config) {
  const ValidationReport report = validate(system, config);
  if (!report.ok()) {
    throw Error(ErrorCode::ConfigError, report.violations.front());
  }
}

// Subsampled (y1, y2) of one draw; throws BlowUp with the draw index.
std::vector<Observed> observed_path(const HamiltonianSystem& system,
                                    const ExperimentConfig& config,
                                    std::int64_t draw) {
  const std::int64_t stride = sample_stride(config);
  const std::int64_t samples = sample_count(config);
  std::vector<Observed> path;
  path.reserve(static_cast<std::size_t>(samples));
  State y = initial_condition(config, draw);
  path.push_back({y[0], y[1]});
  for (std::int64_t s = 1; s < samples; ++s) {
    for (std::int64_t k = 0; k < stride; ++k) {
      y = rk4_step(system, y, config.dtInt);
    }
    if (!finite(y)) {
      std::ostringstream msg;
      msg << "draw " << draw << " left the finite range near t = "
          << static_cast<double>(s) * config.dtSample;
      throw Error(ErrorCode::BlowUp, msg.str());
    }
    path.push_back({y[0], y[1]});
  }
  return path;
}

// Welford accumulator per sample time and observed component.
struct Moments {
  std::int64_t n = 0;
  std::vector<Observed> mean;
  std::vector<Observed> m2;

  explicit Moments(std::size_t samples)
      : mean(samples, Observed{0.0, 0.0}), m2(samples, Observed{0.0, 0.0}) {}

  void add(const std::vector<Observed>& path) {
    ++n;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t t = 0; t < path.size(); ++t) {
      for (int c = 0; c < 2; ++c) {
        const double delta = path[t][c] - mean[t][c];
        mean[t][c] += delta * inv;
        m2[t][c] += delta * (path[t][c] - mean[t][c]);
      }
    }
  }

  void merge(const Moments& other) {
    if (other.n == 0) return;
    if (n == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(other.n);
    const double total = na + nb;
    for (std::size_t t = 0; t < mean.size(); ++t) {
      for (int c = 0; c < 2; ++c) {
        const double delta = other.mean[t][c] - mean[t][c];
        mean[t][c] += delta * nb / total;
        m2[t][c] += other.m2[t][c] + delta * delta * na * nb / total;
      }
    }
    n += other.n;
  }
};

}  // namespace

State rhs(const HamiltonianSystem& system, const State& y) {
  switch (system.kind) {
    case HamiltonianSystem::Kind::Coupled:
      return {y[1], -y[0] * (1.0 + y[2] * y[2]), y[3], -y[2] * (1.0 + y[0] * y[0])};
    case HamiltonianSystem::Kind::SlowFast: {
      const double eps = system.epsilon;
      return {y[1], -y[0] * (1.0 + eps * y[2] * y[2]), eps * y[3],
              -eps * y[2] * (1.0 + y[0] * y[0])};
    }
  }
  return {};
}

double hamiltonian(const HamiltonianSystem& system, const State& y) {
  const double resolved = y[0] * y[0] + y[1] * y[1];
  const double hidden = y[2] * y[2] + y[3] * y[3] + y[0] * y[0] * y[2] * y[2];
  switch (system.kind) {
    case HamiltonianSystem::Kind::Coupled:
      return 0.5 * (resolved + hidden);
    case HamiltonianSystem::Kind::SlowFast:
      return 0.5 * resolved + 0.5 * system.epsilon * hidden;
  }
  return 0.0;
}

State rk4_step(const HamiltonianSystem& system, const State& y, double h) {
  const State k1 = rhs(system, y);
  const State k2 = rhs(system, axpy(y, 0.5 * h, k1));
  const State k3 = rhs(system, axpy(y, 0.5 * h, k2));
  const State k4 = rhs(system, axpy(y, h, k3));
  State out;
  for (int i = 0; i < 4; ++i) {
    out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

Trajectory integrate(const HamiltonianSystem& system, const State& y0,
                     double dtInt, double tFinal) {
  if (!(dtInt > 0.0) || !std::isfinite(dtInt)) {
    throw Error(ErrorCode::InvalidArgument, "integrate: dtInt must be > 0");
  }
  if (!(tFinal >= 0.0) || !std::isfinite(tFinal)) {
    throw Error(ErrorCode::InvalidArgument, "integrate: tFinal must be >= 0");
  }
  const auto steps =
      static_cast<std::int64_t>(std::ceil(tFinal / dtInt - 1e-9));
  Trajectory traj;
  traj.times.reserve(static_cast<std::size_t>(steps + 1));
  traj.states.reserve(static_cast<std::size_t>(steps + 1));
  traj.times.push_back(0.0);
  traj.states.push_back(y0);
  State y = y0;
  for (std::int64_t n = 1; n <= steps; ++n) {
    const double t_prev = static_cast<double>(n - 1) * dtInt;
    const bool last = n == steps;
    const double t_next = last ? tFinal : static_cast<double>(n) * dtInt;
    // Constant step; only a shortened final step lands on tFinal.
    const double h = last && std::abs(t_next - t_prev - dtInt) > 1e-9 * dtInt
                         ? t_next - t_prev
                         : dtInt;
    y = rk4_step(system, y, h);
    if (!finite(y)) {
      throw Error(ErrorCode::BlowUp,
                  "integrate: non-finite state at t = " + std::to_string(t_next));
    }
    traj.times.push_back(t_next);
    traj.states.push_back(y);
  }
  return traj;
}

bool outside_regime(const HamiltonianSystem& system, double sigma) {
  if (system.kind != HamiltonianSystem::Kind::SlowFast) return false;
  return sigma > (1.0 + 1e-12) / std::sqrt(system.epsilon);
}

ValidationReport validate(const HamiltonianSystem& system,
                          const ExperimentConfig& config) {
  ValidationReport r;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      r.violations.push_back(std::string(name) + ": must be a finite value > 0");
      return false;
    }
    return true;
  };
  if (system.kind == HamiltonianSystem::Kind::SlowFast) {
    positive(system.epsilon, "epsilon");
  }
  if (!(config.sigma >= 0.0) || !std::isfinite(config.sigma)) {
    r.violations.push_back("sigma: must be a finite value >= 0");
  }
  if (config.nEns < 1) r.violations.push_back("nEns: must be >= 1");
  if (config.measurementIndex < 0 || config.measurementIndex >= config.nEns) {
    r.violations.push_back("measurementIndex: must lie in [0, nEns)");
  }
  const bool dt_ok = positive(config.dtInt, "dtInt");
  const bool ds_ok = positive(config.dtSample, "dtSample");
  positive(config.tFinal, "tFinal");
  if (dt_ok && ds_ok) {
    const double ratio = config.dtSample / config.dtInt;
    if (ratio < 1.0 - 1e-9 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
      std::ostringstream msg;
      msg << "dtSample: " << config.dtSample
          << " is not an integer multiple of dtInt = " << config.dtInt;
      r.violations.push_back(msg.str());
    }
  }
  if (!(std::abs(config.xHat[0]) < 1e6 && std::abs(config.xHat[1]) < 1e6)) {
    r.violations.push_back("xHat: components must be finite");
  }
  if (r.ok() && sample_count(config) < 4) {
    r.violations.push_back("tFinal: horizon must cover at least 3 sampling intervals");
  }
  if (system.kind == HamiltonianSystem::Kind::SlowFast &&
      system.epsilon > 0.0 && outside_regime(system, config.sigma)) {
    std::ostringstream msg;
    msg << "regime: sigma = " << config.sigma << " exceeds 1/sqrt(epsilon) = "
        << 1.0 / std::sqrt(system.epsilon)
        << "; the slow-fast system is outside the weak-coupling regime";
    r.warnings.push_back(msg.str());
  }
  return r;
}

std::int64_t sample_stride(const ExperimentConfig& config) {
  return static_cast<std::int64_t>(std::llround(config.dtSample / config.dtInt));
}

std::int64_t sample_count(const ExperimentConfig& config) {
  return static_cast<std::int64_t>(std::floor(config.tFinal / config.dtSample + 1e-9)) + 1;
}

std::vector<double> sample_times(const ExperimentConfig& config) {
  const std::int64_t n = sample_count(config);
  std::vector<double> times(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    times[static_cast<std::size_t>(i)] = static_cast<double>(i) * config.dtSample;
  }
  return times;
}

State initial_condition(const ExperimentConfig& config, std::int64_t draw) {
  State y{config.xHat[0], config.xHat[1], 0.0, 0.0};
  if (config.sigma > 0.0) {
    auto rng = make_stream(config.seed, StreamPurpose::HiddenInitialConditions,
                           static_cast<std::uint64_t>(draw));
    std::normal_distribution<double> normal(0.0, config.sigma);
    y[2] = normal(rng);
    y[3] = normal(rng);
  }
  return y;
}

TrajectoryEnsemble monte_carlo_mean(const HamiltonianSystem& system,
                                    const ExperimentConfig& config) {
  require_valid(system, config);
  const auto samples = static_cast<std::size_t>(sample_count(config));
  const std::int64_t blocks = (config.nEns + kReductionBlock - 1) / kReductionBlock;

  std::vector<Moments> partial(static_cast<std::size_t>(blocks), Moments(samples));
  std::vector<Observed> realization;
  parallel_for(blocks, config.threads, [&](std::int64_t b) {
    Moments& m = partial[static_cast<std::size_t>(b)];
    const std::int64_t begin = b * kReductionBlock;
    const std::int64_t end = std::min(config.nEns, begin + kReductionBlock);
    for (std::int64_t draw = begin; draw < end; ++draw) {
      auto path = observed_path(system, config, draw);
      m.add(path);
      if (draw == config.measurementIndex) realization = std::move(path);
    }
  });

  Moments total(samples);
  for (const auto& m : partial) total.merge(m);

  TrajectoryEnsemble out;
  out.times = sample_times(config);
  out.mean = total.mean;
  out.stdErr.assign(samples, Observed{0.0, 0.0});
  if (total.n > 1) {
    const double n = static_cast<double>(total.n);
    for (std::size_t t = 0; t < samples; ++t) {
      for (int c = 0; c < 2; ++c) {
        out.stdErr[t][c] = std::sqrt(total.m2[t][c] / (n - 1.0)) / std::sqrt(n);
      }
    }
  }
  out.sampleRealization = std::move(realization);
  return out;
}

std::vector<RVector> MeasurementSeries::as_vectors() const {
  std::vector<RVector> out;
  out.reserve(values.size());
  for (const auto& v : values) {
    RVector x(2);
    x << v[0], v[1];
    out.push_back(x);
  }
  return out;
}

MeasurementSeries partial_measurement(const HamiltonianSystem& system,
                                      const ExperimentConfig& config) {
  require_valid(system, config);
  MeasurementSeries out;
  out.times = sample_times(config);
  out.values = observed_path(system, config, config.measurementIndex);
  return out;
}

}  // namespace mddmd::dynamics

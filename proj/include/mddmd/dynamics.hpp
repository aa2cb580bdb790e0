#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mddmd/linalg.hpp"

namespace mddmd::dynamics {

using State = std::array<double, 4>;
using Observed = std::array<double, 2>;

/// The two four-dimensional Hamiltonian test systems: a nonlinearly coupled
/// oscillator pair, and its slow-fast variant where the hidden pair (y3, y4)
/// runs on an epsilon-scaled clock.
struct HamiltonianSystem {
  enum class Kind { Coupled, SlowFast };

  Kind kind = Kind::Coupled;
  double epsilon = 1.0;  // slow-fast only

  static HamiltonianSystem coupled() { return {Kind::Coupled, 1.0}; }
  static HamiltonianSystem slow_fast(double epsilon) { return {Kind::SlowFast, epsilon}; }
};

State rhs(const HamiltonianSystem& system, const State& y);
double hamiltonian(const HamiltonianSystem& system, const State& y);

/// One classical RK4 step; a negative h integrates backwards.
State rk4_step(const HamiltonianSystem& system, const State& y, double h);

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
};

/// Fixed-step RK4 on [0, tFinal]; the final step is shortened to land on
/// tFinal when it is not a multiple of dtInt.
Trajectory integrate(const HamiltonianSystem& system, const State& y0,
                     double dtInt, double tFinal);

struct ExperimentConfig {
  Observed xHat{1.0, 0.0};
  double sigma = 0.5;        // hidden initial conditions ~ N(0, sigma^2)
  std::int64_t nEns = 10000;
  double dtInt = 0.1;
  double dtSample = 0.1;
  double tFinal = 50.0;
  std::uint64_t seed = 0;
  std::int64_t measurementIndex = 0;
  int threads = 1;
};

struct ValidationReport {
  std::vector<std::string> violations;  // errors
  std::vector<std::string> warnings;    // accepted but flagged

  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const HamiltonianSystem& system,
                          const ExperimentConfig& config);

/// sigma > 1/sqrt(epsilon) on the slow-fast system leaves the weak-coupling
/// regime.
bool outside_regime(const HamiltonianSystem& system, double sigma);

std::int64_t sample_stride(const ExperimentConfig& config);
std::int64_t sample_count(const ExperimentConfig& config);
std::vector<double> sample_times(const ExperimentConfig& config);

/// (xHat, x3, x4) with the hidden pair drawn from the draw's own stream.
State initial_condition(const ExperimentConfig& config, std::int64_t draw);

struct TrajectoryEnsemble {
  std::vector<double> times;
  std::vector<Observed> mean;
  std::vector<Observed> stdErr;
  std::vector<Observed> sampleRealization;
};

/// Conditional mean E[(y1, y2)(t) | xHat] over nEns hidden draws, on the
/// dtSample grid.
TrajectoryEnsemble monte_carlo_mean(const HamiltonianSystem& system,
                                    const ExperimentConfig& config);

struct MeasurementSeries {
  std::vector<double> times;
  std::vector<Observed> values;

  std::vector<RVector> as_vectors() const;
};

/// (y1, y2) of the designated realization on the dtSample grid.
MeasurementSeries partial_measurement(const HamiltonianSystem& system,
                                      const ExperimentConfig& config);

}  // namespace mddmd::dynamics

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mddmd/dmd.hpp"
#include "mddmd/perturbation.hpp"

namespace mddmd {

struct KernelDistribution {
  enum class Kind { IsotropicGaussian };

  Kind kind = Kind::IsotropicGaussian;
  double sigma = 0.0;   // per-component standard deviation; 0 gives K0 = 0
  Index dimension = 0;
  std::uint64_t seed = 0;
};

/// Draw `index` of the distribution; a pure function of (seed, index).
RVector sample_kernel(const KernelDistribution& dist, Index index);
std::vector<RVector> sample_kernels(const KernelDistribution& dist, Index count);

struct FluctuationStats {
  RVector lambdaVariance;  // per mode, E|exp(dt lambda1) - mean|^2
  RVector v1Variance;      // per mode, E||v1 - mean||^2
};

struct MddmdModel {
  DmdModel base;
  CMatrix vBar1;          // mean first-order mode shifts (columns)
  CVector lambdaBar1;     // mean of exp(dt lambda1)
  Index ensembleSize = 0; // samples that entered the averages
  Index skipped = 0;
  FluctuationStats fluctuations;
  bool gramIllConditioned = false;
  std::vector<std::string> warnings;
};

struct MddmdOptions {
  Index ensembleSize = 1000;
  double rankTol = linalg::kDefaultRankTol;
  int threads = 1;
  perturbation::GradientLayout layout = perturbation::GradientLayout::Consistent;
  double maxSkippedFraction = 0.10;
};

/// Fits plain DMD, then averages the first-order memory correction over an
/// ensemble of kernel initial conditions.
MddmdModel fit_mddmd(const SnapshotPair& snap, const KernelDistribution& dist,
                     const MddmdOptions& options);

/// Same, reusing an already fitted DMD model of `snap`.
MddmdModel fit_mddmd(const DmdModel& base, const SnapshotPair& snap,
                     const KernelDistribution& dist, const MddmdOptions& options);

inline constexpr double kBranchTol = 1e-12;

CVector mddmd_reconstruct(const MddmdModel& model, double t,
                          ExponentMap map = ExponentMap::FiniteDifference);

}  // namespace mddmd

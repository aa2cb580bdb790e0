#pragma once

#include <vector>

#include "mddmd/linalg.hpp"

namespace mddmd {

/// Past/future snapshot matrices of one sampled series (N_d x N_T each).
struct SnapshotPair {
  CMatrix gMinus;
  CMatrix gPlus;
  double dt = 0.0;

  Index observables() const { return gMinus.rows(); }
  Index pairs() const { return gMinus.cols(); }
};

/// How a discrete eigenvalue becomes a continuous-time exponent.
enum class ExponentMap {
  FiniteDifference,  // (lambda - 1) / dt
  Logarithm,         // log(lambda) / dt
};

struct DmdModel {
  CMatrix koopman;           // N_d x N_d least-squares operator G+ G-^+
  CMatrix modes;             // N_d x N_r right eigenvectors
  CVector discreteEigenvalues;
  CMatrix leftModes;         // N_r x N_d, leftModes * modes = I
  CVector amplitudes;        // projection of the first snapshot onto modes
  double dt = 0.0;
  Index rank = 0;
  double amplitudeResidual = 0.0;  // |modes * amplitudes - g0|

  Index observables() const { return koopman.rows(); }
  Index modeCount() const { return modes.cols(); }
  /// True when the modes form a complete eigenbasis of `koopman`.
  bool fullBasis() const { return modes.cols() == koopman.rows(); }
};

SnapshotPair build_snapshots(const std::vector<RVector>& series, double dt);

DmdModel fit_dmd(const SnapshotPair& snap,
                 double rank_tol = linalg::kDefaultRankTol);

/// Builds a model around a given operator (full eigenbasis), with amplitudes
/// fitted to g0.
DmdModel model_from_operator(const CMatrix& koopman, const CVector& g0,
                             double dt);

CVector fit_amplitudes(const CMatrix& modes, const CVector& g0);

Complex continuous_exponent(Complex discrete_eigenvalue, double dt,
                            ExponentMap map = ExponentMap::FiniteDifference);

CVector dmd_reconstruct(const DmdModel& model, double t,
                        ExponentMap map = ExponentMap::FiniteDifference);

}  // namespace mddmd

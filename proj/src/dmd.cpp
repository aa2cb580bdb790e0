#include "mddmd/dmd.hpp"

#include <cmath>
#include <string>

#include "mddmd/error.hpp"

namespace mddmd {

namespace {

void attach_amplitudes(DmdModel& model, const CVector& g0) {
  model.amplitudes = fit_amplitudes(model.modes, g0);
  model.amplitudeResidual = (model.modes * model.amplitudes - g0).norm();
}

}  // namespace

SnapshotPair build_snapshots(const std::vector<RVector>& series, double dt) {
  if (series.size() < 3) {
    throw Error(ErrorCode::InsufficientData,
                "build_snapshots: need at least 3 observations, got " +
                    std::to_string(series.size()));
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw Error(ErrorCode::InvalidArgument, "build_snapshots: dt must be > 0");
  }
  const Index dim = series.front().size();
  if (dim == 0) {
    throw Error(ErrorCode::ShapeError, "build_snapshots: empty observation");
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].size() != dim) {
      throw Error(ErrorCode::ShapeError,
                  "build_snapshots: observation " + std::to_string(i) +
                      " has dimension " + std::to_string(series[i].size()) +
                      ", expected " + std::to_string(dim));
    }
  }
  const Index pairs = static_cast<Index>(series.size()) - 1;
  SnapshotPair snap;
  snap.dt = dt;
  snap.gMinus.resize(dim, pairs);
  snap.gPlus.resize(dim, pairs);
  for (Index j = 0; j < pairs; ++j) {
    snap.gMinus.col(j) = series[static_cast<std::size_t>(j)].cast<Complex>();
    snap.gPlus.col(j) = series[static_cast<std::size_t>(j + 1)].cast<Complex>();
  }
  return snap;
}

DmdModel fit_dmd(const SnapshotPair& snap, double rank_tol) {
  if (snap.gMinus.rows() != snap.gPlus.rows() ||
      snap.gMinus.cols() != snap.gPlus.cols()) {
    throw Error(ErrorCode::ShapeError, "fit_dmd: snapshot matrices differ in shape");
  }
  if (!(snap.dt > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "fit_dmd: dt must be > 0");
  }
  const linalg::ThinSvd svd = linalg::thin_svd(snap.gMinus, rank_tol);
  const CMatrix projected =
      snap.gPlus * svd.v * svd.sigma.cwiseInverse().cast<Complex>().asDiagonal();

  DmdModel model;
  model.dt = snap.dt;
  model.rank = svd.rank;
  model.koopman = projected * svd.u.adjoint();

  const linalg::EigOptions relaxed{linalg::kDefaultDegeneracyTol, false};
  if (svd.rank == snap.observables()) {
    const auto eig = linalg::eig_general(model.koopman, relaxed);
    model.modes = eig.vectors;
    model.discreteEigenvalues = eig.values;
    model.leftModes = eig.leftVectors;
  } else {
    // Rank-deficient data: exact-DMD modes of the reduced operator.
    const CMatrix reduced = svd.u.adjoint() * projected;
    const auto eig = linalg::eig_general(reduced, relaxed);
    const Index r = svd.rank;
    model.discreteEigenvalues = eig.values;
    model.modes.resize(snap.observables(), r);
    for (Index l = 0; l < r; ++l) {
      const Complex lambda = eig.values(l);
      CVector mode = std::abs(lambda) > rank_tol
                         ? CVector(projected * eig.vectors.col(l) / lambda)
                         : CVector(svd.u * eig.vectors.col(l));
      model.modes.col(l) = mode / mode.norm();
    }
    CMatrix left = eig.leftVectors * svd.u.adjoint();
    const CMatrix pairing = left * model.modes;
    for (Index l = 0; l < r; ++l) left.row(l) /= pairing(l, l);
    model.leftModes = left;
  }

  attach_amplitudes(model, snap.gMinus.col(0));
  return model;
}

DmdModel model_from_operator(const CMatrix& koopman, const CVector& g0,
                             double dt) {
  if (koopman.rows() != koopman.cols() || g0.size() != koopman.rows()) {
    throw Error(ErrorCode::ShapeError, "model_from_operator: shape mismatch");
  }
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "model_from_operator: dt must be > 0");
  }
  const auto eig =
      linalg::eig_general(koopman, {linalg::kDefaultDegeneracyTol, false});
  DmdModel model;
  model.koopman = koopman;
  model.modes = eig.vectors;
  model.discreteEigenvalues = eig.values;
  model.leftModes = eig.leftVectors;
  model.dt = dt;
  model.rank = koopman.rows();
  attach_amplitudes(model, g0);
  return model;
}

CVector fit_amplitudes(const CMatrix& modes, const CVector& g0) {
  if (g0.size() != modes.rows()) {
    throw Error(ErrorCode::ShapeError, "fit_amplitudes: g0 dimension mismatch");
  }
  return linalg::pseudoinverse(modes) * g0;
}

Complex continuous_exponent(Complex discrete_eigenvalue, double dt,
                            ExponentMap map) {
  switch (map) {
    case ExponentMap::FiniteDifference:
      return (discrete_eigenvalue - 1.0) / dt;
    case ExponentMap::Logarithm:
      if (std::abs(discrete_eigenvalue) == 0.0) {
        throw Error(ErrorCode::BranchAmbiguity,
                    "continuous_exponent: log of a zero eigenvalue");
      }
      return std::log(discrete_eigenvalue) / dt;
  }
  return {};
}

CVector dmd_reconstruct(const DmdModel& model, double t, ExponentMap map) {
  if (!(t >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "dmd_reconstruct: t must be >= 0");
  }
  const double steps = t / model.dt;
  CVector out = CVector::Zero(model.observables());
  for (Index l = 0; l < model.modeCount(); ++l) {
    const Complex lambda = model.discreteEigenvalues(l);
    const Complex rate = map == ExponentMap::FiniteDifference
                             ? lambda - 1.0
                             : continuous_exponent(lambda, 1.0, map);
    out += model.modes.col(l) * (std::exp(steps * rate) * model.amplitudes(l));
  }
  return out;
}

}  // namespace mddmd

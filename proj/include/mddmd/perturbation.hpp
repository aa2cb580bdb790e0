#pragma once

#include <vector>

#include "mddmd/dmd.hpp"
#include "mddmd/linalg.hpp"

namespace mddmd::perturbation {

/// How the gradient of tr(R^T M(A;K0)) enters the first-order correction.
enum class GradientLayout {
  // Gradient of the memory-augmented least-squares objective:
  //   K1 = -(G - M G-^T)(G- G-^T)^{-1},  G(j,k) = d tr(R^T M) / dA(j,k).
  Consistent,
  // Trace-representation layout with the transposed data term:
  //   K1 = -(G^T - G- M^T)(G- G-^T)^{-1}.
  Literal,
};

/// Eigendecomposition of the DMD operator as a complete, simple eigenbasis.
/// Throws DegenerateSpectrum for repeated eigenvalues or a rank-deficient fit.
linalg::EigenDecomposition spectral_basis(const DmdModel& model);

/// Derivative of the memory matrix M(A;K0) = S(A) {0 f_1 K0 ... } along
/// `direction`, evaluated from the eigenbasis of A. No eigensolver is called.
CMatrix memory_matrix_derivative(const linalg::EigenDecomposition& a_eig,
                                 const CVector& k0, const CMatrix& direction,
                                 Index nCols, double dt);

/// tr(R^T DM W^(jk)), W^(jk) the unit matrix with a one at (j,k).
Complex directional_derivative_memory(const linalg::EigenDecomposition& a_eig,
                                      const CMatrix& residual, const CVector& k0,
                                      Index j, Index k, Index nCols, double dt);

/// All N_d^2 directional derivatives; entry (j,k) is the derivative along
/// W^(jk). One table of f_j values is shared across directions.
CMatrix memory_trace_gradient(const linalg::EigenDecomposition& a_eig,
                              const CMatrix& residual, const CVector& k0,
                              Index nCols, double dt);

struct CorrectionOperator {
  CMatrix matrix;
  CVector sourceKernel;
  bool gramIllConditioned = false;
};

/// K0-independent pieces of the correction, computed once per model and
/// shared read-only across an ensemble of kernel samples.
struct CorrectionContext {
  linalg::EigenDecomposition basis;
  CMatrix residual;      // G+ - K G-
  CMatrix gMinus;
  CMatrix gramInverse;   // (G- G-^T)^{-1}, pseudoinverse when ill-conditioned
  bool gramIllConditioned = false;
  double dt = 0.0;
  GradientLayout layout = GradientLayout::Consistent;
};

CorrectionContext prepare_correction(
    const DmdModel& model, const SnapshotPair& snap,
    GradientLayout layout = GradientLayout::Consistent,
    double rank_tol = linalg::kDefaultRankTol);

CorrectionOperator assemble_correction(const CorrectionContext& context,
                                       const CVector& k0);

CorrectionOperator assemble_correction(const DmdModel& model,
                                       const SnapshotPair& snap,
                                       const CVector& k0);

/// Left-hand side of the first-order stationarity condition at an arbitrary
/// operator `a`:  a G- G-^T - G+ G-^T + dt (grad - M G-^T)  (Consistent layout).
CMatrix stationarity_residual(const CMatrix& a, const SnapshotPair& snap,
                              const CVector& k0,
                              GradientLayout layout = GradientLayout::Consistent);

struct ModePerturbation {
  CVector lambda1;  // first-order eigenvalue shifts
  CMatrix v1;       // first-order eigenvector shifts (columns)
  double solveResidual = 0.0;  // max |(K - lambda_j) v1_j - (lambda1_j - K1) v_j|
};

/// K0-independent pieces of the mode perturbation: the eigenbasis and the
/// pseudoinverses of K - lambda_j.
struct ModeContext {
  linalg::EigenDecomposition basis;
  CMatrix koopman;
  std::vector<CMatrix> shiftedPinv;
};

ModeContext prepare_modes(const DmdModel& model);

ModePerturbation first_order_modes(const ModeContext& context,
                                   const CMatrix& correction);
ModePerturbation first_order_modes(const DmdModel& model,
                                   const CMatrix& correction);

}  // namespace mddmd::perturbation

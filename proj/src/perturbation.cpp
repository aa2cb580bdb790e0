#include "mddmd/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mddmd/error.hpp"
#include "mddmd/memory_kernel.hpp"

namespace mddmd::perturbation {

namespace {

// f_j(mu_i), f_j'(mu_i) and S(mu_i) on the eigenvalues mu of A - I.
struct ModalTables {
  CMatrix f;       // dim x nCols, column 0 zero
  CMatrix fPrime;  // dim x nCols
  CVector s;
  CVector k0Modal;
  CMatrix memoryHat;  // V {0 f_1 K0 ...} in observable coordinates
};

ModalTables build_tables(const linalg::EigenDecomposition& a_eig,
                         const CVector& k0, Index nCols, double dt) {
  const Index dim = a_eig.values.size();
  if (k0.size() != dim) {
    throw Error(ErrorCode::ShapeError, "memory derivative: K0 dimension mismatch");
  }
  if (nCols < 1) {
    throw Error(ErrorCode::InvalidArgument, "memory derivative: need nCols >= 1");
  }
  ModalTables t;
  t.f = CMatrix::Zero(dim, nCols);
  t.fPrime = CMatrix::Zero(dim, nCols);
  t.s.resize(dim);
  t.k0Modal = a_eig.leftVectors * k0;
  for (Index i = 0; i < dim; ++i) {
    const Complex mu = a_eig.values(i) - 1.0;
    t.s(i) = memory::s_scalar(mu, dt);
    for (Index j = 1; j < nCols; ++j) {
      t.f(i, j) = memory::f_scalar(mu, j, dt);
      t.fPrime(i, j) = memory::f_scalar_derivative(mu, j, dt);
    }
  }
  t.memoryHat = a_eig.vectors * (t.k0Modal.asDiagonal() * t.f);
  return t;
}

// Derivative of the modal block {0 f_1 K0 ...} along W~ = V^{-1} W V:
// eigenvalue shifts diag(W~) through f', eigenvector shifts through the
// commutator [Phi_1, f_j(Lambda)].
CMatrix modal_derivative(const linalg::EigenDecomposition& a_eig,
                         const ModalTables& t, const CMatrix& w_modal) {
  const Index dim = a_eig.values.size();
  const Index cols = t.f.cols();

  CMatrix phi = CMatrix::Zero(dim, dim);
  for (Index m = 0; m < dim; ++m) {
    for (Index l = 0; l < dim; ++l) {
      if (m == l) continue;
      phi(m, l) = -w_modal(m, l) / (a_eig.values(m) - a_eig.values(l));
    }
  }
  const CVector lambda1 = w_modal.diagonal();
  const CVector phi_k0 = phi * t.k0Modal;

  CMatrix d = CMatrix::Zero(dim, cols);
  for (Index j = 1; j < cols; ++j) {
    const CVector fk = t.f.col(j).cwiseProduct(t.k0Modal);
    d.col(j) = t.fPrime.col(j).cwiseProduct(lambda1).cwiseProduct(t.k0Modal) +
               phi * fk - t.f.col(j).cwiseProduct(phi_k0);
  }
  return d;
}

CMatrix derivative_from_tables(const linalg::EigenDecomposition& a_eig,
                               const ModalTables& t, const CMatrix& direction) {
  const CMatrix w_modal = a_eig.leftVectors * direction * a_eig.vectors;
  const CMatrix d_hat = modal_derivative(a_eig, t, w_modal);
  // Product rule on S(A) M^(A), with dS = W / 2.
  return 0.5 * direction * t.memoryHat +
         a_eig.vectors * (t.s.asDiagonal() * d_hat);
}

CMatrix gradient_from_tables(const linalg::EigenDecomposition& a_eig,
                             const ModalTables& t, const CMatrix& residual) {
  const Index dim = a_eig.values.size();
  CMatrix grad(dim, dim);
  CMatrix direction = CMatrix::Zero(dim, dim);
  for (Index j = 0; j < dim; ++j) {
    for (Index k = 0; k < dim; ++k) {
      direction(j, k) = 1.0;
      const CMatrix d = derivative_from_tables(a_eig, t, direction);
      grad(j, k) = (residual.array() * d.array()).sum();
      direction(j, k) = 0.0;
    }
  }
  return grad;
}

void require_residual_shape(const linalg::EigenDecomposition& a_eig,
                            const CMatrix& residual, Index nCols) {
  if (residual.rows() != a_eig.values.size() || residual.cols() != nCols) {
    throw Error(ErrorCode::ShapeError, "memory derivative: residual shape mismatch");
  }
}

CMatrix correction_from_pieces(const CMatrix& grad, const CMatrix& memory,
                               const CMatrix& g_minus, const CMatrix& gram_inv,
                               GradientLayout layout) {
  if (layout == GradientLayout::Consistent) {
    return -(grad - memory * g_minus.transpose()) * gram_inv;
  }
  return -(grad.transpose() - g_minus * memory.transpose()) * gram_inv;
}

}  // namespace

linalg::EigenDecomposition spectral_basis(const DmdModel& model) {
  if (!model.fullBasis()) {
    throw Error(ErrorCode::DegenerateSpectrum,
                "memory correction needs a complete eigenbasis; snapshot data "
                "has rank " + std::to_string(model.rank) + " < " +
                    std::to_string(model.observables()));
  }
  linalg::EigenDecomposition eig;
  eig.vectors = model.modes;
  eig.values = model.discreteEigenvalues;
  eig.leftVectors = model.leftModes;
  eig.minGap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < eig.values.size(); ++i) {
    for (Index j = i + 1; j < eig.values.size(); ++j) {
      eig.minGap = std::min(eig.minGap, std::abs(eig.values(i) - eig.values(j)));
    }
  }
  if (!eig.isSimple()) {
    throw Error(ErrorCode::DegenerateSpectrum,
                "DMD operator has a repeated eigenvalue (gap " +
                    std::to_string(eig.minGap) + ")");
  }
  return eig;
}

CMatrix memory_matrix_derivative(const linalg::EigenDecomposition& a_eig,
                                 const CVector& k0, const CMatrix& direction,
                                 Index nCols, double dt) {
  const Index dim = a_eig.values.size();
  if (direction.rows() != dim || direction.cols() != dim) {
    throw Error(ErrorCode::ShapeError, "memory derivative: direction shape mismatch");
  }
  const ModalTables t = build_tables(a_eig, k0, nCols, dt);
  return derivative_from_tables(a_eig, t, direction);
}

Complex directional_derivative_memory(const linalg::EigenDecomposition& a_eig,
                                      const CMatrix& residual, const CVector& k0,
                                      Index j, Index k, Index nCols, double dt) {
  const Index dim = a_eig.values.size();
  if (j < 0 || k < 0 || j >= dim || k >= dim) {
    throw Error(ErrorCode::InvalidArgument, "memory derivative: direction out of range");
  }
  require_residual_shape(a_eig, residual, nCols);
  CMatrix direction = CMatrix::Zero(dim, dim);
  direction(j, k) = 1.0;
  const CMatrix d = memory_matrix_derivative(a_eig, k0, direction, nCols, dt);
  return (residual.array() * d.array()).sum();
}

CMatrix memory_trace_gradient(const linalg::EigenDecomposition& a_eig,
                              const CMatrix& residual, const CVector& k0,
                              Index nCols, double dt) {
  require_residual_shape(a_eig, residual, nCols);
  const ModalTables t = build_tables(a_eig, k0, nCols, dt);
  return gradient_from_tables(a_eig, t, residual);
}

CorrectionContext prepare_correction(const DmdModel& model,
                                     const SnapshotPair& snap,
                                     GradientLayout layout, double rank_tol) {
  if (snap.observables() != model.observables()) {
    throw Error(ErrorCode::ShapeError, "prepare_correction: model/data dimension mismatch");
  }
  CorrectionContext ctx;
  ctx.basis = spectral_basis(model);
  ctx.residual = snap.gPlus - model.koopman * snap.gMinus;
  ctx.gMinus = snap.gMinus;
  ctx.dt = snap.dt;
  ctx.layout = layout;

  const CMatrix gram = snap.gMinus * snap.gMinus.transpose();
  const linalg::ThinSvd gram_svd = linalg::thin_svd(gram, rank_tol);
  ctx.gramIllConditioned = gram_svd.rank < gram.rows();
  ctx.gramInverse = gram_svd.v *
                    gram_svd.sigma.cwiseInverse().cast<Complex>().asDiagonal() *
                    gram_svd.u.adjoint();
  return ctx;
}

CorrectionOperator assemble_correction(const CorrectionContext& ctx,
                                       const CVector& k0) {
  const Index n_cols = ctx.gMinus.cols();
  const ModalTables t = build_tables(ctx.basis, k0, n_cols, ctx.dt);
  const CMatrix grad = gradient_from_tables(ctx.basis, t, ctx.residual);
  CMatrix memory = ctx.basis.vectors * (t.s.asDiagonal() *
                                        (t.k0Modal.asDiagonal() * t.f));
  CorrectionOperator out;
  out.matrix = correction_from_pieces(grad, memory, ctx.gMinus, ctx.gramInverse,
                                      ctx.layout);
  out.sourceKernel = k0;
  out.gramIllConditioned = ctx.gramIllConditioned;
  if (!linalg::all_finite(out.matrix)) {
    throw Error(ErrorCode::NumericalFailure, "assemble_correction: non-finite correction");
  }
  return out;
}

CorrectionOperator assemble_correction(const DmdModel& model,
                                       const SnapshotPair& snap,
                                       const CVector& k0) {
  return assemble_correction(prepare_correction(model, snap), k0);
}

CMatrix stationarity_residual(const CMatrix& a, const SnapshotPair& snap,
                              const CVector& k0, GradientLayout layout) {
  const auto eig = linalg::eig_general(a);
  const Index n_cols = snap.pairs();
  const CMatrix residual = snap.gPlus - a * snap.gMinus;
  const ModalTables t = build_tables(eig, k0, n_cols, snap.dt);
  const CMatrix grad = gradient_from_tables(eig, t, residual);
  const CMatrix memory =
      eig.vectors * (t.s.asDiagonal() * (t.k0Modal.asDiagonal() * t.f));
  const CMatrix gt = snap.gMinus.transpose();
  const CMatrix base = a * snap.gMinus * gt - snap.gPlus * gt;
  if (layout == GradientLayout::Consistent) {
    return base + snap.dt * (grad - memory * gt);
  }
  return base + snap.dt * (grad.transpose() - snap.gMinus * memory.transpose());
}

ModeContext prepare_modes(const DmdModel& model) {
  ModeContext ctx;
  ctx.basis = spectral_basis(model);
  ctx.koopman = model.koopman;
  const Index dim = model.observables();
  ctx.shiftedPinv.reserve(static_cast<std::size_t>(dim));
  for (Index j = 0; j < dim; ++j) {
    const CMatrix shifted =
        model.koopman - ctx.basis.values(j) * CMatrix::Identity(dim, dim);
    // Simple eigenvalue: exactly one singular value of K - lambda_j vanishes.
    ctx.shiftedPinv.push_back(linalg::pseudoinverse_fixed_rank(shifted, dim - 1));
  }
  return ctx;
}

ModePerturbation first_order_modes(const ModeContext& ctx,
                                   const CMatrix& correction) {
  const Index dim = ctx.koopman.rows();
  if (correction.rows() != dim || correction.cols() != dim) {
    throw Error(ErrorCode::ShapeError, "first_order_modes: correction shape mismatch");
  }

  ModePerturbation out;
  out.lambda1.resize(dim);
  out.v1.resize(dim, dim);
  for (Index j = 0; j < dim; ++j) {
    const CVector v0 = ctx.basis.vectors.col(j);
    // Rows of V^{-1} span the null space of (K - lambda_j)^H.
    const Eigen::RowVectorXcd adjoint_row = ctx.basis.leftVectors.row(j);
    const Complex pairing = (adjoint_row * v0)(0);
    if (std::abs(pairing) < 1e-12) {
      throw Error(ErrorCode::BiorthogonalityFailure,
                  "first_order_modes: <v0, v0^(a)> vanishes for mode " +
                      std::to_string(j));
    }
    const Complex lambda1 = (adjoint_row * correction * v0)(0) / pairing;
    out.lambda1(j) = lambda1;

    const CVector rhs = lambda1 * v0 - correction * v0;
    out.v1.col(j) = ctx.shiftedPinv[static_cast<std::size_t>(j)] * rhs;
    const CMatrix shifted =
        ctx.koopman - ctx.basis.values(j) * CMatrix::Identity(dim, dim);
    out.solveResidual =
        std::max(out.solveResidual, (shifted * out.v1.col(j) - rhs).norm());
  }
  return out;
}

ModePerturbation first_order_modes(const DmdModel& model,
                                   const CMatrix& correction) {
  return first_order_modes(prepare_modes(model), correction);
}

}  // namespace mddmd::perturbation

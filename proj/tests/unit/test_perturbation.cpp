#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mddmd/dmd.hpp"
#include "mddmd/error.hpp"
#include "mddmd/memory_kernel.hpp"
#include "mddmd/perturbation.hpp"

using namespace mddmd;
using namespace testutil;
namespace pt = mddmd::perturbation;
namespace mk = mddmd::memory;

namespace {

linalg::EigenDecomposition basis_of(const CMatrix& a) { return linalg::eig_general(a); }

CMatrix fd_memory(const CMatrix& a, const CMatrix& w, const CVector& k0, Index cols,
                  double dt, double eps) {
  return (mk::build_memory_matrix(a + eps * w, k0, cols, dt).values -
          mk::build_memory_matrix(a - eps * w, k0, cols, dt).values) /
         (2.0 * eps);
}

// Noisy data from a random near-identity operator scaled to spectral radius 0.97.
SnapshotPair noisy_snapshots(std::mt19937_64& rng, Index dim, Index pairs, double dt) {
  RMatrix a = RMatrix::Identity(dim, dim) + 0.1 * random_real(rng, dim, dim);
  a *= 0.97 / Eigen::EigenSolver<RMatrix>(a).eigenvalues().cwiseAbs().maxCoeff();
  std::vector<RVector> series{random_real(rng, dim, 1)};
  for (Index i = 0; i < pairs; ++i)
    series.push_back(a * series.back() + 0.05 * random_real(rng, dim, 1));
  return build_snapshots(series, dt);
}

// Half squared norm of G+ - A G- + eps M(A; K0); M built with snap.dt.
double objective(const CMatrix& a, const SnapshotPair& snap, const CVector& k0, double eps) {
  const CMatrix m = mk::build_memory_matrix(a, k0, snap.pairs(), snap.dt).values;
  return 0.5 * (snap.gPlus - a * snap.gMinus + eps * m).squaredNorm();
}

RMatrix objective_gradient(const CMatrix& a, const SnapshotPair& snap, const CVector& k0,
                           double eps) {
  const double h = 1e-6;
  RMatrix g(a.rows(), a.cols());
  for (Index j = 0; j < a.rows(); ++j) {
    for (Index k = 0; k < a.cols(); ++k) {
      CMatrix e = CMatrix::Zero(a.rows(), a.cols());
      e(j, k) = h;
      g(j, k) = (objective(a + e, snap, k0, eps) - objective(a - e, snap, k0, eps)) / (2.0 * h);
    }
  }
  return g;
}

double gradient_at(const SnapshotPair& snap, const CVector& k0, pt::GradientLayout layout,
                   double eps) {
  const auto model = fit_dmd(snap);
  const auto ctx = pt::prepare_correction(model, snap, layout);
  const CMatrix a = model.koopman + eps * pt::assemble_correction(ctx, k0).matrix;
  return objective_gradient(a, snap, k0, eps).norm();
}

}  // namespace

TEST_CASE("memory derivative vanishes for a zero kernel") {
  std::mt19937_64 rng(1);
  const CMatrix a = CMatrix::Identity(3, 3) + 0.1 * random_real(rng, 3, 3).cast<Complex>();
  const auto eig = basis_of(a);
  const CMatrix r = random_real(rng, 3, 10).cast<Complex>();
  for (Index j = 0; j < 3; ++j)
    for (Index k = 0; k < 3; ++k)
      CHECK(std::abs(pt::directional_derivative_memory(eig, r, CVector::Zero(3), j, k, 10, 0.1)) == 0.0);
}

TEST_CASE("memory derivative matches central differences") {
  std::mt19937_64 rng(2);
  const double dt = 0.1;
  int good = 0;
  const int trials = 40;
  for (int trial = 0; trial < trials; ++trial) {
    const CMatrix a = CMatrix::Identity(3, 3) + 0.1 * random_real(rng, 3, 3).cast<Complex>();
    const CVector k0 = random_real(rng, 3, 1).cast<Complex>();
    const auto eig = basis_of(a);
    const Index cols = 15;
    const CMatrix r = random_real(rng, 3, cols).cast<Complex>();
    const CMatrix grad = pt::memory_trace_gradient(eig, r, k0, cols, dt);
    double worst = 0.0;
    for (Index j = 0; j < 3; ++j) {
      for (Index k = 0; k < 3; ++k) {
        CMatrix w = CMatrix::Zero(3, 3);
        w(j, k) = 1.0;
        const CMatrix an = pt::memory_matrix_derivative(eig, k0, w, cols, dt);
        const CMatrix fd = fd_memory(a, w, k0, cols, dt, 1e-6);
        worst = std::max(worst, rel_err(an, fd));
        const Complex tr_fd = (r.array() * fd.array()).sum();
        CHECK(std::abs(grad(j, k) - tr_fd) <= 1e-5 * std::max(1.0, std::abs(tr_fd)));
        CHECK(std::abs(grad(j, k) -
                       pt::directional_derivative_memory(eig, r, k0, j, k, cols, dt)) < 1e-12);
      }
    }
    if (worst <= 1e-5) ++good;
  }
  CHECK(good >= trials * 95 / 100);
}

TEST_CASE("off-diagonal direction on a diagonal operator: divided differences only") {
  const double dt = 0.1;
  CMatrix a = CMatrix::Zero(2, 2);
  a(0, 0) = 0.97;
  a(1, 1) = Complex(0.99, 0.08);
  CVector k0(2);
  k0 << 0.6, -1.3;
  const auto eig = basis_of(a);
  CMatrix w = CMatrix::Zero(2, 2);
  w(0, 1) = 1.0;
  const CMatrix w_modal = eig.leftVectors * w * eig.vectors;
  CHECK(w_modal.diagonal().cwiseAbs().maxCoeff() < 1e-15);

  const Index cols = 12;
  const CMatrix d = pt::memory_matrix_derivative(eig, k0, w, cols, dt);
  const Complex mu0 = a(0, 0) - 1.0;
  const Complex mu1 = a(1, 1) - 1.0;
  for (Index j = 1; j < cols; ++j) {
    const Complex f0 = mk::f_scalar(mu0, j, dt);
    const Complex f1 = mk::f_scalar(mu1, j, dt);
    // d(f_j(A) K0) = W01 (f(a0) - f(a1)) / (a0 - a1) K0(1) in the first row
    const Complex df = (f0 - f1) / (a(0, 0) - a(1, 1)) * k0(1);
    const Complex expect0 = 0.5 * f1 * k0(1) + mk::s_scalar(mu0, dt) * df;
    CHECK(std::abs(d(0, j) - expect0) < 1e-13);
    CHECK(std::abs(d(1, j)) < 1e-13);
  }
  CHECK(d.col(0).norm() == 0.0);
}

TEST_CASE("the gradient loop performs no eigendecompositions") {
  std::mt19937_64 rng(3);
  const auto snap = noisy_snapshots(rng, 3, 30, 0.1);
  const auto model = fit_dmd(snap);
  const auto ctx = pt::prepare_correction(model, snap);
  const CVector k0 = random_real(rng, 3, 1).cast<Complex>();
  const auto before = linalg::eig_invocations();
  pt::memory_trace_gradient(ctx.basis, ctx.residual, k0, snap.pairs(), snap.dt);
  pt::assemble_correction(ctx, k0);
  CHECK(linalg::eig_invocations() == before);
  linalg::eig_general(model.koopman);
  CHECK(linalg::eig_invocations() == before + 1);
}

TEST_CASE("zero kernel gives a zero correction") {
  std::mt19937_64 rng(4);
  const auto snap = noisy_snapshots(rng, 3, 25, 0.1);
  const auto model = fit_dmd(snap);
  const auto c = pt::assemble_correction(model, snap, CVector::Zero(3));
  CHECK(c.matrix.norm() == 0.0);
  const auto modes = pt::first_order_modes(model, c.matrix);
  CHECK(modes.lambda1.norm() == 0.0);
  CHECK(modes.v1.norm() == 0.0);
}

TEST_CASE("exact linear data: only the memory term survives") {
  std::mt19937_64 rng(5);
  const RMatrix a = RMatrix::Identity(2, 2) + 0.1 * random_real(rng, 2, 2);
  std::vector<RVector> series{random_real(rng, 2, 1)};
  for (int i = 0; i < 20; ++i) series.push_back(a * series.back());
  const auto snap = build_snapshots(series, 0.1);
  const auto model = fit_dmd(snap);
  const CVector k0 = random_real(rng, 2, 1).cast<Complex>();
  const auto ctx = pt::prepare_correction(model, snap);
  CHECK(ctx.residual.norm() < 1e-12);
  const CMatrix m = mk::build_memory_matrix(model.koopman, k0, snap.pairs(), 0.1).values;
  const CMatrix gm = snap.gMinus;
  const CMatrix expect = m * gm.transpose() * (gm * gm.transpose()).inverse();
  CHECK(rel_err(pt::assemble_correction(ctx, k0).matrix, expect) < 1e-9);
}

TEST_CASE("correction makes the memory-augmented objective stationary to second order") {
  std::mt19937_64 rng(6);
  const auto snap = noisy_snapshots(rng, 2, 30, 0.1);
  const CVector k0 = random_real(rng, 2, 1).cast<Complex>();
  // Expansion parameter eps kept apart from the step inside M.
  const double g1 = gradient_at(snap, k0, pt::GradientLayout::Consistent, 0.02);
  const double g2 = gradient_at(snap, k0, pt::GradientLayout::Consistent, 0.01);
  const double g3 = gradient_at(snap, k0, pt::GradientLayout::Consistent, 0.005);
  CHECK(g1 / g2 == doctest::Approx(4.0).epsilon(0.1));
  CHECK(g2 / g3 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("the transposed layout leaves a first-order objective gradient") {
  std::mt19937_64 rng(7);
  const auto snap = noisy_snapshots(rng, 2, 30, 0.1);
  const CVector k0 = random_real(rng, 2, 1).cast<Complex>();
  const double g1 = gradient_at(snap, k0, pt::GradientLayout::Literal, 0.02);
  const double g2 = gradient_at(snap, k0, pt::GradientLayout::Literal, 0.01);
  CHECK(g1 / g2 == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("stationarity residual at the corrected operator is at least second order in dt") {
  std::mt19937_64 rng(6);
  const auto base = noisy_snapshots(rng, 2, 30, 0.1);
  const CVector k0 = random_real(rng, 2, 1).cast<Complex>();
  std::vector<double> res;
  for (double dt : {0.02, 0.01, 0.005}) {
    SnapshotPair snap = base;
    snap.dt = dt;
    const auto model = fit_dmd(snap);
    const CMatrix a = model.koopman + dt * pt::assemble_correction(model, snap, k0).matrix;
    res.push_back(pt::stationarity_residual(a, snap, k0).norm());
  }
  // M itself carries a factor dt, so the decay is faster than 4x per halving.
  CHECK(res[0] / res[1] >= 3.5);
  CHECK(res[1] / res[2] >= 3.5);
}

TEST_CASE("first_order_modes on diag(2,3) with a swap perturbation") {
  CMatrix k = CMatrix::Zero(2, 2);
  k(0, 0) = 2.0;
  k(1, 1) = 3.0;
  CVector g0(2);
  g0 << 1.0, 1.0;
  const auto model = model_from_operator(k, g0, 0.1);
  CMatrix k1(2, 2);
  k1 << 0.0, 1.0, 1.0, 0.0;
  const auto p = pt::first_order_modes(model, k1);
  CHECK(p.lambda1.norm() < 1e-15);
  for (Index j = 0; j < 2; ++j) {
    const Complex lam = model.discreteEigenvalues(j);
    const Index self = std::abs(lam - 2.0) < 0.5 ? 0 : 1;
    const Index other = 1 - self;
    const Complex other_lam = k(other, other);
    // (K - lam)^+ (0 - K1) e_self = -1 / (other_lam - lam) e_other
    CHECK(std::abs(p.v1(other, j) + 1.0 / (other_lam - lam)) < 1e-14);
    CHECK(std::abs(p.v1(self, j)) < 1e-14);
  }
  CHECK(p.solveResidual < 1e-8);
}

TEST_CASE("first-order eigenpairs converge at second order") {
  std::mt19937_64 rng(8);
  int trials = 0;
  for (int attempt = 0; attempt < 40 && trials < 15; ++attempt) {
    const Index dim = 2 + attempt % 3;
    const CMatrix k0 = random_real(rng, dim, dim).cast<Complex>();
    const auto eig = linalg::eig_general(k0, {1e-8, false});
    if (eig.minGap < 0.3) continue;
    ++trials;
    const auto model = model_from_operator(k0, CVector::Ones(dim), 0.1);
    const CMatrix k1 = random_real(rng, dim, dim).cast<Complex>();
    const auto p = pt::first_order_modes(model, k1);
    std::vector<double> eig_err;
    std::vector<double> vec_err;
    for (double dt : {1e-2, 5e-3, 2.5e-3}) {
      const auto perturbed = linalg::eig_general(k0 + dt * k1, {1e-8, false});
      double ee = 0.0;
      double ve = 0.0;
      for (Index j = 0; j < dim; ++j) {
        const Complex predicted = model.discreteEigenvalues(j) + dt * p.lambda1(j);
        Index best = 0;
        for (Index i = 1; i < dim; ++i)
          if (std::abs(perturbed.values(i) - predicted) < std::abs(perturbed.values(best) - predicted))
            best = i;
        ee = std::max(ee, std::abs(perturbed.values(best) - predicted));
        const CVector v0 = model.modes.col(j);
        CVector v = perturbed.vectors.col(best);
        v /= v0.dot(v);  // normalization <v0, v> = 1
        ve = std::max(ve, (v - (v0 + dt * p.v1.col(j))).norm());
      }
      eig_err.push_back(ee);
      vec_err.push_back(ve);
    }
    for (int i = 0; i < 2; ++i) {
      const double r = eig_err[i] / eig_err[i + 1];
      CHECK(r >= 3.5);
      CHECK(r <= 4.5);
      const double rv = vec_err[i] / vec_err[i + 1];
      CHECK(rv >= 3.5);
      CHECK(rv <= 4.5);
    }
  }
  CHECK(trials >= 10);
}

TEST_CASE("left and right modes are biorthogonal") {
  std::mt19937_64 rng(9);
  const auto snap = noisy_snapshots(rng, 4, 40, 0.1);
  const auto model = fit_dmd(snap);
  const auto basis = pt::spectral_basis(model);
  const CMatrix pairing = basis.leftVectors * basis.vectors;
  CHECK((pairing - CMatrix::Identity(4, 4)).norm() < 1e-8);
}

TEST_CASE("correction needs a complete simple eigenbasis") {
  RVector a(2);
  a << 1.0, 2.0;
  const auto snap = build_snapshots(std::vector<RVector>(6, a), 0.1);
  const auto model = fit_dmd(snap);
  try {
    pt::prepare_correction(model, snap);
    FAIL("expected DegenerateSpectrum");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateSpectrum);
  }
  CVector g0(2);
  g0 << 1.0, 0.0;
  try {
    pt::prepare_modes(model_from_operator(CMatrix::Identity(2, 2), g0, 0.1));
    FAIL("expected DegenerateSpectrum");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateSpectrum);
  }
}

TEST_CASE("correction is linear in the kernel") {
  std::mt19937_64 rng(10);
  const auto snap = noisy_snapshots(rng, 3, 25, 0.1);
  const auto model = fit_dmd(snap);
  const auto ctx = pt::prepare_correction(model, snap);
  const CVector k0 = random_real(rng, 3, 1).cast<Complex>();
  const CMatrix once = pt::assemble_correction(ctx, k0).matrix;
  const CMatrix twice = pt::assemble_correction(ctx, 2.0 * k0).matrix;
  MESSAGE("linearity deviation ", rel_err(twice, 2.0 * once));
  CHECK(rel_err(twice, 2.0 * once) < 1e-10);
}

#pragma once

#include <vector>

#include "mddmd/linalg.hpp"

namespace mddmd::memory {

/// |1 + (dt/2) lambda| below this is treated as a singular resolvent.
inline constexpr double kSingularityTol = 1e-12;

/// Discretised memory kernel in the eigenbasis: steps[n-1] holds K_n.
struct KernelSequence {
  CVector k0;
  std::vector<CVector> steps;
  double dt = 0.0;
};

/// N_d x N_T memory matrix; column 0 is identically zero.
struct MemoryMatrix {
  CMatrix values;
};

/// Entrywise 1 - dt / (1 + (dt/2) lambda).
CVector m_of(const CVector& lambda, double dt);

/// K_n = exp(dt Lambda) M(Lambda) K_{n-1}, n = 1..steps.
KernelSequence kernel_recursion(const CVector& lambda, const CVector& k0,
                                Index steps, double dt);

/// Direct O(n^2) summation of the trapezoid-discretised Volterra equation
///   (I + dt/2 L) K_n = e^{n dt L} (I - dt I + dt/2 L) K_0
///                      - dt sum_{l=1}^{n-1} e^{(n-l) dt L} K_l.
KernelSequence volterra_oracle(const CVector& lambda, const CVector& k0,
                               Index steps, double dt);

// Scalar maps on an eigenvalue `shifted` of A - I.
Complex memory_factor(Complex shifted, double dt);
Complex f_scalar(Complex shifted, Index j, double dt);
Complex f_scalar_derivative(Complex shifted, Index j, double dt);
/// Eigenvalue of S(A) = (1 - dt/2) I + (A - I)/2.
inline Complex s_scalar(Complex shifted, double dt) {
  return (1.0 - 0.5 * dt) + 0.5 * shifted;
}

/// f_j(A;K0) = e^{j(A-I)} (M(A)^j - I) K0 through the spectral calculus of A.
CVector f_j(const CMatrix& a, const CVector& k0, Index j, double dt);

/// S(A) {0 f_1 ... f_{nCols-1}}, evaluated from an eigendecomposition of A.
MemoryMatrix build_memory_matrix(const linalg::EigenDecomposition& a_eig,
                                 const CVector& k0, Index nCols, double dt);
MemoryMatrix build_memory_matrix(const CMatrix& a, const CVector& k0,
                                 Index nCols, double dt);

/// g_{n+1} = (I + dt L) g_n - dt e^{n dt L} (M^n - I)((1 - dt/2) + dt/2 L) K_0,
/// returning g_1..g_steps.
std::vector<CVector> propagate_with_memory(const CVector& lambda,
                                           const CVector& g0, const CVector& k0,
                                           Index steps, double dt);

/// Memory coefficient of the update before resummation:
/// (dt^2/2)(M^n - I)(I + 2 (M - I)^{-1}).
CVector trapezoid_update_coefficient(const CVector& lambda, Index n, double dt);
/// The resummed form -dt (M^n - I)((1 - dt/2) + dt/2 L).
CVector resummed_update_coefficient(const CVector& lambda, Index n, double dt);

}  // namespace mddmd::memory

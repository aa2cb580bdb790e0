#include "mddmd/memory_kernel.hpp"

#include <cmath>
#include <string>

#include "mddmd/error.hpp"

namespace mddmd::memory {

namespace {

Complex checked_resolvent_denominator(Complex denom) {
  if (std::abs(denom) < kSingularityTol) {
    throw Error(ErrorCode::ResolventSingular,
                "resolvent denominator |1 + (dt/2) lambda| = " +
                    std::to_string(std::abs(denom)));
  }
  return denom;
}

void require_steps(Index steps, const char* what) {
  if (steps < 1) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + ": need n >= 1");
  }
}

void require_same_size(const CVector& a, const CVector& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::ShapeError, std::string(what) + ": length mismatch");
  }
}

void require_basis(const linalg::EigenDecomposition& eig) {
  const Index n = eig.vectors.rows();
  if ((eig.leftVectors * eig.vectors - CMatrix::Identity(n, n)).norm() >
      1e-8 * static_cast<double>(n)) {
    throw Error(ErrorCode::NumericalFailure,
                "matrix function: operator is not diagonalisable");
  }
}

}  // namespace

CVector m_of(const CVector& lambda, double dt) {
  CVector out(lambda.size());
  for (Index i = 0; i < lambda.size(); ++i) {
    out(i) = 1.0 - dt / checked_resolvent_denominator(1.0 + 0.5 * dt * lambda(i));
  }
  return out;
}

KernelSequence kernel_recursion(const CVector& lambda, const CVector& k0,
                                Index steps, double dt) {
  require_steps(steps, "kernel_recursion");
  require_same_size(lambda, k0, "kernel_recursion");
  const CVector factor =
      linalg::exp_diagonal(lambda, dt).cwiseProduct(m_of(lambda, dt));

  KernelSequence seq{k0, {}, dt};
  seq.steps.reserve(static_cast<std::size_t>(steps));
  CVector current = k0;
  for (Index n = 1; n <= steps; ++n) {
    current = factor.cwiseProduct(current);
    seq.steps.push_back(current);
  }
  return seq;
}

KernelSequence volterra_oracle(const CVector& lambda, const CVector& k0,
                               Index steps, double dt) {
  require_steps(steps, "volterra_oracle");
  require_same_size(lambda, k0, "volterra_oracle");
  const Index dim = lambda.size();

  CVector lhs(dim);
  CVector start(dim);
  for (Index i = 0; i < dim; ++i) {
    lhs(i) = checked_resolvent_denominator(1.0 + 0.5 * dt * lambda(i));
    start(i) = (1.0 - dt) + 0.5 * dt * lambda(i);
  }

  KernelSequence seq{k0, {}, dt};
  seq.steps.reserve(static_cast<std::size_t>(steps));
  for (Index n = 1; n <= steps; ++n) {
    CVector rhs(dim);
    for (Index i = 0; i < dim; ++i) {
      rhs(i) = std::exp(static_cast<double>(n) * dt * lambda(i)) * start(i) * k0(i);
    }
    for (Index l = 1; l <= n - 1; ++l) {
      const CVector& kl = seq.steps[static_cast<std::size_t>(l - 1)];
      for (Index i = 0; i < dim; ++i) {
        rhs(i) -= dt * std::exp(static_cast<double>(n - l) * dt * lambda(i)) * kl(i);
      }
    }
    seq.steps.push_back(rhs.cwiseQuotient(lhs));
  }
  return seq;
}

Complex memory_factor(Complex shifted, double dt) {
  return 1.0 - dt / checked_resolvent_denominator(1.0 + 0.5 * shifted);
}

Complex f_scalar(Complex shifted, Index j, double dt) {
  const Complex m = memory_factor(shifted, dt);
  const double jd = static_cast<double>(j);
  return std::exp(jd * shifted) * (std::pow(m, jd) - 1.0);
}

Complex f_scalar_derivative(Complex shifted, Index j, double dt) {
  if (j == 0) return 0.0;
  const Complex denom = checked_resolvent_denominator(1.0 + 0.5 * shifted);
  const Complex m = 1.0 - dt / denom;
  const Complex dm = 0.5 * dt / (denom * denom);
  const double jd = static_cast<double>(j);
  const Complex mj1 = std::pow(m, jd - 1.0);
  return jd * std::exp(jd * shifted) * (mj1 * m - 1.0 + mj1 * dm);
}

CVector f_j(const CMatrix& a, const CVector& k0, Index j, double dt) {
  if (j < 1) throw Error(ErrorCode::InvalidArgument, "f_j: need j >= 1");
  if (a.rows() != a.cols() || k0.size() != a.rows()) {
    throw Error(ErrorCode::ShapeError, "f_j: shape mismatch");
  }
  const auto eig =
      linalg::eig_general(a, {linalg::kDefaultDegeneracyTol, false});
  require_basis(eig);
  CVector spectral(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    spectral(i) = f_scalar(eig.values(i) - 1.0, j, dt);
  }
  return eig.vectors * spectral.cwiseProduct(eig.leftVectors * k0);
}

MemoryMatrix build_memory_matrix(const linalg::EigenDecomposition& a_eig,
                                 const CVector& k0, Index nCols, double dt) {
  const Index dim = a_eig.values.size();
  if (k0.size() != dim) {
    throw Error(ErrorCode::ShapeError, "build_memory_matrix: K0 dimension mismatch");
  }
  if (nCols < 1) {
    throw Error(ErrorCode::InvalidArgument, "build_memory_matrix: need nCols >= 1");
  }
  require_basis(a_eig);

  const CVector k0_modal = a_eig.leftVectors * k0;
  CVector shifted(dim);
  CVector m(dim);
  CVector s(dim);
  for (Index i = 0; i < dim; ++i) {
    shifted(i) = a_eig.values(i) - 1.0;
    m(i) = memory_factor(shifted(i), dt);
    s(i) = s_scalar(shifted(i), dt);
  }

  CMatrix modal = CMatrix::Zero(dim, nCols);
  CVector m_power = CVector::Ones(dim);
  for (Index j = 1; j < nCols; ++j) {
    m_power = m_power.cwiseProduct(m);
    for (Index i = 0; i < dim; ++i) {
      const Complex f = std::exp(static_cast<double>(j) * shifted(i)) *
                        (m_power(i) - 1.0);
      modal(i, j) = s(i) * f * k0_modal(i);
    }
  }
  MemoryMatrix out{a_eig.vectors * modal};
  out.values.col(0).setZero();
  return out;
}

MemoryMatrix build_memory_matrix(const CMatrix& a, const CVector& k0,
                                 Index nCols, double dt) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::ShapeError, "build_memory_matrix: A is not square");
  }
  return build_memory_matrix(
      linalg::eig_general(a, {linalg::kDefaultDegeneracyTol, false}), k0, nCols,
      dt);
}

std::vector<CVector> propagate_with_memory(const CVector& lambda,
                                           const CVector& g0, const CVector& k0,
                                           Index steps, double dt) {
  require_steps(steps, "propagate_with_memory");
  require_same_size(lambda, g0, "propagate_with_memory");
  require_same_size(lambda, k0, "propagate_with_memory");
  const Index dim = lambda.size();
  const CVector m = m_of(lambda, dt);

  std::vector<CVector> out;
  out.reserve(static_cast<std::size_t>(steps));
  CVector g = g0;
  CVector m_power = CVector::Ones(dim);  // M^n
  for (Index n = 0; n < steps; ++n) {
    CVector next(dim);
    for (Index i = 0; i < dim; ++i) {
      const Complex memory = -dt *
                             std::exp(static_cast<double>(n) * dt * lambda(i)) *
                             (m_power(i) - 1.0) *
                             ((1.0 - 0.5 * dt) + 0.5 * dt * lambda(i)) * k0(i);
      next(i) = (1.0 + dt * lambda(i)) * g(i) + memory;
    }
    g = next;
    out.push_back(g);
    m_power = m_power.cwiseProduct(m);
  }
  return out;
}

CVector trapezoid_update_coefficient(const CVector& lambda, Index n, double dt) {
  const CVector m = m_of(lambda, dt);
  CVector out(lambda.size());
  for (Index i = 0; i < lambda.size(); ++i) {
    const Complex mn = std::pow(m(i), static_cast<double>(n));
    out(i) = 0.5 * dt * dt * (mn - 1.0) * (1.0 + 2.0 / (m(i) - 1.0));
  }
  return out;
}

CVector resummed_update_coefficient(const CVector& lambda, Index n, double dt) {
  const CVector m = m_of(lambda, dt);
  CVector out(lambda.size());
  for (Index i = 0; i < lambda.size(); ++i) {
    const Complex mn = std::pow(m(i), static_cast<double>(n));
    out(i) = -dt * (mn - 1.0) * ((1.0 - 0.5 * dt) + 0.5 * dt * lambda(i));
  }
  return out;
}

}  // namespace mddmd::memory

#include "mddmd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mddmd/error.hpp"

namespace mddmd::linalg {

namespace {

thread_local std::uint64_t g_eig_calls = 0;

void require_finite(const CMatrix& a, const char* what) {
  if (a.size() == 0) {
    throw Error(ErrorCode::ShapeError, std::string(what) + ": empty matrix");
  }
  if (!all_finite(a)) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(what) + ": non-finite entries");
  }
}

// Unit 2-norm, first significant component rotated onto the positive real axis.
void normalize_phase(Eigen::Ref<CVector> v) {
  const double norm = v.norm();
  if (norm == 0.0) return;
  v /= norm;
  for (Index i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v(i));
    if (mag > 1e-8) {
      v *= std::conj(v(i)) / mag;
      v(i) = Complex(std::abs(v(i)), 0.0);
      return;
    }
  }
}

}  // namespace

bool EigenDecomposition::isSimple(double degeneracy_tol) const {
  if (values.size() <= 1) return true;
  const double scale = values.cwiseAbs().maxCoeff();
  if (scale == 0.0) return false;
  return minGap >= degeneracy_tol * scale;
}

ThinSvd thin_svd(const CMatrix& a, double rank_tol) {
  require_finite(a, "thin_svd");
  if (rank_tol < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "thin_svd: negative rank_tol");
  }
  Eigen::JacobiSVD<CMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) {
    throw Error(ErrorCode::DegenerateInput, "thin_svd: all-zero input");
  }
  const double cutoff = rank_tol * s(0);
  Index rank = 0;
  while (rank < s.size() && s(rank) > cutoff) ++rank;

  ThinSvd out;
  out.rank = rank;
  out.sigma = s.head(rank);
  out.u = svd.matrixU().leftCols(rank);
  out.v = svd.matrixV().leftCols(rank);
  return out;
}

CMatrix pseudoinverse(const CMatrix& a, double rank_tol) {
  const ThinSvd svd = thin_svd(a, rank_tol);
  return svd.v * svd.sigma.cwiseInverse().cast<Complex>().asDiagonal() *
         svd.u.adjoint();
}

CMatrix pseudoinverse_fixed_rank(const CMatrix& a, Index rank) {
  require_finite(a, "pseudoinverse_fixed_rank");
  Eigen::JacobiSVD<CMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVector& s = svd.singularValues();
  if (rank < 0 || rank > s.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "pseudoinverse_fixed_rank: rank out of range");
  }
  CMatrix out = CMatrix::Zero(a.cols(), a.rows());
  for (Index i = 0; i < rank; ++i) {
    if (s(i) == 0.0) {
      throw Error(ErrorCode::NumericalFailure,
                  "pseudoinverse_fixed_rank: requested rank exceeds numerical rank");
    }
    out += svd.matrixV().col(i) * (1.0 / s(i)) * svd.matrixU().col(i).adjoint();
  }
  return out;
}

EigenDecomposition eig_general(const CMatrix& a, const EigOptions& options) {
  ++g_eig_calls;
  require_finite(a, "eig_general");
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::ShapeError, "eig_general: matrix is not square");
  }
  const Index n = a.rows();

  Eigen::ComplexEigenSolver<CMatrix> solver(a, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalFailure,
                "eig_general: eigenvalue iteration did not converge");
  }

  CVector raw_values = solver.eigenvalues();
  CMatrix raw_vectors = solver.eigenvectors();

  const bool real_input = a.imag().cwiseAbs().maxCoeff() == 0.0;
  const double scale = raw_values.size() ? raw_values.cwiseAbs().maxCoeff() : 0.0;
  if (real_input) {
    for (Index i = 0; i < n; ++i) {
      if (std::abs(raw_values(i).imag()) <= 1e-14 * std::max(scale, 1e-300)) {
        raw_values(i) = Complex(raw_values(i).real(), 0.0);
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index l, Index r) {
    const Complex& x = raw_values(l);
    const Complex& y = raw_values(r);
    if (x.imag() != y.imag()) return x.imag() > y.imag();
    return x.real() > y.real();
  });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    out.values(i) = raw_values(src);
    out.vectors.col(i) = raw_vectors.col(src);
    normalize_phase(out.vectors.col(i));
  }

  out.minGap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      out.minGap = std::min(out.minGap, std::abs(out.values(i) - out.values(j)));
    }
  }

  if (options.require_simple && !out.isSimple(options.degeneracy_tol)) {
    throw Error(ErrorCode::DegenerateSpectrum,
                "eig_general: eigenvalue gap " + std::to_string(out.minGap) +
                    " below degeneracy tolerance");
  }

  out.leftVectors = pseudoinverse(out.vectors, kDefaultRankTol);
  if (options.require_simple) {
    const double bi = (out.leftVectors * out.vectors -
                       CMatrix::Identity(n, n)).norm();
    if (!(bi <= 1e-8 * static_cast<double>(n))) {
      throw Error(ErrorCode::NumericalFailure,
                  "eig_general: eigenvector matrix is singular");
    }
  }

  const double residual =
      (a * out.vectors - out.vectors * out.values.asDiagonal()).norm();
  if (!std::isfinite(residual) ||
      residual > 1e-8 * std::max(1.0, a.norm())) {
    throw Error(ErrorCode::NumericalFailure,
                "eig_general: eigenpair residual " + std::to_string(residual));
  }
  return out;
}

std::uint64_t eig_invocations() { return g_eig_calls; }

double frobenius_norm(const CMatrix& a) { return a.norm(); }

Complex trace(const CMatrix& a) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::ShapeError, "trace: matrix is not square");
  }
  return a.trace();
}

CVector exp_diagonal(const CVector& values, double scale) {
  CVector out(values.size());
  for (Index i = 0; i < values.size(); ++i) out(i) = std::exp(scale * values(i));
  return out;
}

bool all_finite(const CMatrix& a) {
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      if (!std::isfinite(a(i, j).real()) || !std::isfinite(a(i, j).imag())) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace mddmd::linalg

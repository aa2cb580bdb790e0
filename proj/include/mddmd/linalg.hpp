#pragma once

#include <complex>
#include <cstdint>

#include <Eigen/Dense>

namespace mddmd {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace linalg {

inline constexpr double kDefaultRankTol = 1e-10;
inline constexpr double kDefaultDegeneracyTol = 1e-8;

/// Rank-truncated thin SVD, a = u * diag(sigma) * v^H.
struct ThinSvd {
  CMatrix u;
  RVector sigma;  // strictly positive, nonincreasing
  CMatrix v;
  Index rank = 0;
};

/// Right eigenvectors as columns (unit 2-norm, first significant component
/// real positive), eigenvalues, and left eigenvectors as rows normalised so
/// that leftVectors * vectors = I.
struct EigenDecomposition {
  CMatrix vectors;
  CVector values;
  CMatrix leftVectors;
  double minGap = 0.0;  // smallest pairwise eigenvalue distance

  bool isSimple(double degeneracy_tol = kDefaultDegeneracyTol) const;
};

/// Singular values <= rank_tol * sigma_max are discarded.
ThinSvd thin_svd(const CMatrix& a, double rank_tol = kDefaultRankTol);

CMatrix pseudoinverse(const CMatrix& a, double rank_tol = kDefaultRankTol);

/// Pseudoinverse keeping exactly `rank` singular triplets.
CMatrix pseudoinverse_fixed_rank(const CMatrix& a, Index rank);

struct EigOptions {
  double degeneracy_tol = kDefaultDegeneracyTol;
  // Plain DMD tolerates repeated eigenvalues; the perturbative layers do not.
  bool require_simple = true;
};

EigenDecomposition eig_general(const CMatrix& a, const EigOptions& options = {});

/// Number of eig_general calls made on the calling thread.
std::uint64_t eig_invocations();

double frobenius_norm(const CMatrix& a);
Complex trace(const CMatrix& a);

/// exp(scale * diag(values)) as a diagonal (vector) result.
CVector exp_diagonal(const CVector& values, double scale = 1.0);

bool all_finite(const CMatrix& a);

}  // namespace linalg
}  // namespace mddmd

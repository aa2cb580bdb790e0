#pragma once

#include <random>

#include "mddmd/linalg.hpp"

namespace testutil {

using mddmd::CMatrix;
using mddmd::CVector;
using mddmd::Complex;
using mddmd::Index;
using mddmd::RMatrix;
using mddmd::RVector;

inline RMatrix random_real(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  RMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline CVector random_stable_diagonal(std::mt19937_64& rng, Index n) {
  std::uniform_real_distribution<double> re(-1.0, -0.05);
  std::uniform_real_distribution<double> im(-2.0, 2.0);
  CVector v(n);
  for (Index i = 0; i < n; ++i) v(i) = Complex(re(rng), im(rng));
  return v;
}

inline double rel_err(const CMatrix& a, const CMatrix& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

}  // namespace testutil

#pragma once

#include "oodkit/types.hpp"

namespace oodkit::linalg {

inline constexpr double kShrinkage = 1e-6;

/// (Sigma + eps * (tr(Sigma) / d) * I)^-1 via Cholesky, symmetrized. A zero
/// trace falls back to an absolute ridge of eps so the inverse always exists.
Matrix regularized_inverse(const Matrix& cov, double eps = kShrinkage);

/// The ridge actually added to the diagonal by regularized_inverse.
double shrinkage_ridge(const Matrix& cov, double eps = kShrinkage);

/// (1/N) sum (x_i - mean)(x_i - mean)^T over the given rows.
Matrix covariance(const RowMatrix& x, const Vector& mean);

struct EigenPairs {
  Vector values;   // non-increasing
  Matrix vectors;  // columns; first nonzero component of each is positive
};

/// Top-k eigenpairs of a symmetric matrix.
EigenPairs top_eigenpairs(const Matrix& sym, std::size_t k);

struct SingularTriplet {
  double sigma = 0.0;
  Vector u;  // N
  Vector v;  // d
  int iterations = 0;
  bool converged = false;
};

/// Dominant singular triplet by power iteration on Z^T Z.
SingularTriplet top_singular_triplet(const RowMatrix& z, int max_iterations = 100,
                                     double tolerance = 1e-10);

}  // namespace oodkit::linalg

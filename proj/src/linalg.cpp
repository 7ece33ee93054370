#include "oodkit/linalg.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace oodkit::linalg {

double shrinkage_ridge(const Matrix& cov, double eps) {
  const double d = static_cast<double>(cov.rows());
  const double ridge = eps * cov.trace() / d;
  return ridge > 0.0 ? ridge : eps;
}

Matrix regularized_inverse(const Matrix& cov, double eps) {
  if (!cov.allFinite()) throw Error(ErrorCode::kNonFinite, "non-finite covariance");
  const auto d = cov.rows();
  Matrix reg = cov;
  reg.diagonal().array() += shrinkage_ridge(cov, eps);
  Eigen::LLT<Matrix> llt(reg);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kDegenerate, "regularized covariance is not positive definite");
  }
  Matrix inv = llt.solve(Matrix::Identity(d, d));
  Matrix sym = 0.5 * (inv + inv.transpose());
  if (!sym.allFinite()) throw Error(ErrorCode::kNonFinite, "non-finite covariance inverse");
  return sym;
}

Matrix covariance(const RowMatrix& x, const Vector& mean) {
  const auto d = x.cols();
  Matrix cov = Matrix::Zero(d, d);
  if (x.rows() == 0) return cov;
  RowMatrix centered = x.rowwise() - mean.transpose();
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  cov /= static_cast<double>(x.rows());
  return cov;
}

namespace {

void fix_sign(Eigen::Ref<Vector> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

}  // namespace

EigenPairs top_eigenpairs(const Matrix& sym, std::size_t k) {
  const auto d = static_cast<std::size_t>(sym.rows());
  if (k > d) throw Error(ErrorCode::kInvalidArgument, "requested more eigenpairs than dimensions");
  EigenPairs out;
  out.values.resize(static_cast<Eigen::Index>(k));
  out.vectors.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
  if (k == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::kNotConverged, "eigendecomposition failed");
  }
  // Eigen returns ascending order.
  for (std::size_t j = 0; j < k; ++j) {
    const auto src = static_cast<Eigen::Index>(d - 1 - j);
    out.values(static_cast<Eigen::Index>(j)) = solver.eigenvalues()(src);
    out.vectors.col(static_cast<Eigen::Index>(j)) = solver.eigenvectors().col(src);
    fix_sign(out.vectors.col(static_cast<Eigen::Index>(j)));
  }
  return out;
}

SingularTriplet top_singular_triplet(const RowMatrix& z, int max_iterations, double tolerance) {
  SingularTriplet out;
  const auto n = z.rows();
  const auto d = z.cols();
  out.u = Vector::Zero(n);
  out.v = Vector::Zero(d);
  if (n == 0 || d == 0) return out;

  // Start from the largest-norm row; its component along v1 is sigma1 * u1[r].
  Eigen::Index start = 0;
  z.rowwise().squaredNorm().maxCoeff(&start);
  Vector v = z.row(start).transpose();
  double norm = v.norm();
  if (norm == 0.0) {
    out.converged = true;
    return out;
  }
  v /= norm;

  for (int it = 0; it < max_iterations; ++it) {
    Vector next = z.transpose() * (z * v);
    norm = next.norm();
    if (norm == 0.0) break;
    next /= norm;
    const double delta = (next - v).norm();
    v = std::move(next);
    out.iterations = it + 1;
    if (delta < tolerance) {
      out.converged = true;
      break;
    }
  }
  Vector zv = z * v;
  out.sigma = zv.norm();
  out.v = v;
  if (out.sigma > 0.0) out.u = zv / out.sigma;
  return out;
}

}  // namespace oodkit::linalg

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "cupfm/errors.hpp"

namespace cupfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Largest-r eigenpairs of a symmetric matrix, eigenvalues descending.
// Sign convention: within each column the entry of largest absolute value is
// positive, ties resolved toward the lowest index.  The convention removes
// the sign indeterminacy of eigenvectors so repeated runs are bit-identical.
struct EigenPairs {
  Vector values;   // r, descending
  Matrix vectors;  // T x r, column j pairs with values[j]
};

namespace detail {

// Condition-number cutoff for treating a Gram matrix as rank deficient.
inline constexpr double kRankCondCutoff = 1e12;

inline void apply_sign_convention(Matrix& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index pivot = 0;
    double best = std::abs(vectors(0, j));
    for (Eigen::Index i = 1; i < vectors.rows(); ++i) {
      const double a = std::abs(vectors(i, j));
      if (a > best) {
        best = a;
        pivot = i;
      }
    }
    if (vectors(pivot, j) < 0.0) vectors.col(j) = -vectors.col(j);
  }
}

}  // namespace detail

inline EigenPairs sym_eig_top_r(const Matrix& S, int r) {
  const Eigen::Index T = S.rows();
  if (S.cols() != T) fail(ErrorCode::NotSymmetric, "matrix is not square");
  const double scale = S.norm();
  if ((S - S.transpose()).norm() > 1e-8 * std::max(scale, 1e-300))
    fail(ErrorCode::NotSymmetric, "matrix is not symmetric within 1e-8 relative");
  if (r < 1 || r > T)
    fail(ErrorCode::RankRequestTooLarge,
         "requested " + std::to_string(r) + " eigenpairs from a " +
             std::to_string(T) + "x" + std::to_string(T) + " matrix");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (S + S.transpose()));
  if (solver.info() != Eigen::Success)
    fail(ErrorCode::NoConvergence, "eigen iteration did not converge");

  // Eigen returns ascending order; take the top r and flip to descending.
  EigenPairs out;
  out.values.resize(r);
  out.vectors.resize(T, r);
  for (int j = 0; j < r; ++j) {
    out.values[j] = solver.eigenvalues()[T - 1 - j];
    out.vectors.col(j) = solver.eigenvectors().col(T - 1 - j);
  }
  detail::apply_sign_convention(out.vectors);
  return out;
}

// M_F z = z - F (F'F)^{-1} F' z, the residual of z on the column span of F.
inline Matrix projection_residual(const Matrix& F, const Matrix& z) {
  if (F.rows() != z.rows())
    fail(ErrorCode::DimensionMismatch, "basis and target row counts differ");
  const Matrix gram = F.transpose() * F;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (!(emin > 0.0) || emax / emin > detail::kRankCondCutoff)
    fail(ErrorCode::RankDeficientBasis, "projection basis is rank deficient");
  return z - F * gram.llt().solve(F.transpose() * z);
}

inline Matrix solve_spd(const Matrix& A, const Matrix& B) {
  if (A.rows() != A.cols())
    fail(ErrorCode::NotPositiveDefinite, "matrix is not square");
  if (A.rows() != B.rows())
    fail(ErrorCode::DimensionMismatch, "solve dimensions do not match");
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::NotPositiveDefinite, "Cholesky factorization failed");
  return llt.solve(B);
}

}  // namespace cupfm

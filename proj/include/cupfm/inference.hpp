#pragma once

#include <cmath>
#include <string>

#include "cupfm/errors.hpp"
#include "cupfm/estimators.hpp"
#include "cupfm/linalg.hpp"

namespace cupfm {

// Sample-analog asymptotic variance for the sqrt(n)T-consistent estimators:
//   sigma_hat = d_z^{-1} middle d_z^{-1}
//   d_z       = (1/(n S^2)) sum_i Z_i' Z_i
//   middle    = (1/n) sum_i omega_u_dot_b_i (1/S^2) Z_i' Z_i
// with S the effective span (T-1).  se_j = sqrt(sigma_hat_jj / (n S^2)).
struct VarianceEstimate {
  Matrix sigma_hat;
  Matrix d_z;
  Matrix middle;
  Vector se;
};

inline VarianceEstimate variance_est(const BiasComponents& components,
                                     const Vector& omega_u_dot_b) {
  const int n = static_cast<int>(components.Z.size());
  if (n < 1) fail(ErrorCode::InvalidArgument, "no units in components");
  if (omega_u_dot_b.size() != n)
    fail(ErrorCode::DimensionMismatch,
         "need one conditional variance per unit");
  const int T = static_cast<int>(components.Z[0].rows());
  const int k = static_cast<int>(components.Z[0].cols());
  const double S = static_cast<double>(T - 1);

  Matrix middle = Matrix::Zero(k, k);
  for (int i = 0; i < n; ++i)
    middle.noalias() += omega_u_dot_b[i] *
                        (components.Z[i].transpose() * components.Z[i]) /
                        (S * S);
  middle /= static_cast<double>(n);

  Eigen::LLT<Matrix> llt(components.d_z);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::SingularDZ, "D_Z is not positive definite");
  const Matrix half = llt.solve(middle);
  Matrix sigma = llt.solve(half.transpose()).transpose();
  sigma = 0.5 * (sigma + sigma.transpose());

  VarianceEstimate out;
  out.sigma_hat = sigma;
  out.d_z = components.d_z;
  out.middle = middle;
  out.se.resize(k);
  const double scale = static_cast<double>(n) * S * S;
  for (int j = 0; j < k; ++j)
    out.se[j] = std::sqrt(std::max(sigma(j, j), 0.0) / scale);
  return out;
}

inline Vector t_stat(const Vector& beta_hat, const Vector& beta_null,
                     const Vector& se) {
  if (beta_hat.size() != beta_null.size() || beta_hat.size() != se.size())
    fail(ErrorCode::DimensionMismatch, "t statistic inputs differ in length");
  for (Eigen::Index j = 0; j < se.size(); ++j)
    if (!(se[j] > 0.0))
      fail(ErrorCode::ZeroStandardError,
           "standard error " + std::to_string(j + 1) + " is not positive");
  return ((beta_hat - beta_null).array() / se.array()).matrix();
}

// Wald statistic for R beta = r0, referenced against chi^2(q).  Uses the same
// n S^2 scaling as the standard errors, so a single restriction reproduces
// the squared t statistic exactly.
inline double wald(const Vector& beta_hat, const Matrix& R, const Vector& r0,
                   const Matrix& sigma_hat, int n, int T) {
  const Eigen::Index q = R.rows();
  if (R.cols() != beta_hat.size() || r0.size() != q)
    fail(ErrorCode::DimensionMismatch, "restriction dimensions do not match");
  Eigen::FullPivLU<Matrix> lu(R);
  if (lu.rank() < q)
    fail(ErrorCode::SingularRestriction, "restriction matrix is rank deficient");
  const Matrix M = R * sigma_hat * R.transpose();
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::SingularRestriction,
         "restricted variance is not positive definite");
  const Vector d = R * beta_hat - r0;
  const double S = static_cast<double>(T - 1);
  return static_cast<double>(n) * S * S * d.dot(llt.solve(d));
}

}  // namespace cupfm

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cupfm/errors.hpp"
#include "cupfm/linalg.hpp"

namespace cupfm {

enum class KernelKind { Bartlett, Parzen, QuadraticSpectral };

// Kernel window and bandwidth for long-run covariance estimation.  The
// default (Bartlett, K = 5) matches the Monte Carlo configuration; the
// bandwidth can also be tied to the cross-section size via bandwidth_rule.
struct KernelSpec {
  KernelKind kind = KernelKind::Bartlett;
  double bandwidth = 5.0;
};

inline double kernel_weight(KernelKind kind, double x) {
  const double a = std::abs(x);
  switch (kind) {
    case KernelKind::Bartlett:
      return a <= 1.0 ? 1.0 - a : 0.0;
    case KernelKind::Parzen:
      if (a <= 0.5) return 1.0 - 6.0 * a * a + 6.0 * a * a * a;
      if (a <= 1.0) {
        const double b = 1.0 - a;
        return 2.0 * b * b * b;
      }
      return 0.0;
    case KernelKind::QuadraticSpectral: {
      if (a < 1e-12) return 1.0;
      const double z = 6.0 * M_PI * a / 5.0;
      return 25.0 / (12.0 * M_PI * M_PI * a * a) * (std::sin(z) / z - std::cos(z));
    }
  }
  return 0.0;
}

// Bandwidth rule K = floor(n^b) for asymptotics-faithful runs.
inline double bandwidth_rule(int n, double exponent) {
  if (n < 1 || !(exponent > 0.0))
    fail(ErrorCode::InvalidArgument, "bandwidth rule needs n >= 1 and b > 0");
  return std::max(1.0, std::floor(std::pow(static_cast<double>(n), exponent)));
}

// Two-sided and one-sided long-run covariance of a stacked innovation vector
// w_t = (u_t, eps_t', eta_t')'.  Blocks are ordered u (u_dim rows), eps
// (eps_dim rows), eta (eta_dim rows).
struct LongRunCov {
  Matrix omega;   // two-sided, symmetric
  Matrix delta;   // one-sided (lags >= 0)
  Matrix gamma0;  // lag-0 autocovariance
  int u_dim = 1;
  int eps_dim = 0;
  int eta_dim = 0;
};

// Sample autocovariance Gamma(j) = (1/S) sum_{t=1}^{S-j} w_{t+j} w_t'.
// The divisor is the full sample size S, not S - j.
inline Matrix autocov(const Matrix& w, int j) {
  const Eigen::Index S = w.rows();
  if (j < 0 || j >= S)
    fail(ErrorCode::LagOutOfRange,
         "lag " + std::to_string(j) + " outside [0," + std::to_string(S - 1) + "]");
  const Eigen::Index m = w.cols();
  Matrix gamma = Matrix::Zero(m, m);
  for (Eigen::Index t = 0; t + j < S; ++t)
    gamma.noalias() += w.row(t + j).transpose() * w.row(t);
  return gamma / static_cast<double>(S);
}

inline LongRunCov lr_cov(const Matrix& w, const KernelSpec& kernel,
                         int eps_dim = 0, int eta_dim = 0) {
  const Eigen::Index S = w.rows();
  const Eigen::Index m = w.cols();
  if (S < 2) fail(ErrorCode::TooShort, "need at least 2 observations");
  if (eps_dim < 0 || eta_dim < 0 || eps_dim + eta_dim >= m)
    fail(ErrorCode::DimensionMismatch, "block dimensions exceed series width");
  if (!(kernel.bandwidth > 0.0) || !std::isfinite(kernel.bandwidth))
    fail(ErrorCode::EmptyKernelSupport, "kernel bandwidth must be positive");

  LongRunCov out;
  out.u_dim = static_cast<int>(m) - eps_dim - eta_dim;
  out.eps_dim = eps_dim;
  out.eta_dim = eta_dim;
  out.gamma0 = autocov(w, 0);
  out.delta = out.gamma0;  // weight at lag 0 is omega(0) = 1
  for (Eigen::Index j = 1; j < S; ++j) {
    const double weight =
        kernel_weight(kernel.kind, static_cast<double>(j) / kernel.bandwidth);
    if (weight == 0.0) {
      // Bartlett/Parzen vanish beyond the bandwidth; QS never does.
      if (kernel.kind != KernelKind::QuadraticSpectral) break;
      continue;
    }
    out.delta.noalias() += weight * autocov(w, static_cast<int>(j));
  }
  // Omega = Delta + Delta' - Gamma(0) holds exactly by construction.
  out.omega = out.delta + out.delta.transpose() - out.gamma0;
  return out;
}

// Per-unit innovation rows for the "bar" long-run covariances:
// wbar_t = (u_t, dxbar_t', dF_t')' with dxbar_it = dx_it - (1/n) sum_k a_ik dx_kt.
// The level residual u is aligned by dropping its first period.
inline Matrix build_wbar(const Vector& u_full, const Matrix& dx_i,
                         const std::vector<Matrix>& dx_all, const Matrix& dF,
                         const Vector& a_row) {
  const Eigen::Index S = dx_i.rows();
  const Eigen::Index k = dx_i.cols();
  const Eigen::Index r = dF.cols();
  const std::size_t n = dx_all.size();
  if (u_full.size() != S + 1)
    fail(ErrorCode::DimensionMismatch, "residual length must be one more than dx rows");
  if (dF.rows() != S)
    fail(ErrorCode::DimensionMismatch, "factor differences misaligned with dx");
  if (a_row.size() != static_cast<Eigen::Index>(n))
    fail(ErrorCode::DimensionMismatch, "weight row length must equal unit count");
  Matrix dxbar = dx_i;
  for (std::size_t j = 0; j < n; ++j) {
    if (dx_all[j].rows() != S || dx_all[j].cols() != k)
      fail(ErrorCode::DimensionMismatch, "dx matrices must share shape");
    dxbar.noalias() -= (a_row[static_cast<Eigen::Index>(j)] / static_cast<double>(n)) * dx_all[j];
  }
  Matrix wbar(S, 1 + k + r);
  wbar.col(0) = u_full.tail(S);
  wbar.middleCols(1, k) = dxbar;
  wbar.rightCols(r) = dF;
  return wbar;
}

// Endogeneity and serial-correlation corrections extracted from a partitioned
// long-run covariance:
//   endo_coeff      = Omega_b^{-1} Omega_bu          (= (Omega_ub Omega_b^{-1})')
//   delta_*_u_plus  = Delta_bu - Delta_b Omega_b^{-1} Omega_bu, split eps/eta
//   omega_u_dot_b   = Omega_u - Omega_ub Omega_b^{-1} Omega_bu
struct PlusTransform {
  Vector delta_eps_u_plus;  // eps_dim
  Vector delta_eta_u_plus;  // eta_dim
  Vector endo_coeff;        // eps_dim + eta_dim
  double omega_u_dot_b = 0.0;
};

inline PlusTransform plus_transform(const LongRunCov& lrc) {
  if (lrc.u_dim != 1)
    fail(ErrorCode::DimensionMismatch, "plus transform expects a scalar u block");
  const int b = lrc.eps_dim + lrc.eta_dim;
  if (b < 1)
    fail(ErrorCode::DimensionMismatch, "plus transform needs a nonempty b block");
  const Matrix omega_b = lrc.omega.bottomRightCorner(b, b);
  Eigen::SelfAdjointEigenSolver<Matrix> es(omega_b);
  const double floor = 1e-10 * omega_b.trace();
  if (!(es.eigenvalues().minCoeff() > floor))
    fail(ErrorCode::SingularOmegaB,
         "Omega_b numerically singular: regressor/factor innovations look "
         "cointegrated");
  const Vector omega_bu = lrc.omega.block(1, 0, b, 1);
  const Vector endo = omega_b.llt().solve(omega_bu);

  PlusTransform out;
  out.endo_coeff = endo;
  const Vector delta_bu = lrc.delta.block(1, 0, b, 1);
  const Matrix delta_b = lrc.delta.bottomRightCorner(b, b);
  const Vector delta_bu_plus = delta_bu - delta_b * endo;
  out.delta_eps_u_plus = delta_bu_plus.head(lrc.eps_dim);
  out.delta_eta_u_plus = delta_bu_plus.tail(lrc.eta_dim);
  out.omega_u_dot_b = lrc.omega(0, 0) - omega_bu.dot(endo);
  return out;
}

}  // namespace cupfm

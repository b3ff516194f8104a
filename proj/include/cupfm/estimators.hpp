#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cupfm/errors.hpp"
#include "cupfm/linalg.hpp"
#include "cupfm/lrcov.hpp"
#include "cupfm/panel.hpp"

namespace cupfm {

enum class EstimatorKind { PooledOLS, LSDV, LSKnownF, Cup, CupBC, CupFM, TwoStepFM };

inline const char* estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::PooledOLS: return "pooled";
    case EstimatorKind::LSDV: return "lsdv";
    case EstimatorKind::LSKnownF: return "lsf";
    case EstimatorKind::Cup: return "cup";
    case EstimatorKind::CupBC: return "cupbc";
    case EstimatorKind::CupFM: return "cupfm";
    case EstimatorKind::TwoStepFM: return "2sfm";
  }
  return "?";
}

inline std::optional<EstimatorKind> estimator_from_name(const std::string& name) {
  if (name == "pooled") return EstimatorKind::PooledOLS;
  if (name == "lsdv") return EstimatorKind::LSDV;
  if (name == "lsf") return EstimatorKind::LSKnownF;
  if (name == "cup") return EstimatorKind::Cup;
  if (name == "cupbc") return EstimatorKind::CupBC;
  if (name == "cupfm") return EstimatorKind::CupFM;
  if (name == "2sfm") return EstimatorKind::TwoStepFM;
  return std::nullopt;
}

// Estimated common trends and loadings under the normalization
// F_hat' F_hat / T^2 = I_r.  eigenvalues holds the top-r eigenvalues of
// (1/nT^2) W W' in decreasing order.
struct FactorEstimate {
  Matrix F_hat;       // T x r
  Matrix Lambda_hat;  // n x r
  Vector eigenvalues; // r, descending
};

enum class InitMethod { PooledOLS, Lsdv, Zero };

struct CupConfig {
  int r = 1;
  int max_iter = 20;
  double tol = 1e-8;
  InitMethod init = InitMethod::Lsdv;
  std::optional<Vector> beta_init;  // explicit start, overrides init
  KernelSpec kernel{};
  DetrendSpec detrend{};
};

struct EstimationResult {
  Vector beta_hat;
  EstimatorKind estimator = EstimatorKind::PooledOLS;
  std::optional<FactorEstimate> factors;
  std::optional<Vector> phi_hat;  // estimated bias (CupBC, LS bias correction)
  std::optional<Vector> se;
  std::optional<Vector> t_stats;  // against zero nulls
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

// Ingredients of the bias estimate for the Cup estimator.  The extra
// a_ik weights relative to the known-factor case come from having to
// estimate the trends.
struct BiasComponents {
  std::vector<Vector> theta;      // n vectors of length k
  std::vector<Matrix> Z;          // n matrices T x k
  Matrix a;                       // n x n, a_ik = lambda_i' (L'L/n)^{-1} lambda_k
  std::vector<Matrix> xbar;       // n matrices T x k
  std::vector<Matrix> delta_bar;  // n matrices r x k
  Matrix d_z;                     // k x k, (1/(n S^2)) sum Z_i' Z_i
  Vector omega_u_dot_b;           // n conditional long-run variances
};

namespace detail {

// All sums that mix level series with first differences run over the T-1
// usable periods; the matching scale constant replaces T in the textbook
// formulas.  Used consistently in the bias, FM, and variance scalings so the
// two algebraic routes to the bias-corrected estimator agree exactly.
inline int effective_span(int T) { return T - 1; }

inline void check_cup_config(const CupConfig& config) {
  if (config.r < 1) fail(ErrorCode::InvalidArgument, "factor count must be >= 1");
  if (config.max_iter < 1) fail(ErrorCode::InvalidArgument, "max_iter must be >= 1");
  if (!(config.tol > 0.0)) fail(ErrorCode::InvalidArgument, "tol must be > 0");
}

inline Vector solve_design(const Matrix& A, const Vector& b) {
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success || !A.allFinite())
    fail(ErrorCode::SingularDesign, "design Gram matrix is not positive definite");
  return llt.solve(b);
}

// y_i - x_i beta for all units, stacked T x n.
inline Matrix residual_matrix(const PanelDataset& panel, const Vector& beta) {
  Matrix W = panel.y;
  for (int i = 0; i < panel.n; ++i) W.col(i).noalias() -= panel.x[i] * beta;
  return W;
}

inline Matrix demean_columns(const Matrix& z) {
  return z.rowwise() - z.colwise().mean();
}

struct UnitGrams {
  std::vector<Matrix> xx;  // k x k
  std::vector<Vector> xy;  // k
};

inline UnitGrams unit_grams(const PanelDataset& panel) {
  UnitGrams grams;
  grams.xx.reserve(panel.n);
  grams.xy.reserve(panel.n);
  for (int i = 0; i < panel.n; ++i) {
    grams.xx.push_back(panel.x[i].transpose() * panel.x[i]);
    grams.xy.push_back(panel.x[i].transpose() * panel.y.col(i));
  }
  return grams;
}

}  // namespace detail

inline EstimationResult pooled_ols(const PanelDataset& panel) {
  Matrix A = Matrix::Zero(panel.k, panel.k);
  Vector b = Vector::Zero(panel.k);
  for (int i = 0; i < panel.n; ++i) {
    A.noalias() += panel.x[i].transpose() * panel.x[i];
    b.noalias() += panel.x[i].transpose() * panel.y.col(i);
  }
  EstimationResult res;
  res.estimator = EstimatorKind::PooledOLS;
  res.beta_hat = detail::solve_design(A, b);
  res.iterations = 1;
  res.converged = true;
  return res;
}

// Within-group estimator: pooled OLS on per-unit demeaned data, with the
// conventional homoskedastic standard errors (dof = nT - n - k).
inline EstimationResult lsdv(const PanelDataset& panel) {
  Matrix A = Matrix::Zero(panel.k, panel.k);
  Vector b = Vector::Zero(panel.k);
  std::vector<Matrix> xw(panel.n);
  Matrix yw = detail::demean_columns(panel.y);
  for (int i = 0; i < panel.n; ++i) {
    xw[i] = detail::demean_columns(panel.x[i]);
    A.noalias() += xw[i].transpose() * xw[i];
    b.noalias() += xw[i].transpose() * yw.col(i);
  }
  EstimationResult res;
  res.estimator = EstimatorKind::LSDV;
  res.beta_hat = detail::solve_design(A, b);
  res.iterations = 1;
  res.converged = true;

  double rss = 0.0;
  for (int i = 0; i < panel.n; ++i)
    rss += (yw.col(i) - xw[i] * res.beta_hat).squaredNorm();
  const double dof = static_cast<double>(panel.n) * panel.T - panel.n - panel.k;
  if (dof > 0) {
    const double sigma2 = rss / dof;
    const Matrix Ainv = A.llt().solve(Matrix::Identity(panel.k, panel.k));
    Vector se(panel.k);
    for (int j = 0; j < panel.k; ++j) se[j] = std::sqrt(sigma2 * Ainv(j, j));
    res.se = se;
    if ((se.array() > 0.0).all()) {
      res.t_stats = (res.beta_hat.array() / se.array()).matrix();
    }
  }
  return res;
}

// Least squares given an observed factor matrix F (loadings concentrated out).
inline EstimationResult ls_given_f(const PanelDataset& panel, const Matrix& F) {
  if (F.rows() != panel.T)
    fail(ErrorCode::DimensionMismatch, "factor matrix rows must equal T");
  Matrix A = Matrix::Zero(panel.k, panel.k);
  Vector b = Vector::Zero(panel.k);
  for (int i = 0; i < panel.n; ++i) {
    const Matrix mx = projection_residual(F, panel.x[i]);
    A.noalias() += mx.transpose() * mx;
    b.noalias() += mx.transpose() * projection_residual(F, panel.y.col(i));
  }
  EstimationResult res;
  res.estimator = EstimatorKind::LSKnownF;
  res.beta_hat = detail::solve_design(A, b);
  res.iterations = 1;
  res.converged = true;
  return res;
}

// Principal-components step: top-r eigenvectors of (1/nT^2) W W', scaled by T.
// When n < T the r eigenpairs are recovered from the n x n companion problem,
// which has the same nonzero spectrum.
inline FactorEstimate factor_extract(const Matrix& W, int r) {
  const Eigen::Index T = W.rows();
  const Eigen::Index n = W.cols();
  if (r < 1 || r > std::min(T, n))
    fail(ErrorCode::RankRequestTooLarge,
         "factor count " + std::to_string(r) + " exceeds min(n,T)");
  const double scale = static_cast<double>(n) * static_cast<double>(T) *
                       static_cast<double>(T);
  FactorEstimate fac;
  if (T <= n) {
    const EigenPairs eig = sym_eig_top_r((W * W.transpose()) / scale, r);
    fac.F_hat = static_cast<double>(T) * eig.vectors;
    fac.eigenvalues = eig.values;
  } else {
    const EigenPairs eig = sym_eig_top_r((W.transpose() * W) / scale, r);
    bool ok = true;
    Matrix F(T, r);
    for (int j = 0; j < r; ++j) {
      Vector f = W * eig.vectors.col(j);
      const double norm = f.norm();
      if (!(norm > 0.0) || !(eig.values[j] > 0.0)) {
        ok = false;
        break;
      }
      F.col(j) = f / norm;
    }
    if (ok) {
      detail::apply_sign_convention(F);
      fac.F_hat = static_cast<double>(T) * F;
      fac.eigenvalues = eig.values;
    } else {
      // Rank-deficient residual matrix: fall back to the direct problem.
      const EigenPairs full = sym_eig_top_r((W * W.transpose()) / scale, r);
      fac.F_hat = static_cast<double>(T) * full.vectors;
      fac.eigenvalues = full.values;
    }
  }
  fac.Lambda_hat = W.transpose() * fac.F_hat /
                   (static_cast<double>(T) * static_cast<double>(T));
  return fac;
}

namespace detail {

inline Vector initial_beta(const PanelDataset& panel, const CupConfig& config) {
  if (config.beta_init) {
    if (config.beta_init->size() != panel.k)
      fail(ErrorCode::DimensionMismatch, "beta_init length must equal k");
    return *config.beta_init;
  }
  switch (config.init) {
    case InitMethod::PooledOLS: return pooled_ols(panel).beta_hat;
    case InitMethod::Lsdv: return lsdv(panel).beta_hat;
    case InitMethod::Zero: return Vector::Zero(panel.k);
  }
  return Vector::Zero(panel.k);
}

// S_nT(beta, F) = (1/nT^2) sum_i (y_i - x_i beta)' M_F (y_i - x_i beta),
// evaluated directly on projected residuals to avoid cancellation.
inline double objective_value(const PanelDataset& panel, const Vector& beta,
                              const Matrix& F) {
  const Eigen::LLT<Matrix> gram(Matrix(F.transpose() * F));
  double total = 0.0;
  for (int i = 0; i < panel.n; ++i) {
    Vector w = panel.y.col(i) - panel.x[i] * beta;
    w.noalias() -= F * gram.solve(F.transpose() * w);
    total += w.squaredNorm();
  }
  return total / (static_cast<double>(panel.n) * panel.T * panel.T);
}

// One projected least-squares update of beta given F (the "ls" step).
inline Vector beta_given_f(const PanelDataset& panel, const UnitGrams& grams,
                           const Matrix& F) {
  const Eigen::LLT<Matrix> gram(Matrix(F.transpose() * F));
  Matrix A = Matrix::Zero(panel.k, panel.k);
  Vector b = Vector::Zero(panel.k);
  for (int i = 0; i < panel.n; ++i) {
    const Matrix Fx = F.transpose() * panel.x[i];           // r x k
    const Vector Fy = F.transpose() * panel.y.col(i);       // r
    A.noalias() += grams.xx[i] - Fx.transpose() * gram.solve(Fx);
    b.noalias() += grams.xy[i] - Fx.transpose() * gram.solve(Fy);
  }
  return solve_design(A, b);
}

}  // namespace detail

// Continuously-updated estimator: alternate the projected least-squares step
// for beta with the principal-components step for F until the relative change
// in beta falls below tol or max_iter is hit.  Non-convergence is reported
// through the converged flag, not an error.
inline EstimationResult cup(const PanelDataset& panel, const CupConfig& config) {
  detail::check_cup_config(config);
  const PanelDataset data = project_deterministics(panel, config.detrend);
  const detail::UnitGrams grams = detail::unit_grams(data);

  EstimationResult res;
  res.estimator = EstimatorKind::Cup;
  Vector beta = detail::initial_beta(data, config);
  for (int s = 0; s < config.max_iter; ++s) {
    const FactorEstimate fac =
        factor_extract(detail::residual_matrix(data, beta), config.r);
    const Vector beta_new = detail::beta_given_f(data, grams, fac.F_hat);
    res.objective_trace.push_back(
        detail::objective_value(data, beta_new, fac.F_hat));
    const double rel =
        (beta_new - beta).norm() / std::max(1.0, beta.norm());
    beta = beta_new;
    res.iterations = s + 1;
    if (rel <= config.tol) {
      res.converged = true;
      break;
    }
  }
  res.beta_hat = beta;
  res.factors = factor_extract(detail::residual_matrix(data, beta), config.r);
  return res;
}

namespace detail {

// Per-unit pieces entering the bias estimate and the FM corrections, built
// from the current iterate (beta, F, Lambda).  All long-run covariances are
// the "bar" versions generated from wbar_it = (u_it, dxbar_it', dF_t')'.
struct BarredUnit {
  Vector u;          // T, factor-model residual
  Matrix wbar;       // S x (1+k+r); cols 1..k are dxbar, last r are dF
  Matrix xbar;       // T x k
  Matrix Z;          // T x k, M_F xbar
  Matrix delta_bar;  // r x k, (F'F)^{-1} F' xbar
  PlusTransform plus;
};

struct BarredState {
  Matrix a;   // n x n
  Matrix dF;  // S x r
  std::vector<BarredUnit> units;
  Matrix d_z;  // k x k
};

inline Matrix loading_weights(const Matrix& Lambda) {
  const int n = static_cast<int>(Lambda.rows());
  const Matrix gram = Lambda.transpose() * Lambda / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  if (!(es.eigenvalues().minCoeff() >
        1e-12 * std::max(gram.trace(), 1e-300)))
    fail(ErrorCode::SingularLoadingGram,
         "loading Gram matrix is numerically singular");
  return Lambda * gram.llt().solve(Lambda.transpose());
}

inline BarredState compute_barred(const PanelDataset& panel,
                                  const FactorEstimate& fac, const Vector& beta,
                                  const KernelSpec& kernel) {
  const int n = panel.n;
  const int T = panel.T;
  const int k = panel.k;
  const int r = static_cast<int>(fac.F_hat.cols());
  const int S = effective_span(T);

  BarredState state;
  state.a = loading_weights(fac.Lambda_hat);
  state.dF = fac.F_hat.bottomRows(S) - fac.F_hat.topRows(S);

  std::vector<Matrix> dx(n);
  for (int i = 0; i < n; ++i)
    dx[i] = panel.x[i].bottomRows(S) - panel.x[i].topRows(S);

  const Eigen::LLT<Matrix> fgram(Matrix(fac.F_hat.transpose() * fac.F_hat));
  state.units.resize(n);
  Matrix zz_sum = Matrix::Zero(k, k);
  for (int i = 0; i < n; ++i) {
    BarredUnit& unit = state.units[i];
    unit.u = panel.y.col(i) - panel.x[i] * beta -
             fac.F_hat * fac.Lambda_hat.row(i).transpose();
    unit.wbar = build_wbar(unit.u, dx[i], dx, state.dF,
                           state.a.row(i).transpose());
    unit.plus = plus_transform(lr_cov(unit.wbar, kernel, k, r));
    unit.xbar = panel.x[i];
    for (int j = 0; j < n; ++j)
      unit.xbar.noalias() -=
          (state.a(i, j) / static_cast<double>(n)) * panel.x[j];
    const Matrix fx = fgram.solve(fac.F_hat.transpose() * unit.xbar);  // r x k
    unit.delta_bar = fx;
    unit.Z = unit.xbar - fac.F_hat * fx;
    zz_sum.noalias() += unit.Z.transpose() * unit.Z;
  }
  state.d_z = zz_sum / (static_cast<double>(n) * S * S);
  return state;
}

// theta_i = (1/S) Z_i' [dxbar_i, dF] Omega_b^{-1} Omega_bu
//           + (Delta_eps_u_plus - delta_bar_i' Delta_eta_u_plus)
inline Vector theta_for_unit(const BarredUnit& unit, int S) {
  const Matrix dbar = unit.wbar.rightCols(unit.wbar.cols() - 1);
  const Vector serial = unit.Z.bottomRows(S).transpose() *
                        (dbar * unit.plus.endo_coeff) / static_cast<double>(S);
  const Vector plus_part = unit.plus.delta_eps_u_plus -
                           unit.delta_bar.transpose() * unit.plus.delta_eta_u_plus;
  return serial + plus_part;
}

inline Vector phi_from_state(const BarredState& state, int S) {
  const int n = static_cast<int>(state.units.size());
  const int k = static_cast<int>(state.d_z.rows());
  Vector theta_bar = Vector::Zero(k);
  for (int i = 0; i < n; ++i)
    theta_bar += theta_for_unit(state.units[i], S);
  theta_bar /= static_cast<double>(n);
  Eigen::LLT<Matrix> llt(state.d_z);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::SingularDZ, "D_Z is not positive definite");
  return llt.solve(theta_bar);
}

}  // namespace detail

// Bias ingredients for a converged Cup fit.  `panel` must be the same data
// the fit consumed (already projected if detrending was used).
inline BiasComponents bias_components(const PanelDataset& panel,
                                      const EstimationResult& result,
                                      const KernelSpec& kernel) {
  if (!result.factors)
    fail(ErrorCode::InvalidArgument, "result does not carry factor estimates");
  const int S = detail::effective_span(panel.T);
  detail::BarredState state =
      detail::compute_barred(panel, *result.factors, result.beta_hat, kernel);
  BiasComponents comp;
  comp.a = std::move(state.a);
  comp.d_z = std::move(state.d_z);
  comp.theta.reserve(panel.n);
  comp.omega_u_dot_b.resize(panel.n);
  for (int i = 0; i < panel.n; ++i) {
    detail::BarredUnit& unit = state.units[i];
    comp.theta.push_back(detail::theta_for_unit(unit, S));
    comp.omega_u_dot_b[i] = unit.plus.omega_u_dot_b;
    comp.Z.push_back(std::move(unit.Z));
    comp.xbar.push_back(std::move(unit.xbar));
    comp.delta_bar.push_back(std::move(unit.delta_bar));
  }
  return comp;
}

namespace detail {

// Plug-in asymptotic variance pieces shared by the Cup-family estimators.
struct VariancePieces {
  Vector se;
  Matrix sigma_hat;
};

inline VariancePieces variance_from_state(const BarredState& state, int S) {
  const int n = static_cast<int>(state.units.size());
  const int k = static_cast<int>(state.d_z.rows());
  Matrix middle = Matrix::Zero(k, k);
  for (const auto& unit : state.units)
    middle.noalias() += unit.plus.omega_u_dot_b *
                        (unit.Z.transpose() * unit.Z) /
                        (static_cast<double>(S) * S);
  middle /= static_cast<double>(n);
  Eigen::LLT<Matrix> llt(state.d_z);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::SingularDZ, "D_Z is not positive definite");
  const Matrix half = llt.solve(middle);
  Matrix sigma = llt.solve(half.transpose()).transpose();
  sigma = 0.5 * (sigma + sigma.transpose());
  VariancePieces out;
  out.sigma_hat = sigma;
  out.se.resize(k);
  const double scale = static_cast<double>(n) * S * S;
  for (int j = 0; j < k; ++j)
    out.se[j] = std::sqrt(std::max(sigma(j, j), 0.0) / scale);
  return out;
}

inline void attach_inference(EstimationResult& res, const VariancePieces& var) {
  res.se = var.se;
  if ((var.se.array() > 0.0).all())
    res.t_stats = (res.beta_hat.array() / var.se.array()).matrix();
}

}  // namespace detail

// Cup with a one-shot bias subtraction at convergence:
// beta_CupBC = beta_Cup - phi_hat / S.
inline EstimationResult cup_bc(const PanelDataset& panel, const CupConfig& config) {
  EstimationResult res = cup(panel, config);
  const PanelDataset data = project_deterministics(panel, config.detrend);
  const int S = detail::effective_span(data.T);
  const detail::BarredState state =
      detail::compute_barred(data, *res.factors, res.beta_hat, config.kernel);
  const Vector phi = detail::phi_from_state(state, S);
  res.estimator = EstimatorKind::CupBC;
  res.beta_hat -= phi / static_cast<double>(S);
  res.phi_hat = phi;
  detail::attach_inference(res, detail::variance_from_state(state, S));
  return res;
}

namespace detail {

inline EstimationResult cup_fm_impl(const PanelDataset& panel,
                                    const CupConfig& config,
                                    EstimatorKind kind) {
  check_cup_config(config);
  const PanelDataset data = project_deterministics(panel, config.detrend);
  const UnitGrams grams = unit_grams(data);
  const int S = effective_span(data.T);

  EstimationResult res;
  res.estimator = kind;
  Vector beta = initial_beta(data, config);
  FactorEstimate fac = factor_extract(residual_matrix(data, beta), config.r);

  for (int s = 0; s < config.max_iter; ++s) {
    const BarredState state = compute_barred(data, fac, beta, config.kernel);
    const Eigen::LLT<Matrix> fgram(
        Matrix(fac.F_hat.transpose() * fac.F_hat));
    Matrix A = Matrix::Zero(data.k, data.k);
    Vector b = Vector::Zero(data.k);
    for (int i = 0; i < data.n; ++i) {
      const Matrix Fx = fac.F_hat.transpose() * data.x[i];
      A.noalias() += grams.xx[i] - Fx.transpose() * fgram.solve(Fx);
      const Matrix mx = data.x[i] - fac.F_hat * fgram.solve(Fx);
      const BarredUnit& unit = state.units[i];
      const Matrix dbar = unit.wbar.rightCols(unit.wbar.cols() - 1);
      Vector y_plus = data.y.col(i);
      y_plus.tail(S).noalias() -= dbar * unit.plus.endo_coeff;
      const Vector corr = unit.plus.delta_eps_u_plus -
                          unit.delta_bar.transpose() * unit.plus.delta_eta_u_plus;
      b.noalias() += mx.transpose() * y_plus - static_cast<double>(S) * corr;
    }
    const Vector beta_new = solve_design(A, b);
    res.objective_trace.push_back(objective_value(data, beta_new, fac.F_hat));
    const double rel = (beta_new - beta).norm() / std::max(1.0, beta.norm());
    beta = beta_new;
    res.iterations = s + 1;
    fac = factor_extract(residual_matrix(data, beta), config.r);
    if (rel <= config.tol) {
      res.converged = true;
      break;
    }
  }
  res.beta_hat = beta;
  res.factors = fac;
  const BarredState final_state = compute_barred(data, fac, beta, config.kernel);
  attach_inference(res, variance_from_state(final_state, S));
  return res;
}

}  // namespace detail

// Fully-modified Cup: the endogeneity and serial-correlation corrections are
// rebuilt from the current iterate and applied inside every iteration.
inline EstimationResult cup_fm(const PanelDataset& panel, const CupConfig& config) {
  return detail::cup_fm_impl(panel, config, EstimatorKind::CupFM);
}

// Two-stage fully-modified estimator: the CupFM pipeline with exactly one
// iteration from the configured initial beta.
inline EstimationResult two_step_fm(const PanelDataset& panel,
                                    const CupConfig& config) {
  CupConfig one = config;
  one.max_iter = 1;
  return detail::cup_fm_impl(panel, one, EstimatorKind::TwoStepFM);
}

// Fully-modified least squares with observed factors; algebraically identical
// to subtracting the estimated bias from the LS estimator.  phi_hat carries
// the bias estimate so both routes can be compared.
inline EstimationResult ls_fm_known_f(const PanelDataset& panel, const Matrix& F0,
                                      const KernelSpec& kernel) {
  const EstimationResult base = ls_given_f(panel, F0);
  const int n = panel.n;
  const int T = panel.T;
  const int k = panel.k;
  const int r = static_cast<int>(F0.cols());
  const int S = detail::effective_span(T);

  const Eigen::LLT<Matrix> fgram(Matrix(F0.transpose() * F0));
  const Matrix dF = F0.bottomRows(S) - F0.topRows(S);

  Matrix A = Matrix::Zero(k, k);
  Vector b_fm = Vector::Zero(k);
  Vector theta_bar = Vector::Zero(k);
  for (int i = 0; i < n; ++i) {
    const Vector w = panel.y.col(i) - panel.x[i] * base.beta_hat;
    const Vector lambda = fgram.solve(F0.transpose() * w);
    const Vector u = w - F0 * lambda;
    const Matrix dx = panel.x[i].bottomRows(S) - panel.x[i].topRows(S);

    Matrix winnov(S, 1 + k + r);
    winnov.col(0) = u.tail(S);
    winnov.middleCols(1, k) = dx;
    winnov.rightCols(r) = dF;
    const PlusTransform plus = plus_transform(lr_cov(winnov, kernel, k, r));

    const Matrix delta_i = fgram.solve(F0.transpose() * panel.x[i]);  // r x k
    const Matrix mx = panel.x[i] - F0 * delta_i;
    A.noalias() += mx.transpose() * mx;

    const Matrix db = winnov.rightCols(k + r);
    const Vector corr = plus.delta_eps_u_plus -
                        delta_i.transpose() * plus.delta_eta_u_plus;
    theta_bar += mx.bottomRows(S).transpose() * (db * plus.endo_coeff) /
                     static_cast<double>(S) +
                 corr;

    Vector y_plus = panel.y.col(i);
    y_plus.tail(S).noalias() -= db * plus.endo_coeff;
    b_fm.noalias() += mx.transpose() * y_plus - static_cast<double>(S) * corr;
  }
  theta_bar /= static_cast<double>(n);
  const Matrix d = A / (static_cast<double>(n) * S * S);
  Eigen::LLT<Matrix> dllt(d);
  if (dllt.info() != Eigen::Success)
    fail(ErrorCode::SingularDZ, "projected design Gram is not positive definite");

  EstimationResult res;
  res.estimator = EstimatorKind::LSKnownF;
  res.beta_hat = detail::solve_design(A, b_fm);
  res.phi_hat = dllt.solve(theta_bar);
  res.iterations = 1;
  res.converged = true;
  return res;
}

}  // namespace cupfm

#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "cupfm/errors.hpp"
#include "cupfm/estimators.hpp"

namespace cupfm {

// Information-criterion scan over candidate factor counts:
//   IC(r) = log sigma2(r) + r * g_nT,   g_nT = log(a_nT)/a_nT,
//   a_nT = nT/(n+T),   sigma2(r) = (1/nT) sum_it uhat_it^2.
struct IcResult {
  int r_hat = 0;
  Vector ic_values;      // r_max entries, index j holds IC(j+1)
  Vector sigma2_values;  // r_max entries
};

struct IcOptions {
  CupConfig base;          // per-candidate fits copy this config (r replaced)
  bool full_refit = true;  // false: reuse one beta from r_max, re-extract only
};

inline double ic_penalty(int n, int T) {
  const double a = static_cast<double>(n) * T / (n + T);
  return std::log(a) / a;
}

inline IcResult select_r(const PanelDataset& panel,
                         const std::optional<Vector>& beta_hint, int r_max,
                         const IcOptions& options = {}) {
  const int bound = std::min(panel.n, panel.T) - 1;
  if (r_max < 1 || r_max > bound)
    fail(ErrorCode::RankRequestTooLarge,
         "r_max must lie in [1," + std::to_string(bound) + "]");

  const PanelDataset data = project_deterministics(panel, options.base.detrend);
  const double g = ic_penalty(data.n, data.T);
  const double nT = static_cast<double>(data.n) * data.T;

  auto sigma2_at = [&](const Vector& beta, const FactorEstimate& fac) {
    const Matrix W = detail::residual_matrix(data, beta);
    return (W - fac.F_hat * fac.Lambda_hat.transpose()).squaredNorm() / nT;
  };

  IcResult out;
  out.ic_values.resize(r_max);
  out.sigma2_values.resize(r_max);

  std::optional<Vector> fixed_beta;
  if (!options.full_refit) {
    CupConfig cfg = options.base;
    cfg.r = r_max;
    cfg.detrend.mode = DetrendMode::None;  // data already projected
    cfg.beta_init = beta_hint ? beta_hint : cfg.beta_init;
    fixed_beta = cup(data, cfg).beta_hat;
  }

  for (int r = 1; r <= r_max; ++r) {
    Vector beta;
    FactorEstimate fac;
    if (fixed_beta) {
      beta = *fixed_beta;
      fac = factor_extract(detail::residual_matrix(data, beta), r);
    } else {
      CupConfig cfg = options.base;
      cfg.r = r;
      cfg.detrend.mode = DetrendMode::None;
      cfg.beta_init = beta_hint ? beta_hint : cfg.beta_init;
      const EstimationResult fit = cup(data, cfg);
      beta = fit.beta_hat;
      fac = *fit.factors;
    }
    const double sigma2 = sigma2_at(beta, fac);
    out.sigma2_values[r - 1] = sigma2;
    out.ic_values[r - 1] = std::log(sigma2) + r * g;
  }

  out.r_hat = 1;
  for (int r = 2; r <= r_max; ++r)
    if (out.ic_values[r - 1] < out.ic_values[out.r_hat - 1]) out.r_hat = r;
  return out;
}

}  // namespace cupfm

#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cupfm/errors.hpp"
#include "cupfm/estimators.hpp"
#include "cupfm/inference.hpp"
#include "cupfm/panel.hpp"
#include "cupfm/rng.hpp"

namespace cupfm {

// Simulation design: a single I(1) common trend, I(1) regressor, and jointly
// normal innovations (u_it, eps_it, eta_t) with unit variances and
// correlations (sigma21, sigma31, sigma32).  Endogeneity is controlled by
// sigma21 (regressor) and sigma31 (trend); c scales the importance of the
// common trend.
struct DgpConfig {
  int n = 0;
  int T = 0;
  double beta0 = 2.0;
  double c = 5.0;
  double sigma21 = 0.0;
  double sigma31 = 0.0;
  double sigma32 = 0.4;
  double mu_lambda = 2.0;
  double mu_eta = 0.0;
  int r = 1;
  std::uint64_t seed = 0;
};

struct SimulatedPanel {
  PanelDataset panel;
  Matrix F0;       // T x 1
  Vector lambda0;  // n
  Matrix u;        // T x n
  Matrix eps;      // T x n
  Vector eta;      // T
};

namespace detail {

struct InnovationChol {
  // eta_t = mu_eta + z0; u = l_u0 z0 + l_u1 z1; eps = l_e0 z0 + l_e1 z1 + l_e2 z2.
  double l_u0, l_u1, l_e0, l_e1, l_e2;
};

inline InnovationChol innovation_chol(const DgpConfig& config) {
  Matrix cov(3, 3);
  cov << 1.0, config.sigma21, config.sigma31,
         config.sigma21, 1.0, config.sigma32,
         config.sigma31, config.sigma32, 1.0;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::NotPositiveDefinite,
         "innovation covariance is not positive definite");
  // Cholesky of the covariance reordered to (eta, u, eps) so the common
  // draw z0 can be shared by every unit at a given period.
  InnovationChol c;
  c.l_u0 = config.sigma31;
  c.l_u1 = std::sqrt(1.0 - config.sigma31 * config.sigma31);
  c.l_e0 = config.sigma32;
  c.l_e1 = (config.sigma21 - config.sigma31 * config.sigma32) / c.l_u1;
  c.l_e2 = std::sqrt(1.0 - c.l_e0 * c.l_e0 - c.l_e1 * c.l_e1);
  return c;
}

}  // namespace detail

// Draw one panel.  The draw order is frozen (loadings, then per period: the
// shared trend innovation followed by each unit's pair), so a seed pins the
// panel exactly.
inline SimulatedPanel generate(const DgpConfig& config) {
  if (config.n < 2 || config.T < 4)
    fail(ErrorCode::InvalidArgument, "need n >= 2 and T >= 4");
  if (config.r != 1)
    fail(ErrorCode::InvalidArgument, "only the single-trend design is supported");
  const detail::InnovationChol chol = detail::innovation_chol(config);

  Rng rng(config.seed);
  const int n = config.n;
  const int T = config.T;

  SimulatedPanel sim;
  sim.lambda0.resize(n);
  for (int i = 0; i < n; ++i)
    sim.lambda0[i] = config.mu_lambda + rng.next_normal();

  sim.eta.resize(T);
  sim.u.resize(T, n);
  sim.eps.resize(T, n);
  for (int t = 0; t < T; ++t) {
    const double z0 = rng.next_normal();
    sim.eta[t] = config.mu_eta + z0;
    for (int i = 0; i < n; ++i) {
      const double z1 = rng.next_normal();
      const double z2 = rng.next_normal();
      sim.u(t, i) = chol.l_u0 * z0 + chol.l_u1 * z1;
      sim.eps(t, i) = chol.l_e0 * z0 + chol.l_e1 * z1 + chol.l_e2 * z2;
    }
  }

  // Driftless random walks from zero initial conditions.
  sim.F0.resize(T, 1);
  double level = 0.0;
  for (int t = 0; t < T; ++t) {
    level += sim.eta[t];
    sim.F0(t, 0) = level;
  }

  PanelDataset panel;
  panel.n = n;
  panel.T = T;
  panel.k = 1;
  panel.y.resize(T, n);
  panel.x.assign(n, Matrix(T, 1));
  panel.unit_ids.resize(n);
  panel.time_ids.resize(T);
  for (int i = 0; i < n; ++i) panel.unit_ids[i] = std::to_string(i + 1);
  for (int t = 0; t < T; ++t) panel.time_ids[t] = std::to_string(t + 1);
  for (int i = 0; i < n; ++i) {
    double x_level = 0.0;
    for (int t = 0; t < T; ++t) {
      x_level += sim.eps(t, i);
      panel.x[i](t, 0) = x_level;
      panel.y(t, i) = config.beta0 * x_level +
                      config.c * sim.lambda0[i] * sim.F0(t, 0) + sim.u(t, i);
    }
  }
  sim.panel = std::move(panel);
  return sim;
}

// Aggregates across replications for one estimator.  Mean bias follows the
// tables' x100 convention; the standard deviation is reported raw.
struct McCell {
  double mean_bias_x100 = 0.0;
  double std_dev = 0.0;
  double t_mean = 0.0;
  double t_std = 0.0;
  int used = 0;
  int failed = 0;
  bool std_undefined = false;
  bool t_available = false;
};

struct McSummary {
  std::vector<std::pair<EstimatorKind, McCell>> cells;
  int reps = 0;
  double elapsed_seconds = 0.0;  // never serialized; reports stay byte-stable
};

// Per-replication draws kept by the harness (used by acceptance checks that
// need more than the aggregate summary).
struct McDraws {
  // beta[e][j], t[e][j] indexed by estimator position, then replication.
  std::vector<std::vector<std::optional<double>>> beta;
  std::vector<std::vector<std::optional<double>>> t;
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CUPFM_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline McSummary run_mc(const DgpConfig& config, int reps,
                        const std::vector<EstimatorKind>& estimators,
                        std::uint64_t base_seed, const CupConfig& fit = {},
                        int threads = 0, McDraws* draws_out = nullptr) {
  if (reps < 1) fail(ErrorCode::InvalidArgument, "reps must be >= 1");
  if (estimators.empty())
    fail(ErrorCode::InvalidArgument, "estimator set must be nonempty");
  detail::innovation_chol(config);  // validate once up front

  const auto start = std::chrono::steady_clock::now();
  const std::size_t ne = estimators.size();
  McDraws draws;
  draws.beta.assign(ne, std::vector<std::optional<double>>(reps));
  draws.t.assign(ne, std::vector<std::optional<double>>(reps));

  auto run_rep = [&](int j) {
    DgpConfig rep_config = config;
    rep_config.seed = base_seed + static_cast<std::uint64_t>(j);
    const SimulatedPanel sim = generate(rep_config);
    for (std::size_t e = 0; e < ne; ++e) {
      try {
        EstimationResult res;
        switch (estimators[e]) {
          case EstimatorKind::PooledOLS: res = pooled_ols(sim.panel); break;
          case EstimatorKind::LSDV: res = lsdv(sim.panel); break;
          case EstimatorKind::LSKnownF:
            res = ls_fm_known_f(sim.panel, sim.F0, fit.kernel);
            break;
          case EstimatorKind::Cup: res = cup(sim.panel, fit); break;
          case EstimatorKind::CupBC: res = cup_bc(sim.panel, fit); break;
          case EstimatorKind::CupFM: res = cup_fm(sim.panel, fit); break;
          case EstimatorKind::TwoStepFM: res = two_step_fm(sim.panel, fit); break;
        }
        draws.beta[e][j] = res.beta_hat[0];
        if (res.se && (*res.se)[0] > 0.0)
          draws.t[e][j] = (res.beta_hat[0] - config.beta0) / (*res.se)[0];
      } catch (const Error&) {
        // counted and excluded from the aggregates
      }
    }
  };

  const int nthreads = std::min(resolve_threads(threads), reps);
  if (nthreads <= 1) {
    for (int j = 0; j < reps; ++j) run_rep(j);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int w = 0; w < nthreads; ++w)
      pool.emplace_back([&] {
        for (int j = next.fetch_add(1); j < reps; j = next.fetch_add(1))
          run_rep(j);
      });
    for (auto& worker : pool) worker.join();
  }

  // Replication order is fixed by index, so the aggregates do not depend on
  // the thread schedule.
  McSummary summary;
  summary.reps = reps;
  for (std::size_t e = 0; e < ne; ++e) {
    McCell cell;
    double sum = 0.0;
    int used = 0;
    for (int j = 0; j < reps; ++j)
      if (draws.beta[e][j]) {
        sum += *draws.beta[e][j] - config.beta0;
        ++used;
      }
    cell.used = used;
    cell.failed = reps - used;
    if (used > 0) {
      const double mean_bias = sum / used;
      cell.mean_bias_x100 = 100.0 * mean_bias;
      double ss = 0.0;
      for (int j = 0; j < reps; ++j)
        if (draws.beta[e][j]) {
          const double d = (*draws.beta[e][j] - config.beta0) - mean_bias;
          ss += d * d;
        }
      cell.std_undefined = used < 2;
      cell.std_dev = used > 1 ? std::sqrt(ss / (used - 1)) : 0.0;
    }
    double t_sum = 0.0;
    int t_used = 0;
    for (int j = 0; j < reps; ++j)
      if (draws.t[e][j]) {
        t_sum += *draws.t[e][j];
        ++t_used;
      }
    if (t_used > 0) {
      cell.t_available = true;
      const double t_mean = t_sum / t_used;
      cell.t_mean = t_mean;
      double ss = 0.0;
      for (int j = 0; j < reps; ++j)
        if (draws.t[e][j]) {
          const double d = *draws.t[e][j] - t_mean;
          ss += d * d;
        }
      cell.t_std = t_used > 1 ? std::sqrt(ss / (t_used - 1)) : 0.0;
    }
    summary.cells.emplace_back(estimators[e], cell);
  }
  summary.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  if (draws_out) *draws_out = std::move(draws);
  return summary;
}

}  // namespace cupfm

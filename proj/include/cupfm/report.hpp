#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "cupfm/estimators.hpp"
#include "cupfm/factor_select.hpp"
#include "cupfm/mc.hpp"

namespace cupfm {

using Json = nlohmann::ordered_json;

inline const char* kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::Bartlett: return "bartlett";
    case KernelKind::Parzen: return "parzen";
    case KernelKind::QuadraticSpectral: return "qs";
  }
  return "?";
}

inline const char* detrend_name(DetrendMode mode) {
  switch (mode) {
    case DetrendMode::None: return "none";
    case DetrendMode::Demean: return "demean";
    case DetrendMode::DemeanAndTrend: return "trend";
  }
  return "?";
}

namespace detail {

inline Json vector_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline std::string fixed3(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.3f", v);
  return buffer;
}

}  // namespace detail

inline Json estimation_result_json(const EstimationResult& res, int r_used,
                                   const KernelSpec& kernel) {
  Json j;
  j["estimator"] = estimator_name(res.estimator);
  j["beta_hat"] = detail::vector_json(res.beta_hat);
  j["se"] = res.se ? detail::vector_json(*res.se) : Json();
  j["t_stats"] = res.t_stats ? detail::vector_json(*res.t_stats) : Json();
  j["phi_hat"] = res.phi_hat ? detail::vector_json(*res.phi_hat) : Json();
  j["r_used"] = r_used;
  j["iterations"] = res.iterations;
  j["converged"] = res.converged;
  j["kernel"] = kernel_name(kernel.kind);
  j["bandwidth"] = kernel.bandwidth;
  return j;
}

inline Json mc_summary_json(const DgpConfig& config, int reps,
                            std::uint64_t base_seed, const KernelSpec& kernel,
                            const McSummary& summary) {
  Json j;
  j["schema_version"] = 1;
  j["command"] = "simulate";
  j["n"] = config.n;
  j["t"] = config.T;
  j["beta0"] = config.beta0;
  j["c"] = config.c;
  j["s21"] = config.sigma21;
  j["s31"] = config.sigma31;
  j["s32"] = config.sigma32;
  j["mu_lambda"] = config.mu_lambda;
  j["mu_eta"] = config.mu_eta;
  j["r"] = config.r;
  j["reps"] = reps;
  j["seed"] = base_seed;
  j["kernel"] = kernel_name(kernel.kind);
  j["bandwidth"] = kernel.bandwidth;
  Json cells = Json::array();
  for (const auto& [kind, cell] : summary.cells) {
    Json c;
    c["estimator"] = estimator_name(kind);
    c["mean_bias_x100"] = cell.used > 0 ? Json(cell.mean_bias_x100) : Json();
    c["std_dev"] = cell.used > 0 ? Json(cell.std_dev) : Json();
    c["std_undefined"] = cell.std_undefined;
    c["t_mean"] = cell.t_available ? Json(cell.t_mean) : Json();
    c["t_std"] = cell.t_available ? Json(cell.t_std) : Json();
    c["used"] = cell.used;
    c["failed"] = cell.failed;
    cells.push_back(std::move(c));
  }
  j["results"] = std::move(cells);
  return j;
}

// Text table mirroring the simulation tables: estimators as columns, the
// x100 mean bias over the raw standard deviation in parentheses.
inline std::string mc_summary_table(const DgpConfig& config, int reps,
                                    const McSummary& summary) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line),
                "Mean bias (x100) and standard deviation, n=%d T=%d c=%g "
                "s21=%g s31=%g s32=%g reps=%d\n",
                config.n, config.T, config.c, config.sigma21, config.sigma31,
                config.sigma32, reps);
  out += line;
  auto pad = [](const std::string& text, int width) {
    return text.size() >= static_cast<std::size_t>(width)
               ? text
               : std::string(width - text.size(), ' ') + text;
  };
  const int width = 12;
  out += pad("", 10);
  for (const auto& [kind, cell] : summary.cells)
    out += pad(estimator_name(kind), width);
  out += "\n";
  auto row = [&](const std::string& label, auto getter, bool parens) {
    out += pad(label, 10);
    for (const auto& [kind, cell] : summary.cells) {
      std::string text = getter(cell);
      if (!text.empty() && parens) text = "(" + text + ")";
      out += pad(text.empty() ? "-" : text, width);
    }
    out += "\n";
  };
  row("bias_x100", [](const McCell& c) {
    return c.used > 0 ? detail::fixed3(c.mean_bias_x100) : std::string();
  }, false);
  row("std", [](const McCell& c) {
    return c.used > 0 ? detail::fixed3(c.std_dev) : std::string();
  }, true);
  row("t_mean", [](const McCell& c) {
    return c.t_available ? detail::fixed3(c.t_mean) : std::string();
  }, false);
  row("t_std", [](const McCell& c) {
    return c.t_available ? detail::fixed3(c.t_std) : std::string();
  }, true);
  row("failed", [](const McCell& c) {
    return std::to_string(c.failed);
  }, false);
  return out;
}

inline Json ic_result_json(const IcResult& ic) {
  Json j;
  j["schema_version"] = 1;
  j["command"] = "select-factors";
  j["r_hat"] = ic.r_hat;
  j["ic_values"] = detail::vector_json(ic.ic_values);
  j["sigma2_values"] = detail::vector_json(ic.sigma2_values);
  return j;
}

}  // namespace cupfm

// Command-line surface for the panel cointegration estimators: estimate on
// user data, run the simulation harness, or select the number of common
// trends.  Reports are JSON; `simulate` additionally prints a text table.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cupfm/cupfm.hpp"
#include "cupfm/report.hpp"

namespace {

using cupfm::DetrendMode;
using cupfm::EstimatorKind;
using cupfm::Json;
using cupfm::KernelKind;

struct KernelFlags {
  std::string kind = "bartlett";
  double bandwidth = 5.0;
  double bandwidth_exp = 0.0;  // > 0 switches to K = floor(n^b)
};

void add_kernel_flags(CLI::App* cmd, KernelFlags& flags) {
  cmd->add_option("--kernel", flags.kind, "Kernel window")
      ->check(CLI::IsMember({"bartlett", "parzen", "qs"}))
      ->capture_default_str();
  cmd->add_option("--bandwidth", flags.bandwidth, "Kernel bandwidth K")
      ->capture_default_str();
  cmd->add_option("--bandwidth-exp", flags.bandwidth_exp,
                  "Use K = floor(n^b) instead of a fixed bandwidth");
}

cupfm::KernelSpec resolve_kernel(const KernelFlags& flags, int n) {
  cupfm::KernelSpec spec;
  if (flags.kind == "bartlett") spec.kind = KernelKind::Bartlett;
  else if (flags.kind == "parzen") spec.kind = KernelKind::Parzen;
  else spec.kind = KernelKind::QuadraticSpectral;
  spec.bandwidth = flags.bandwidth_exp > 0.0
                       ? cupfm::bandwidth_rule(n, flags.bandwidth_exp)
                       : flags.bandwidth;
  return spec;
}

DetrendMode resolve_detrend(const std::string& name) {
  if (name == "none") return DetrendMode::None;
  if (name == "demean") return DetrendMode::Demean;
  return DetrendMode::DemeanAndTrend;
}

std::vector<EstimatorKind> resolve_estimators(const std::vector<std::string>& names) {
  std::vector<EstimatorKind> kinds;
  for (const auto& name : names) {
    auto kind = cupfm::estimator_from_name(name);
    if (!kind || *kind == EstimatorKind::LSKnownF)
      cupfm::fail(cupfm::ErrorCode::InvalidArgument,
                  "unknown estimator '" + name +
                      "' (choose from pooled, lsdv, cup, cupbc, cupfm, 2sfm)");
    kinds.push_back(*kind);
  }
  return kinds;
}

// Flat key=value config handling: `--config file` is stripped from the
// command line and each pair becomes a --key=value token spliced in right
// after the subcommand, skipping keys the user already passed (flags win).
std::vector<std::string> merge_config_file(int argc, char** argv) {
  std::vector<std::string> tokens(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < tokens.size();) {
    if (tokens[i] == "--config" && i + 1 < tokens.size()) {
      path = tokens[i + 1];
      tokens.erase(tokens.begin() + i, tokens.begin() + i + 2);
    } else if (tokens[i].rfind("--config=", 0) == 0) {
      path = tokens[i].substr(9);
      tokens.erase(tokens.begin() + i);
    } else {
      ++i;
    }
  }
  if (path.empty()) return tokens;
  if (tokens.empty() || tokens[0].rfind("-", 0) == 0) return tokens;

  std::ifstream in(path);
  if (!in)
    cupfm::fail(cupfm::ErrorCode::InvalidArgument,
                "cannot open config file '" + path + "'");
  std::set<std::string> given;
  for (const auto& token : tokens)
    if (token.rfind("--", 0) == 0)
      given.insert(token.substr(0, token.find('=')));

  std::vector<std::string> injected;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto first = s.find_first_not_of(" \t\r");
      const auto last = s.find_last_not_of(" \t\r");
      return first == std::string::npos ? std::string()
                                        : s.substr(first, last - first + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || given.count("--" + key)) continue;
    if (key == "estimator") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!trim(item).empty()) injected.push_back("--estimator=" + trim(item));
    } else {
      injected.push_back("--" + key + "=" + value);
    }
  }
  tokens.insert(tokens.begin() + 1, injected.begin(), injected.end());
  return tokens;
}

void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out)
    cupfm::fail(cupfm::ErrorCode::InvalidArgument,
                "cannot open output file '" + path + "'");
  out << text;
}

void dump_factors(const std::string& prefix, const std::string& estimator,
                  const cupfm::PanelDataset& panel,
                  const cupfm::FactorEstimate& fac) {
  const int r = static_cast<int>(fac.F_hat.cols());
  {
    std::ofstream out(prefix + "_" + estimator + "_factors.csv");
    out << "time";
    for (int j = 1; j <= r; ++j) out << ",f" << j;
    out << "\n";
    for (int t = 0; t < panel.T; ++t) {
      out << panel.time_ids[t];
      for (int j = 0; j < r; ++j)
        out << "," << cupfm::detail::shortest_repr(fac.F_hat(t, j));
      out << "\n";
    }
  }
  std::ofstream out(prefix + "_" + estimator + "_loadings.csv");
  out << "unit";
  for (int j = 1; j <= r; ++j) out << ",l" << j;
  out << "\n";
  for (int i = 0; i < panel.n; ++i) {
    out << panel.unit_ids[i];
    for (int j = 0; j < r; ++j)
      out << "," << cupfm::detail::shortest_repr(fac.Lambda_hat(i, j));
    out << "\n";
  }
}

int cmd_estimate(const std::string& input, const std::string& output,
                 const std::vector<std::string>& estimator_names,
                 const std::string& r_arg, int r_max, const KernelFlags& kflags,
                 const std::string& detrend, int max_iter, double tol,
                 const std::string& init, const std::string& factor_prefix) {
  const cupfm::PanelDataset raw = cupfm::read_panel_csv(input);
  const std::vector<EstimatorKind> kinds = resolve_estimators(estimator_names);

  cupfm::CupConfig config;
  config.max_iter = max_iter;
  config.tol = tol;
  config.kernel = resolve_kernel(kflags, raw.n);
  config.detrend.mode = resolve_detrend(detrend);
  if (init == "pooled") config.init = cupfm::InitMethod::PooledOLS;
  else if (init == "zero") config.init = cupfm::InitMethod::Zero;
  else config.init = cupfm::InitMethod::Lsdv;

  Json selection;
  if (r_arg == "auto") {
    const cupfm::PanelDataset projected =
        cupfm::project_deterministics(raw, config.detrend);
    cupfm::IcOptions opts;
    opts.base = config;
    opts.base.detrend.mode = DetrendMode::None;
    const int bound = std::min(raw.n, raw.T) - 1;
    const cupfm::IcResult ic =
        cupfm::select_r(projected, std::nullopt, std::min(r_max, bound), opts);
    config.r = ic.r_hat;
    selection = cupfm::ic_result_json(ic);
    selection.erase("schema_version");
    selection.erase("command");
  } else {
    try {
      config.r = std::stoi(r_arg);
    } catch (...) {
      cupfm::fail(cupfm::ErrorCode::InvalidArgument,
                  "--r must be a positive integer or 'auto'");
    }
  }

  Json report;
  report["schema_version"] = 1;
  report["command"] = "estimate";
  report["input"] = input;
  report["n"] = raw.n;
  report["t"] = raw.T;
  report["k"] = raw.k;
  report["detrend"] = detrend;
  report["r_mode"] = r_arg;
  report["r_used"] = config.r;
  if (!selection.is_null()) report["selection"] = selection;

  Json results = Json::array();
  for (EstimatorKind kind : kinds) {
    cupfm::EstimationResult res;
    switch (kind) {
      case EstimatorKind::PooledOLS:
        res = cupfm::pooled_ols(
            cupfm::project_deterministics(raw, config.detrend));
        break;
      case EstimatorKind::LSDV:
        res = cupfm::lsdv(cupfm::project_deterministics(raw, config.detrend));
        break;
      case EstimatorKind::Cup: res = cupfm::cup(raw, config); break;
      case EstimatorKind::CupBC: res = cupfm::cup_bc(raw, config); break;
      case EstimatorKind::CupFM: res = cupfm::cup_fm(raw, config); break;
      case EstimatorKind::TwoStepFM: res = cupfm::two_step_fm(raw, config); break;
      case EstimatorKind::LSKnownF: break;  // not reachable from the CLI
    }
    results.push_back(cupfm::estimation_result_json(res, config.r, config.kernel));
    if (!factor_prefix.empty() && res.factors)
      dump_factors(factor_prefix, cupfm::estimator_name(kind), raw, *res.factors);
  }
  report["results"] = std::move(results);
  write_output(output, report.dump(2) + "\n");
  return 0;
}

int cmd_simulate(int n, int T, int reps, std::uint64_t seed,
                 const std::vector<std::string>& estimator_names, double c,
                 double s21, double s31, double s32, double mu_lambda,
                 double mu_eta, double beta0, int r, const KernelFlags& kflags,
                 const std::string& output, bool quiet) {
  cupfm::DgpConfig config;
  config.n = n;
  config.T = T;
  config.beta0 = beta0;
  config.c = c;
  config.sigma21 = s21;
  config.sigma31 = s31;
  config.sigma32 = s32;
  config.mu_lambda = mu_lambda;
  config.mu_eta = mu_eta;
  config.r = 1;

  const std::vector<EstimatorKind> kinds = resolve_estimators(estimator_names);
  cupfm::CupConfig fit;
  fit.r = r;
  fit.kernel = resolve_kernel(kflags, n);

  const cupfm::McSummary summary = cupfm::run_mc(config, reps, kinds, seed, fit);

  bool any_used = false;
  for (const auto& [kind, cell] : summary.cells) any_used |= cell.used > 0;
  if (!any_used)
    cupfm::fail(cupfm::ErrorCode::SingularDesign, "every replication failed");

  const Json report = cupfm::mc_summary_json(config, reps, seed, fit.kernel, summary);
  write_output(output, report.dump(2) + "\n");
  if (!quiet && output != "-")
    std::cout << cupfm::mc_summary_table(config, reps, summary);
  std::cerr << "elapsed: " << summary.elapsed_seconds << "s\n";
  return 0;
}

int cmd_select(const std::string& input, const std::string& output, int r_max,
               const KernelFlags& kflags, const std::string& detrend,
               int max_iter, double tol) {
  const cupfm::PanelDataset raw = cupfm::read_panel_csv(input);
  cupfm::IcOptions opts;
  opts.base.max_iter = max_iter;
  opts.base.tol = tol;
  opts.base.kernel = resolve_kernel(kflags, raw.n);
  opts.base.detrend.mode = resolve_detrend(detrend);
  const cupfm::IcResult ic = cupfm::select_r(raw, std::nullopt, r_max, opts);
  write_output(output, cupfm::ic_result_json(ic).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panel cointegration with common stochastic trends"};
  app.require_subcommand(1);

  // --- estimate ---
  auto* est = app.add_subcommand("estimate", "Estimate slopes from a panel CSV");
  std::string est_input, est_output = "-", est_r = "auto";
  std::string est_detrend = "demean", est_init = "lsdv", est_prefix;
  std::vector<std::string> est_estimators = {"cupfm"};
  int est_rmax = 8, est_max_iter = 20;
  double est_tol = 1e-8;
  KernelFlags est_kernel;
  std::string est_config_doc;
  est->add_option("--config", est_config_doc,
                  "Flat key=value config file; explicit flags win");
  est->add_option("--input,-i", est_input, "Panel CSV (unit,time,y,x1,...,xk)")
      ->required();
  est->add_option("--output,-o", est_output, "Report path, '-' for stdout")
      ->capture_default_str();
  est->add_option("--estimator", est_estimators,
                  "Estimators: pooled lsdv cup cupbc cupfm 2sfm")
      ->capture_default_str();
  est->add_option("--r", est_r, "Factor count or 'auto'")->capture_default_str();
  est->add_option("--r-max", est_rmax, "Candidate bound for --r auto")
      ->capture_default_str();
  add_kernel_flags(est, est_kernel);
  est->add_option("--detrend", est_detrend, "none|demean|trend")
      ->check(CLI::IsMember({"none", "demean", "trend"}))
      ->capture_default_str();
  est->add_option("--max-iter", est_max_iter, "Iteration cap")
      ->capture_default_str();
  est->add_option("--tol", est_tol, "Relative beta-change tolerance")
      ->capture_default_str();
  est->add_option("--init", est_init, "Initial beta: lsdv|pooled|zero")
      ->check(CLI::IsMember({"lsdv", "pooled", "zero"}))
      ->capture_default_str();
  est->add_option("--dump-factors", est_prefix,
                  "Write <prefix>_<est>_factors.csv and _loadings.csv");

  // --- simulate ---
  auto* sim = app.add_subcommand("simulate", "Run the seeded Monte Carlo harness");
  int sim_n = 0, sim_T = 0, sim_reps = 1000, sim_r = 1;
  std::uint64_t sim_seed = 0;
  double sim_c = 5.0, sim_s21 = 0.2, sim_s31 = 0.8, sim_s32 = 0.4;
  double sim_mu_lambda = 2.0, sim_mu_eta = 0.0, sim_beta0 = 2.0;
  std::string sim_output = "-";
  bool sim_quiet = false;
  std::vector<std::string> sim_estimators = {"lsdv", "2sfm", "cupbc", "cupfm"};
  KernelFlags sim_kernel;
  std::string sim_config_doc;
  sim->add_option("--config", sim_config_doc,
                  "Flat key=value config file; explicit flags win");
  sim->add_option("--n", sim_n, "Cross-section size")->required();
  sim->add_option("--t", sim_T, "Time-series length")->required();
  sim->add_option("--reps", sim_reps, "Replications")->capture_default_str();
  sim->add_option("--seed", sim_seed, "Base seed; replication j uses seed+j")
      ->capture_default_str();
  sim->add_option("--estimator", sim_estimators, "Estimators to fit")
      ->capture_default_str();
  sim->add_option("--c", sim_c, "Common-trend importance")->capture_default_str();
  sim->add_option("--s21", sim_s21, "corr(u, eps)")->capture_default_str();
  sim->add_option("--s31", sim_s31, "corr(u, eta)")->capture_default_str();
  sim->add_option("--s32", sim_s32, "corr(eps, eta)")->capture_default_str();
  sim->add_option("--mu-lambda", sim_mu_lambda, "Loading mean")
      ->capture_default_str();
  sim->add_option("--mu-eta", sim_mu_eta, "Trend drift mean")
      ->capture_default_str();
  sim->add_option("--beta0", sim_beta0, "True slope")->capture_default_str();
  sim->add_option("--r", sim_r, "Factor count used by the fits")
      ->capture_default_str();
  add_kernel_flags(sim, sim_kernel);
  sim->add_option("--output,-o", sim_output, "JSON path, '-' for stdout")
      ->capture_default_str();
  sim->add_flag("--quiet", sim_quiet, "Suppress the text table");

  // --- select-factors ---
  auto* sel = app.add_subcommand("select-factors",
                                 "Estimate the number of common trends");
  std::string sel_input, sel_output = "-", sel_detrend = "demean";
  int sel_rmax = 8, sel_max_iter = 20;
  double sel_tol = 1e-8;
  KernelFlags sel_kernel;
  std::string sel_config_doc;
  sel->add_option("--config", sel_config_doc,
                  "Flat key=value config file; explicit flags win");
  sel->add_option("--input,-i", sel_input, "Panel CSV")->required();
  sel->add_option("--output,-o", sel_output, "Report path, '-' for stdout")
      ->capture_default_str();
  sel->add_option("--r-max", sel_rmax, "Largest candidate factor count")
      ->capture_default_str();
  add_kernel_flags(sel, sel_kernel);
  sel->add_option("--detrend", sel_detrend, "none|demean|trend")
      ->check(CLI::IsMember({"none", "demean", "trend"}))
      ->capture_default_str();
  sel->add_option("--max-iter", sel_max_iter, "Iteration cap")
      ->capture_default_str();
  sel->add_option("--tol", sel_tol, "Relative beta-change tolerance")
      ->capture_default_str();

  std::vector<std::string> args;
  try {
    args = merge_config_file(argc, argv);
  } catch (const cupfm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cupfm::exit_code_for(e.code());
  }
  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (est->parsed())
      return cmd_estimate(est_input, est_output, est_estimators, est_r, est_rmax,
                          est_kernel, est_detrend, est_max_iter, est_tol,
                          est_init, est_prefix);
    if (sim->parsed())
      return cmd_simulate(sim_n, sim_T, sim_reps, sim_seed, sim_estimators,
                          sim_c, sim_s21, sim_s31, sim_s32, sim_mu_lambda,
                          sim_mu_eta, sim_beta0, sim_r, sim_kernel, sim_output,
                          sim_quiet);
    if (sel->parsed())
      return cmd_select(sel_input, sel_output, sel_rmax, sel_kernel,
                        sel_detrend, sel_max_iter, sel_tol);
  } catch (const cupfm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cupfm::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

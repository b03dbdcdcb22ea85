// Command line front end: simulate / fit / forecast / backtest / metrics / verify.
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nar/core_types.hpp"
#include "nar/design_matrix.hpp"
#include "nar/errors.hpp"
#include "nar/io.hpp"
#include "nar/metrics.hpp"
#include "nar/parallel.hpp"
#include "nar/reference_oracle.hpp"
#include "nar/selection_forecast.hpp"
#include "nar/simulator.hpp"
#include "nar/vb_engine.hpp"

namespace {

int exit_code_for(nar::ErrorKind kind) {
  using EK = nar::ErrorKind;
  switch (kind) {
    case EK::SingularDesign:
    case EK::SingularPrecision:
    case EK::NotPositiveDefinite:
    case EK::NonFinite:
    case EK::ExplosivePath:
    case EK::InfeasiblePattern:
    case EK::TooManyIndicators:
    case EK::AllCellsExcluded:
    case EK::ZeroNormalizer:
      return 3;
    default:
      return 2;
  }
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) nar::fail(nar::ErrorKind::IoError, "cannot create directory '" + dir + "'");
}

// Resolves --seg / --grouping into a segmentation for a panel of width m.
nar::Segmentation resolve_segmentation(const std::string& seg_path,
                                       const std::string& grouping, int m) {
  if (!seg_path.empty()) return nar::read_segmentation_json(seg_path, m);
  if (grouping == "universal" || grouping.empty())
    return nar::Segmentation::universal(m);
  if (grouping == "nodewise") return nar::Segmentation::nodewise(m);
  nar::fail(nar::ErrorKind::InvalidConfig,
            "unknown grouping '" + grouping + "' (use universal or nodewise)");
}

nar::EngineConfig load_config(const std::string& path) {
  if (path.empty()) return nar::EngineConfig{};
  return nar::read_engine_config_json(path);
}

int cmd_simulate(const std::string& scenario, const std::string& cov,
                 uint64_t seed, const std::string& out) {
  Timer timer;
  ensure_dir(out);
  nar::ScenarioSpec spec = nar::preset_scenario(scenario, nar::cov_kind_from_name(cov));
  nar::SimulatedData data = nar::generate(spec, seed);
  nar::write_panel_csv(join_path(out, "panel.csv"), data.panel);
  nar::write_truth_json(join_path(out, "truth.json"), spec, data.truth);

  nar::ManifestInfo info;
  info.command = "simulate";
  info.config = {{"scenario", scenario}, {"cov", cov}};
  info.seed = seed;
  info.outputs = {"panel.csv", "truth.json"};
  info.wall_seconds = timer.seconds();
  nar::write_manifest_json(join_path(out, "manifest.json"), info);
  std::cout << "simulate: wrote " << data.panel.rows() << "x" << data.panel.cols()
            << " panel to " << out << " (spectral radius "
            << data.truth.spectral_radius << ")\n";
  return 0;
}

int cmd_fit(const std::string& data_path, const std::string& seg_path,
            const std::string& grouping, int lags, const std::string& config_path,
            const std::string& out) {
  Timer timer;
  ensure_dir(out);
  const nar::TimeSeriesPanel panel = nar::read_panel_csv(data_path);
  const nar::Segmentation seg =
      resolve_segmentation(seg_path, grouping, panel.cols());
  const nar::EngineConfig cfg = load_config(config_path);
  const nar::FitResult result = nar::fit_model(panel, seg, lags, cfg);

  nar::write_coefficients_csv(join_path(out, "coefficients.csv"),
                              result.coefficients);
  nar::write_indicators_json(join_path(out, "indicators.json"), result.indicators,
                             seg);
  nar::write_elbo_trace_csv(join_path(out, "elbo_trace.csv"), result.elbo_trace);

  nar::ManifestInfo info;
  info.command = "fit";
  info.config = {{"data", data_path},
                 {"grouping", seg_path.empty() ? grouping : seg_path},
                 {"lags", std::to_string(lags)},
                 {"config", config_path.empty() ? "<defaults>" : config_path}};
  info.outputs = {"coefficients.csv", "indicators.json", "elbo_trace.csv"};
  info.wall_seconds = timer.seconds();
  nar::write_manifest_json(join_path(out, "manifest.json"), info);

  std::cout << "fit: " << result.iterations << " iterations, "
            << (result.converged ? "converged" : "NOT converged") << ", elbo "
            << nar::format_double(result.elbo_trace.back()) << ", "
            << result.coefficients.nonzero_count() << " active coefficients\n";
  if (!result.converged)
    std::cerr << "warning: iteration cap reached before the tolerance\n";
  return 0;
}

int cmd_forecast(const std::string& data_path, const std::string& coef_path,
                 const std::string& out) {
  Timer timer;
  ensure_dir(out);
  const nar::TimeSeriesPanel panel = nar::read_panel_csv(data_path);
  const nar::CoefficientTensor B = nar::read_coefficients_csv(coef_path);
  if (B.m() != panel.cols())
    nar::fail(nar::ErrorKind::ShapeMismatch,
              "coefficient width does not match the panel");
  const Eigen::VectorXd means = panel.values.colwise().mean().transpose();
  const Eigen::RowVectorXd next = nar::forecast_one(panel, B, means);
  nar::write_forecast_csv(join_path(out, "forecast.csv"), panel.node_ids, next);

  nar::ManifestInfo info;
  info.command = "forecast";
  info.config = {{"data", data_path}, {"coefficients", coef_path}};
  info.outputs = {"forecast.csv"};
  info.wall_seconds = timer.seconds();
  nar::write_manifest_json(join_path(out, "manifest.json"), info);
  std::cout << "forecast: wrote one-step forecast for " << next.size()
            << " nodes\n";
  return 0;
}

int cmd_backtest(const std::string& data_path, const std::string& seg_path,
                 const std::string& grouping, int lags,
                 const std::string& config_path, int split_index,
                 int refit_every, bool gls, const std::string& out) {
  Timer timer;
  ensure_dir(out);
  const nar::TimeSeriesPanel panel = nar::read_panel_csv(data_path);
  const nar::Segmentation seg =
      resolve_segmentation(seg_path, grouping, panel.cols());
  const nar::EngineConfig cfg = load_config(config_path);
  nar::BacktestOptions opts;
  opts.split_index = split_index;
  opts.refit_structure_every = refit_every;
  opts.gls = gls;
  const nar::BacktestReport report = nar::backtest(panel, seg, lags, cfg, opts);

  nar::write_backtest_csv(join_path(out, "backtest.csv"), report, panel.node_ids);
  nar::write_backtest_summary_json(join_path(out, "summary.json"), report);

  nar::ManifestInfo info;
  info.command = "backtest";
  info.config = {{"data", data_path},
                 {"grouping", seg_path.empty() ? grouping : seg_path},
                 {"lags", std::to_string(lags)},
                 {"config", config_path.empty() ? "<defaults>" : config_path},
                 {"split_index", std::to_string(split_index)},
                 {"refit_structure_every", std::to_string(refit_every)},
                 {"gls", gls ? "true" : "false"}};
  info.outputs = {"backtest.csv", "summary.json"};
  info.wall_seconds = timer.seconds();
  nar::write_manifest_json(join_path(out, "manifest.json"), info);

  std::cout << "backtest: " << report.actuals.rows() << " steps, mape "
            << report.mape_percent << "%, nrmse " << report.nrmse << "\n";
  if (report.mape_excluded > 0)
    std::cout << "backtest: " << report.mape_excluded
              << " near-zero cells excluded from mape\n";
  return 0;
}

int cmd_metrics(const std::string& truth_path, const std::string& selected_path,
                const std::string& out) {
  Timer timer;
  ensure_dir(out);
  const nar::TruthFile truth = nar::read_truth_json(truth_path);
  const nar::IndicatorsFile selected = nar::read_indicators_json(selected_path);
  if (selected.seg.node_count() != truth.scenario.m)
    nar::fail(nar::ErrorKind::ShapeMismatch,
              "selected indicators do not match the truth panel width");

  nar::IndicatorSet truth_ind = truth.indicators;
  if (truth_ind.p() < selected.indicators.p())
    truth_ind = truth_ind.embedded(selected.indicators.p());
  else if (truth_ind.p() > selected.indicators.p())
    nar::fail(nar::ErrorKind::ShapeMismatch,
              "selected indicators use fewer lags than the truth");

  const nar::CoefficientMask truth_mask =
      nar::coefficient_mask(truth_ind, truth.scenario.seg);
  const nar::CoefficientMask sel_mask =
      nar::coefficient_mask(selected.indicators, selected.seg);
  const nar::SelectionScore score = nar::selection_score({truth_mask}, {sel_mask});

  nar::MetricsBundle bundle;
  bundle.tpr = score.tpr;
  bundle.fpr = score.fpr;
  bundle.ams = score.ams;
  const std::string metrics_path = join_path(out, "metrics.json");
  {
    std::ofstream f(metrics_path);
    if (!f) nar::fail(nar::ErrorKind::IoError, "cannot write '" + metrics_path + "'");
    f << bundle.to_json_text() << "\n";
  }

  nar::ManifestInfo info;
  info.command = "metrics";
  info.config = {{"truth", truth_path}, {"selected", selected_path}};
  info.outputs = {"metrics.json"};
  info.wall_seconds = timer.seconds();
  nar::write_manifest_json(join_path(out, "manifest.json"), info);

  std::cout << "metrics: ";
  if (score.tpr) std::cout << "tpr " << *score.tpr * 100.0 << "% ";
  if (score.fpr) std::cout << "fpr " << *score.fpr * 100.0 << "% ";
  std::cout << "selected " << score.ams << "\n";
  return 0;
}

// Cross-checks the variational fit against exact enumeration on small problems.
int cmd_verify(int instances, uint64_t seed) {
  Timer timer;
  std::atomic<int> selection_matches{0};
  std::atomic<int> bound_ok{0};
  nar::parallel_for(static_cast<size_t>(instances), [&](size_t idx) {
    std::mt19937_64 rng(nar::derive_seed(seed, idx));
    const int m = 2, p = 1, T = 61;
    nar::Dimensions dims{m, p, T};

    // Draw a sparse truth with strong signal, simulate, fit, enumerate.
    std::uniform_real_distribution<double> mag(0.4, 0.7);
    std::bernoulli_distribution flip(0.5);
    nar::CoefficientTensor B(p, m);
    for (int i = 0; i < m; ++i)
      if (flip(rng)) B.lag(0)(i, i) = flip(rng) ? mag(rng) : -mag(rng);
    if (flip(rng)) B.lag(0)(0, 1) = (flip(rng) ? 1.0 : -1.0) * mag(rng);

    std::normal_distribution<double> noise(0.0, 0.3);
    Eigen::MatrixXd eps(T + 100, m);
    for (Eigen::Index r = 0; r < eps.rows(); ++r)
      for (int c = 0; c < m; ++c) eps(r, c) = noise(rng);
    nar::TimeSeriesPanel panel;
    panel.values = nar::iterate_var(B, eps, 100);

    const nar::Segmentation seg = nar::Segmentation::universal(m);
    const nar::DemeanedPanel centered = nar::demean(panel);
    const nar::DesignMatrices dm = nar::embed(centered.panel, p);

    nar::HyperParams hp;
    hp.pi1 = 0.5;
    hp.pi2 = 0.5;
    hp.sigma2_B = 1.0;
    hp.Sigma = Eigen::MatrixXd::Identity(m, m) * 0.09;

    nar::EngineConfig cfg;
    cfg.tol = 1e-10;
    cfg.max_iters = 500;
    const nar::FitOutput fit = nar::fit_fixed_hyperparams(dm, seg, hp, cfg);
    const nar::ExactPosterior exact = nar::exact_posterior(dm, seg, hp);
    const nar::Agreement agree = nar::agreement(exact, fit.state, seg);

    if (agree.selections_match) ++selection_matches;
    if (exact.log_evidence >= fit.elbo_trace.back() - 1e-8) ++bound_ok;
  });

  std::cout << "verify: " << selection_matches.load() << "/" << instances
            << " instances select the exact posterior structure\n";
  std::cout << "verify: evidence bound held on " << bound_ok.load() << "/"
            << instances << " instances\n";
  std::cout << "verify: " << timer.seconds() << "s\n";
  const bool pass =
      bound_ok.load() == instances && selection_matches.load() * 10 >= instances * 9;
  if (!pass) {
    std::cerr << "verify: FAILED\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse network autoregression: simulate, fit, forecast, backtest"};
  app.require_subcommand(1);
  app.set_version_flag("--version", nar::version_string());

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a benchmark panel");
  std::string sim_scenario = "m10UG", sim_cov = "identity", sim_out = ".";
  uint64_t sim_seed = 1;
  sim->add_option("--scenario", sim_scenario, "Preset name, e.g. m10UG, m20SG, m50NG");
  sim->add_option("--cov", sim_cov, "Noise covariance: identity or toeplitz");
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--out", sim_out, "Output directory");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the sparse model to a panel");
  std::string fit_data, fit_seg, fit_grouping = "universal", fit_cfg, fit_out = ".";
  int fit_lags = 1;
  fit->add_option("--data", fit_data, "Panel CSV")->required();
  fit->add_option("--seg", fit_seg, "Segmentation JSON");
  fit->add_option("--grouping", fit_grouping, "universal or nodewise (when no --seg)");
  fit->add_option("--lags", fit_lags, "Lag order")->required();
  fit->add_option("--config", fit_cfg, "Engine config JSON");
  fit->add_option("--out", fit_out, "Output directory");

  // forecast
  auto* fc = app.add_subcommand("forecast", "One-step forecast from fitted coefficients");
  std::string fc_data, fc_coef, fc_out = ".";
  fc->add_option("--data", fc_data, "Panel CSV")->required();
  fc->add_option("--coefficients", fc_coef, "Coefficients CSV")->required();
  fc->add_option("--out", fc_out, "Output directory");

  // backtest
  auto* bt = app.add_subcommand("backtest", "Rolling one-step evaluation");
  std::string bt_data, bt_seg, bt_grouping = "universal", bt_cfg, bt_out = ".";
  int bt_lags = 1, bt_split = 0, bt_refit = 0;
  bool bt_gls = false;
  bt->add_option("--data", bt_data, "Panel CSV")->required();
  bt->add_option("--seg", bt_seg, "Segmentation JSON");
  bt->add_option("--grouping", bt_grouping, "universal or nodewise (when no --seg)");
  bt->add_option("--lags", bt_lags, "Lag order")->required();
  bt->add_option("--config", bt_cfg, "Engine config JSON");
  bt->add_option("--split-index", bt_split, "Rows in the initial training window")
      ->required();
  bt->add_option("--refit-structure-every", bt_refit,
                 "Full refit cadence; 0 keeps the initial structure");
  bt->add_flag("--gls", bt_gls, "Weight the restricted refit by the fitted noise");
  bt->add_option("--out", bt_out, "Output directory");

  // metrics
  auto* mx = app.add_subcommand("metrics", "Score selected structure against truth");
  std::string mx_truth, mx_sel, mx_out = ".";
  mx->add_option("--truth", mx_truth, "truth.json from simulate")->required();
  mx->add_option("--selected", mx_sel, "indicators.json from fit")->required();
  mx->add_option("--out", mx_out, "Output directory");

  // verify
  auto* vf = app.add_subcommand("verify", "Cross-check the fit against exact enumeration");
  int vf_instances = 25;
  uint64_t vf_seed = 20240901;
  vf->add_option("--instances", vf_instances, "Number of random instances");
  vf->add_option("--seed", vf_seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_scenario, sim_cov, sim_seed, sim_out);
    if (fit->parsed())
      return cmd_fit(fit_data, fit_seg, fit_grouping, fit_lags, fit_cfg, fit_out);
    if (fc->parsed()) return cmd_forecast(fc_data, fc_coef, fc_out);
    if (bt->parsed())
      return cmd_backtest(bt_data, bt_seg, bt_grouping, bt_lags, bt_cfg, bt_split,
                          bt_refit, bt_gls, bt_out);
    if (mx->parsed()) return cmd_metrics(mx_truth, mx_sel, mx_out);
    if (vf->parsed()) return cmd_verify(vf_instances, vf_seed);
  } catch (const nar::Error& e) {
    std::cerr << "error [" << nar::error_kind_name(e.kind()) << "]: " << e.what()
              << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

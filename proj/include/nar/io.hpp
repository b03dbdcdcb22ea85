#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nar/core_types.hpp"
#include "nar/selection_forecast.hpp"
#include "nar/simulator.hpp"
#include "nar/vb_engine.hpp"

namespace nar {

// Shortest round-trip-exact decimal form of a double.
std::string format_double(double v);

// Panel CSV: header row of node ids, optional "#type:" row of node categories,
// then one row per time step, oldest first.
TimeSeriesPanel read_panel_csv(const std::string& path);
void write_panel_csv(const std::string& path, const TimeSeriesPanel& panel);

// Long form, every entry: header lag,source,target,value with 1-based indices.
void write_coefficients_csv(const std::string& path, const CoefficientTensor& B);
CoefficientTensor read_coefficients_csv(const std::string& path);

// {"groups": [[...]]} with 1-based node indices.
Segmentation read_segmentation_json(const std::string& path, int expected_m = -1);
void write_segmentation_json(const std::string& path, const Segmentation& seg);

struct IndicatorsFile {
  IndicatorSet indicators;
  Segmentation seg;
};

void write_indicators_json(const std::string& path, const IndicatorSet& ind,
                           const Segmentation& seg);
IndicatorsFile read_indicators_json(const std::string& path);

EngineConfig read_engine_config_json(const std::string& path);

struct TruthFile {
  ScenarioSpec scenario;
  IndicatorSet indicators;
  CoefficientTensor coefficients;
};

void write_truth_json(const std::string& path, const ScenarioSpec& spec,
                      const GroundTruth& truth);
TruthFile read_truth_json(const std::string& path);

void write_elbo_trace_csv(const std::string& path, const std::vector<double>& trace);

void write_forecast_csv(const std::string& path,
                        const std::vector<std::string>& node_ids,
                        const Eigen::RowVectorXd& forecast);

// step,node,actual,forecast rows plus a {"mape","nrmse"} summary file.
void write_backtest_csv(const std::string& path, const BacktestReport& report,
                        const std::vector<std::string>& node_ids);
void write_backtest_summary_json(const std::string& path, const BacktestReport& report);

struct ManifestInfo {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // flag, value
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
};

void write_manifest_json(const std::string& path, const ManifestInfo& info);

std::string version_string();

}  // namespace nar

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nar/core_types.hpp"
#include "nar/design_matrix.hpp"
#include "nar/vb_engine.hpp"

namespace nar {

// Median probability rule: keep every factor with phi >= 1/2.
IndicatorSet select_structure(const VariationalState& state);

// Posterior slab means on selected entries, exact zeros elsewhere.
CoefficientTensor plugin_coefficients(const VariationalState& state,
                                      const IndicatorSet& indicators,
                                      const Segmentation& seg);

// Demean, embed, fit, select, package. The returned column_means re-center
// forecasts made from this model.
FitResult fit_model(const TimeSeriesPanel& panel, const Segmentation& seg,
                    int p, const EngineConfig& cfg);

// One-step-ahead forecast: apply B to the demeaned last p rows, add the means
// back.
Eigen::RowVectorXd forecast_one(const TimeSeriesPanel& panel,
                                const CoefficientTensor& B,
                                const Eigen::VectorXd& means);

// Least squares restricted to the masked entries, equation by equation, on a
// demeaned window. With gls, all equations are solved jointly under the given
// noise covariance.
CoefficientTensor restricted_least_squares(const DesignMatrices& dm,
                                           const CoefficientMask& mask,
                                           bool gls = false,
                                           const Eigen::MatrixXd* Sigma = nullptr);

struct BacktestOptions {
  int split_index = 0;             // rows before it train the initial model
  int refit_structure_every = 0;   // 0 = select structure once
  bool gls = false;                // joint refits under the fitted Sigma
};

struct BacktestReport {
  Eigen::MatrixXd actuals;    // steps x m
  Eigen::MatrixXd forecasts;  // steps x m
  int split_index = 0;
  int refit_structure_every = 0;
  bool gls = false;
  std::vector<int> structure_refit_steps;
  double mape_percent = 0.0;
  long mape_excluded = 0;
  double nrmse = 0.0;
};

// Expanding-window one-step-ahead evaluation. Structure comes from a full
// fit on the initial window; each step re-estimates coefficients on the
// window so far (restricted least squares), or reruns the full fit on steps
// selected by refit_structure_every. Window means are recomputed at every
// expansion.
BacktestReport backtest(const TimeSeriesPanel& panel, const Segmentation& seg,
                        int p, const EngineConfig& cfg,
                        const BacktestOptions& opts);

}  // namespace nar

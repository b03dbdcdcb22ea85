#pragma once

#include <Eigen/Dense>
#include <utility>

#include "nar/core_types.hpp"

namespace nar {

// Panel with per-column means removed; means kept for re-centering forecasts.
struct DemeanedPanel {
  TimeSeriesPanel panel;
  Eigen::VectorXd means;  // m
};

DemeanedPanel demean(const TimeSeriesPanel& panel);

// Lag embedding of a panel. Row t of X[l] is panel row (p + t - l - 1), row t
// of Y is panel row (p + t), t = 0..n_eff-1.
struct DesignMatrices {
  Eigen::MatrixXd Y;               // n_eff x m
  std::vector<Eigen::MatrixXd> X;  // p blocks, each n_eff x m
  Dimensions dims;

  // n_eff x (m p), blocks side by side in lag order.
  Eigen::MatrixXd stacked_X() const;
};

DesignMatrices embed(const TimeSeriesPanel& panel, int p);

// Single predictor column X_l^(i) and the complement block X_l^(-i)
// (remaining m-1 columns in node order).
std::pair<Eigen::Ref<const Eigen::VectorXd>, Eigen::MatrixXd> column_views(
    const DesignMatrices& dm, int lag, int node);

}  // namespace nar

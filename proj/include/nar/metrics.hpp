#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "nar/core_types.hpp"

namespace nar {

// Selection quality over scalar coefficient positions, averaged across
// replicates. Rates whose truth class is empty are reported as absent, never
// as zero.
struct SelectionScore {
  std::optional<double> tpr;
  std::optional<double> fpr;
  double ams = 0.0;  // mean count of selected positions
  int replicates = 0;
};

SelectionScore selection_score(const std::vector<CoefficientMask>& truth,
                               const std::vector<CoefficientMask>& selected);

// Mean squared prediction error over every cell of actual vs predicted.
double mspe(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted);

struct MapeResult {
  double percent = 0.0;
  long excluded = 0;  // cells skipped because |actual| < 1e-12
};

MapeResult mape(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted);

// Squared-error form: mean of squared errors divided by the mean of the
// actuals (no square root).
double nrmse(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted);

// Conventional variant, sqrt of the mean squared error over the mean actual.
double nrmse_conventional(const Eigen::MatrixXd& actual,
                          const Eigen::MatrixXd& predicted);

// Flat JSON bundle, absent metrics omitted.
struct MetricsBundle {
  std::optional<double> tpr, fpr, ams, mspe, mape, nrmse;
  std::string to_json_text() const;
};

}  // namespace nar

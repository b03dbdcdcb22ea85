#include "nar/design_matrix.hpp"

namespace nar {

DemeanedPanel demean(const TimeSeriesPanel& panel) {
  panel.validate();
  DemeanedPanel out;
  out.means = panel.values.colwise().mean();
  out.panel = panel;
  out.panel.values = panel.values.rowwise() - out.means.transpose();
  return out;
}

DesignMatrices embed(const TimeSeriesPanel& panel, int p) {
  panel.validate();
  Dimensions dims{panel.cols(), p, panel.rows()};
  dims.validate();
  const int n = dims.n_eff();
  DesignMatrices dm;
  dm.dims = dims;
  dm.Y = panel.values.bottomRows(n);
  dm.X.reserve(static_cast<size_t>(p));
  for (int l = 1; l <= p; ++l)
    dm.X.push_back(panel.values.middleRows(p - l, n));
  return dm;
}

Eigen::MatrixXd DesignMatrices::stacked_X() const {
  const int n = dims.n_eff();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(dims.m) * dims.p);
  for (int l = 0; l < dims.p; ++l)
    out.middleCols(static_cast<Eigen::Index>(l) * dims.m, dims.m) = X[static_cast<size_t>(l)];
  return out;
}

std::pair<Eigen::Ref<const Eigen::VectorXd>, Eigen::MatrixXd> column_views(
    const DesignMatrices& dm, int lag, int node) {
  if (lag < 0 || lag >= dm.dims.p)
    fail(ErrorKind::IndexOutOfRange, "lag index " + std::to_string(lag));
  if (node < 0 || node >= dm.dims.m)
    fail(ErrorKind::IndexOutOfRange, "node index " + std::to_string(node));
  const Eigen::MatrixXd& block = dm.X[static_cast<size_t>(lag)];
  Eigen::MatrixXd complement(block.rows(), dm.dims.m - 1);
  Eigen::Index c = 0;
  for (int j = 0; j < dm.dims.m; ++j)
    if (j != node) complement.col(c++) = block.col(j);
  return {block.col(node), std::move(complement)};
}

}  // namespace nar

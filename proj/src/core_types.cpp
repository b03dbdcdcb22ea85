#include "nar/core_types.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <set>

namespace nar {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OverlappingGroups: return "OverlappingGroups";
    case ErrorKind::IncompleteCover: return "IncompleteCover";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyPanel: return "EmptyPanel";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::SingularPrecision: return "SingularPrecision";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ExplosivePath: return "ExplosivePath";
    case ErrorKind::InfeasiblePattern: return "InfeasiblePattern";
    case ErrorKind::TooManyIndicators: return "TooManyIndicators";
    case ErrorKind::AllCellsExcluded: return "AllCellsExcluded";
    case ErrorKind::ZeroNormalizer: return "ZeroNormalizer";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::RaggedRows: return "RaggedRows";
    case ErrorKind::NonFiniteCell: return "NonFiniteCell";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

void Dimensions::validate() const {
  if (m < 1) fail(ErrorKind::ShapeMismatch, "node count must be positive");
  if (p < 1) fail(ErrorKind::ShapeMismatch, "lag order must be positive");
  if (T <= p) fail(ErrorKind::InsufficientHistory, "panel length must exceed lag order");
}

const char* grouping_kind_name(GroupingKind kind) {
  switch (kind) {
    case GroupingKind::Universal: return "universal";
    case GroupingKind::Segmented: return "segmented";
    case GroupingKind::Nodewise: return "nodewise";
  }
  return "unknown";
}

Segmentation::Segmentation(std::vector<std::vector<int>> groups, int m)
    : groups_(std::move(groups)), m_(m) {
  if (m_ < 1) fail(ErrorKind::ShapeMismatch, "node count must be positive");
  if (groups_.empty()) fail(ErrorKind::IncompleteCover, "no groups given");
  group_of_.assign(static_cast<size_t>(m_), -1);
  for (size_t k = 0; k < groups_.size(); ++k) {
    auto& g = groups_[k];
    if (g.empty()) fail(ErrorKind::EmptyGroup, "group " + std::to_string(k) + " is empty");
    std::sort(g.begin(), g.end());
    for (int node : g) {
      if (node < 0 || node >= m_)
        fail(ErrorKind::IndexOutOfRange, "node " + std::to_string(node) + " outside panel");
      if (group_of_[static_cast<size_t>(node)] != -1)
        fail(ErrorKind::OverlappingGroups, "node " + std::to_string(node) + " in two groups");
      group_of_[static_cast<size_t>(node)] = static_cast<int>(k);
    }
  }
  for (int node = 0; node < m_; ++node)
    if (group_of_[static_cast<size_t>(node)] == -1)
      fail(ErrorKind::IncompleteCover, "node " + std::to_string(node) + " not covered");
}

Segmentation Segmentation::universal(int m) {
  std::vector<int> all(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) all[static_cast<size_t>(i)] = i;
  return Segmentation({all}, m);
}

Segmentation Segmentation::nodewise(int m) {
  std::vector<std::vector<int>> groups;
  groups.reserve(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) groups.push_back({i});
  return Segmentation(std::move(groups), m);
}

const std::vector<int>& Segmentation::group(int k) const {
  if (k < 0 || k >= group_count())
    fail(ErrorKind::IndexOutOfRange, "group index " + std::to_string(k));
  return groups_[static_cast<size_t>(k)];
}

GroupingKind Segmentation::kind() const {
  if (group_count() == 1) return GroupingKind::Universal;
  if (group_count() == m_) return GroupingKind::Nodewise;
  return GroupingKind::Segmented;
}

int Segmentation::group_of(int node) const {
  if (node < 0 || node >= m_)
    fail(ErrorKind::IndexOutOfRange, "node index " + std::to_string(node));
  return group_of_[static_cast<size_t>(node)];
}

std::vector<int> Segmentation::derived_group(int node, int k) const {
  if (node < 0 || node >= m_)
    fail(ErrorKind::IndexOutOfRange, "node index " + std::to_string(node));
  const auto& g = group(k);
  std::vector<int> out;
  out.reserve(g.size());
  for (int member : g)
    if (member != node) out.push_back(member);
  return out;
}

void TimeSeriesPanel::validate() const {
  if (values.rows() == 0 || values.cols() == 0)
    fail(ErrorKind::EmptyPanel, "panel has no data");
  if (!node_ids.empty() && node_ids.size() != static_cast<size_t>(values.cols()))
    fail(ErrorKind::ShapeMismatch, "node id count differs from column count");
  if (!node_types.empty()) {
    if (node_types.size() != static_cast<size_t>(values.cols()))
      fail(ErrorKind::ShapeMismatch, "node type count differs from column count");
    for (const auto& t : node_types)
      if (!valid_node_type(t))
        fail(ErrorKind::ParseError, "unknown node type '" + t + "'");
  }
  if (!values.allFinite()) fail(ErrorKind::NonFiniteCell, "panel contains a non-finite cell");
}

bool valid_node_type(const std::string& type) {
  return type == "municipal" || type == "industrial" || type == "border" ||
         type == "other";
}

Eigen::MatrixXd CoefficientTensor::stacked() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p_) * m_, m_);
  for (int l = 0; l < p_; ++l) out.middleRows(static_cast<Eigen::Index>(l) * m_, m_) = lags_[static_cast<size_t>(l)];
  return out;
}

CoefficientTensor CoefficientTensor::embedded(int new_p) const {
  if (new_p < p_) fail(ErrorKind::ShapeMismatch, "cannot shrink lag order");
  CoefficientTensor out(new_p, m_);
  for (int l = 0; l < p_; ++l) out.lag(l) = lags_[static_cast<size_t>(l)];
  return out;
}

long CoefficientTensor::nonzero_count() const {
  long n = 0;
  for (const auto& B : lags_) n += (B.array() != 0.0).count();
  return n;
}

size_t IndicatorSet::own_index(int l, int i) const {
  if (l < 0 || l >= p_ || i < 0 || i >= m_)
    fail(ErrorKind::IndexOutOfRange, "indicator index out of range");
  return static_cast<size_t>(l) * m_ + i;
}

size_t IndicatorSet::group_index(int l, int i, int k) const {
  if (l < 0 || l >= p_ || i < 0 || i >= m_ || k < 0 || k >= g_)
    fail(ErrorKind::IndexOutOfRange, "indicator index out of range");
  return (static_cast<size_t>(l) * m_ + i) * g_ + k;
}

IndicatorSet IndicatorSet::embedded(int new_p) const {
  if (new_p < p_) fail(ErrorKind::ShapeMismatch, "cannot shrink lag order");
  IndicatorSet out(new_p, m_, g_);
  for (int l = 0; l < p_; ++l)
    for (int i = 0; i < m_; ++i) {
      out.set_gamma(l, i, gamma(l, i) != 0);
      for (int k = 0; k < g_; ++k) out.set_eta(l, i, k, eta(l, i, k) != 0);
    }
  return out;
}

long CoefficientMask::count() const {
  long n = 0;
  for (auto v : active) n += v ? 1 : 0;
  return n;
}

CoefficientMask coefficient_mask(const IndicatorSet& ind, const Segmentation& seg) {
  if (ind.m() != seg.node_count() || ind.g() != seg.group_count())
    fail(ErrorKind::ShapeMismatch, "indicators do not match segmentation");
  CoefficientMask mask(ind.p(), ind.m());
  for (int l = 0; l < ind.p(); ++l)
    for (int i = 0; i < ind.m(); ++i) {
      if (ind.gamma(l, i)) mask.set(l, i, i, true);
      for (int k = 0; k < ind.g(); ++k) {
        if (!ind.eta(l, i, k)) continue;
        for (int j : seg.derived_group(i, k)) mask.set(l, i, j, true);
      }
    }
  return mask;
}

CoefficientMask nonzero_mask(const CoefficientTensor& B, double tol) {
  CoefficientMask mask(B.p(), B.m());
  for (int l = 0; l < B.p(); ++l)
    for (int i = 0; i < B.m(); ++i)
      for (int j = 0; j < B.m(); ++j)
        if (std::abs(B.lag(l)(i, j)) > tol) mask.set(l, i, j, true);
  return mask;
}

void HyperParams::validate() const {
  if (!(pi1 > 0.0 && pi1 < 1.0)) fail(ErrorKind::InvalidConfig, "pi1 outside (0,1)");
  if (!(pi2 > 0.0 && pi2 < 1.0)) fail(ErrorKind::InvalidConfig, "pi2 outside (0,1)");
  if (!(sigma2_B > 0.0) || !std::isfinite(sigma2_B))
    fail(ErrorKind::InvalidConfig, "sigma2_B must be positive");
  if (Sigma.rows() != Sigma.cols() || Sigma.rows() == 0)
    fail(ErrorKind::ShapeMismatch, "Sigma must be square");
  if (!Sigma.allFinite()) fail(ErrorKind::NonFinite, "Sigma has non-finite entries");
  if (!Sigma.isApprox(Sigma.transpose(), 1e-12))
    fail(ErrorKind::NotPositiveDefinite, "Sigma is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::NotPositiveDefinite, "Sigma Cholesky failed");
}

GroupFactor& VariationalState::group(int l, int i, int k) {
  return groups[(static_cast<size_t>(l) * m + i) * g + k];
}

const GroupFactor& VariationalState::group(int l, int i, int k) const {
  return groups[(static_cast<size_t>(l) * m + i) * g + k];
}

Eigen::MatrixXd VariationalState::mean_coefficients(const Segmentation& seg) const {
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p) * m, m);
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i) {
      Eigen::Index row = static_cast<Eigen::Index>(l) * m + i;
      mean(row, i) = phi1(l, i) * mu1(l, i);
      for (int k = 0; k < g; ++k) {
        const GroupFactor& f = group(l, i, k);
        if (f.mu.size() == 0) continue;
        auto cols = seg.derived_group(i, k);
        for (size_t idx = 0; idx < cols.size(); ++idx)
          mean(row, cols[idx]) = f.phi * f.mu(static_cast<Eigen::Index>(idx));
      }
    }
  return mean;
}

}  // namespace nar

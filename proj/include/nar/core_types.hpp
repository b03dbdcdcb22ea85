#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "nar/errors.hpp"

namespace nar {

// Problem sizes. T is the raw panel length, n_eff = T - p the usable rows
// after lag embedding.
struct Dimensions {
  int m = 0;  // nodes
  int p = 0;  // lags
  int T = 0;  // panel rows

  int n_eff() const { return T - p; }
  void validate() const;
};

enum class GroupingKind { Universal, Segmented, Nodewise };

const char* grouping_kind_name(GroupingKind kind);

// Disjoint cover of {0, ..., m-1}. Groups are stored sorted; the kind is
// derived from the group count: 1 group = Universal, m groups = Nodewise,
// anything else = Segmented.
class Segmentation {
 public:
  Segmentation() = default;
  Segmentation(std::vector<std::vector<int>> groups, int m);

  static Segmentation universal(int m);
  static Segmentation nodewise(int m);

  int node_count() const { return m_; }
  int group_count() const { return static_cast<int>(groups_.size()); }
  const std::vector<int>& group(int k) const;
  const std::vector<std::vector<int>>& groups() const { return groups_; }
  GroupingKind kind() const;
  int group_of(int node) const;

  // s_k with node removed; equals s_k when node is not a member. May be empty
  // (node alone in its own group), callers skip empty results.
  std::vector<int> derived_group(int node, int k) const;

  bool operator==(const Segmentation& other) const {
    return m_ == other.m_ && groups_ == other.groups_;
  }

 private:
  std::vector<std::vector<int>> groups_;
  std::vector<int> group_of_;  // size m, node -> group index
  int m_ = 0;
};

// Observed series, rows oldest first. node_types is empty or one category per
// node (municipal, industrial, border, other).
struct TimeSeriesPanel {
  Eigen::MatrixXd values;  // T x m
  std::vector<std::string> node_ids;
  std::vector<std::string> node_types;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
  void validate() const;
};

bool valid_node_type(const std::string& type);

// Lag coefficient matrices B_1, ..., B_p. lag(l)(i, j) is the effect of node
// i's lag-(l+1) value on node j.
class CoefficientTensor {
 public:
  CoefficientTensor() = default;
  CoefficientTensor(int p, int m)
      : p_(p), m_(m), lags_(static_cast<size_t>(p), Eigen::MatrixXd::Zero(m, m)) {}

  int p() const { return p_; }
  int m() const { return m_; }
  Eigen::MatrixXd& lag(int l) { return lags_.at(static_cast<size_t>(l)); }
  const Eigen::MatrixXd& lag(int l) const { return lags_.at(static_cast<size_t>(l)); }

  // (m p) x m, lag blocks stacked row-wise, matching the stacked design matrix.
  Eigen::MatrixXd stacked() const;

  // Zero-pad to new_p lags (new_p >= p).
  CoefficientTensor embedded(int new_p) const;

  long nonzero_count() const;

 private:
  int p_ = 0;
  int m_ = 0;
  std::vector<Eigen::MatrixXd> lags_;
};

// Binary selection state. gamma(l, i) flags the own-lag coefficient of node i
// at lag l+1; eta(l, i, k) flags the block of row i over derived group
// s_k \ {i}.
class IndicatorSet {
 public:
  IndicatorSet() = default;
  IndicatorSet(int p, int m, int g)
      : p_(p), m_(m), g_(g),
        gamma_(static_cast<size_t>(p) * m, 0),
        eta_(static_cast<size_t>(p) * m * g, 0) {}

  int p() const { return p_; }
  int m() const { return m_; }
  int g() const { return g_; }

  std::uint8_t gamma(int l, int i) const { return gamma_[own_index(l, i)]; }
  void set_gamma(int l, int i, bool v) { gamma_[own_index(l, i)] = v ? 1 : 0; }
  std::uint8_t eta(int l, int i, int k) const { return eta_[group_index(l, i, k)]; }
  void set_eta(int l, int i, int k, bool v) { eta_[group_index(l, i, k)] = v ? 1 : 0; }

  // Zero-pad to new_p lags.
  IndicatorSet embedded(int new_p) const;

  bool operator==(const IndicatorSet& other) const {
    return p_ == other.p_ && m_ == other.m_ && g_ == other.g_ &&
           gamma_ == other.gamma_ && eta_ == other.eta_;
  }

 private:
  size_t own_index(int l, int i) const;
  size_t group_index(int l, int i, int k) const;

  int p_ = 0, m_ = 0, g_ = 0;
  std::vector<std::uint8_t> gamma_;
  std::vector<std::uint8_t> eta_;
};

// Scalar coefficient activity map, one flag per (lag, source, target).
struct CoefficientMask {
  int p = 0, m = 0;
  std::vector<std::uint8_t> active;  // p*m*m, lag-major then source then target

  CoefficientMask() = default;
  CoefficientMask(int p_in, int m_in)
      : p(p_in), m(m_in), active(static_cast<size_t>(p_in) * m_in * m_in, 0) {}

  std::uint8_t at(int l, int i, int j) const {
    return active[(static_cast<size_t>(l) * m + i) * m + j];
  }
  void set(int l, int i, int j, bool v) {
    active[(static_cast<size_t>(l) * m + i) * m + j] = v ? 1 : 0;
  }
  long count() const;
};

// Expand indicators to scalar positions: gamma hits the diagonal, eta hits the
// derived-group columns of its row.
CoefficientMask coefficient_mask(const IndicatorSet& ind, const Segmentation& seg);

// Mask of exactly the nonzero entries.
CoefficientMask nonzero_mask(const CoefficientTensor& B, double tol = 0.0);

// Model-level parameters updated by the M-step.
struct HyperParams {
  double pi1 = 0.0;        // own-lag inclusion probability
  double pi2 = 0.0;        // group inclusion probability
  Eigen::MatrixXd Sigma;   // m x m noise covariance
  double sigma2_B = 0.0;   // slab variance

  void validate() const;  // pi in (0,1), sigma2_B > 0, Sigma symmetric PD
};

// One variational factor for a coefficient block over a derived group.
struct GroupFactor {
  double phi = 0.0;
  Eigen::VectorXd mu;   // |s~| slab mean
  Eigen::MatrixXd cov;  // |s~| x |s~| slab covariance
};

// Mean-field state. Own-lag factors are stored as p x m arrays, group factors
// flattened over (lag, node, group); empty derived groups keep phi = 0 and
// zero-size blocks.
struct VariationalState {
  int p = 0, m = 0, g = 0;
  Eigen::ArrayXXd phi1;  // p x m
  Eigen::ArrayXXd mu1;   // p x m
  Eigen::ArrayXXd var1;  // p x m
  std::vector<GroupFactor> groups;  // p*m*g

  GroupFactor& group(int l, int i, int k);
  const GroupFactor& group(int l, int i, int k) const;

  // E[B] as a stacked (m p) x m matrix; factors occupy disjoint entries.
  Eigen::MatrixXd mean_coefficients(const Segmentation& seg) const;
};

// Everything a fit produces: selected structure, plug-in coefficients,
// fitted hyperparameters, and the optimization record. column_means holds the
// training means subtracted before fitting, needed to re-center forecasts.
struct FitResult {
  VariationalState state;
  HyperParams hyperparams;
  IndicatorSet indicators;
  CoefficientTensor coefficients;
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd column_means;
};

}  // namespace nar

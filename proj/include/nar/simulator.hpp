#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nar/core_types.hpp"

namespace nar {

enum class CovKind { Identity, Toeplitz };

const char* cov_kind_name(CovKind kind);
CovKind cov_kind_from_name(const std::string& name);

// Everything needed to regenerate a benchmark data set.
struct ScenarioSpec {
  std::string name;             // m10UG, m20SG, ...
  int m = 0;
  int p = 0;                    // order of the generating model
  int T = 0;
  Segmentation seg;             // truth grouping, also used when fitting
  std::vector<int> active_lags; // 1-based lags carrying nonzeros
  int nonzero_count = 0;
  CovKind cov = CovKind::Identity;
  Eigen::VectorXd cov_diagonal; // m noise variances

  void validate() const;
  static ScenarioSpec from_json_text(const std::string& text);
  std::string to_json_text() const;
};

// m10/m20/m50 x UG/SG/NG presets.
ScenarioSpec preset_scenario(const std::string& name, CovKind cov);
std::vector<std::string> preset_scenario_names();

// Identity or cov_{ii'} = 0.4^{|i-i'|} sqrt(d_i d_i') with the preset diagonal.
Eigen::MatrixXd build_covariance(const ScenarioSpec& spec);

struct GroundTruth {
  CoefficientTensor coefficients;
  IndicatorSet indicators;
  double spectral_radius = 0.0;  // after rescaling
  double rescale = 1.0;          // common factor applied to every lag
};

// Place the scenario's nonzero pattern, draw magnitudes from +-U[0.2, 0.8],
// then shrink all lags by one common factor until the companion spectral
// radius is at most 0.9.
GroundTruth build_coefficients(const ScenarioSpec& spec, std::mt19937_64& rng);

struct SimulatedData {
  TimeSeriesPanel panel;   // T x m retained rows
  GroundTruth truth;
  Eigen::MatrixXd noise;   // T x m innovations behind the retained rows
};

// Simulate the VAR from a zero state with 200 burn-in rows. All randomness
// comes from the single seed.
SimulatedData generate(const ScenarioSpec& spec, std::uint64_t seed);

// Companion-matrix spectral radius of a coefficient tensor.
double spectral_radius(const CoefficientTensor& B);

// Iterate y_t = sum_l y_{t-l} B_l + noise rows. Throws ExplosivePath when any
// value passes 1e8 in magnitude.
Eigen::MatrixXd iterate_var(const CoefficientTensor& B,
                            const Eigen::MatrixXd& noise, int burn_in);

// Deterministic per-replicate seed stream (splitmix64 over the root seed).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

}  // namespace nar

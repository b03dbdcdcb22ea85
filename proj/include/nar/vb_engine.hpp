#pragma once

#include <string>
#include <vector>

#include "nar/core_types.hpp"
#include "nar/design_matrix.hpp"

namespace nar {

struct EngineConfig {
  double tol = 1e-6;          // relative ELBO change stopping threshold
  int max_iters = 2000;
  double pi_init = 0.01;      // initial inclusion probabilities
  double sigma2_B_init = 1.0; // initial slab variance
  double ridge = 1e-4;        // relative ridge for the least-squares warm start

  void validate() const;
  static EngineConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct InitializedModel {
  VariationalState state;
  HyperParams hyperparams;
};

// Warm start: ridge least squares seeds the slab means, phi = pi_init,
// Sigma = diag(sample variance of Y)/2, sigma2_B = sigma2_B_init.
InitializedModel initialize(const DesignMatrices& dm, const Segmentation& seg,
                            const EngineConfig& cfg);

// Single-factor coordinate updates. Recompute the residual context from the
// state, so standalone calls match the in-sweep updates exactly.
void update_own(VariationalState& state, const HyperParams& hp,
                const DesignMatrices& dm, const Segmentation& seg, int lag,
                int node);
void update_group(VariationalState& state, const HyperParams& hp,
                  const DesignMatrices& dm, const Segmentation& seg, int lag,
                  int node, int k);

// One full deterministic pass: lags outer, nodes inner, own factor then each
// nonempty derived group.
void e_step_sweep(VariationalState& state, const HyperParams& hp,
                  const DesignMatrices& dm, const Segmentation& seg);

// Closed-form hyperparameter update. previous supplies fallbacks when an
// update is degenerate (no group factors, vanishing inclusion mass).
HyperParams m_step(const VariationalState& state, const DesignMatrices& dm,
                   const Segmentation& seg, const HyperParams& previous);

// Evidence lower bound with all constants kept, so it is comparable against
// the exact log evidence.
double elbo(const VariationalState& state, const HyperParams& hp,
            const DesignMatrices& dm, const Segmentation& seg);

struct FitOutput {
  VariationalState state;
  HyperParams hyperparams;
  std::vector<double> elbo_trace;  // entry 0 is the initial bound
  int iterations = 0;
  bool converged = false;
};

// Alternate e_step_sweep and m_step until the ELBO improvement falls below
// tol * max(1, |previous|). Hitting max_iters leaves converged = false.
FitOutput fit(const DesignMatrices& dm, const Segmentation& seg,
              const EngineConfig& cfg);

// Same loop with hyperparameters frozen (no M-step), for posterior
// comparisons against enumeration.
FitOutput fit_fixed_hyperparams(const DesignMatrices& dm,
                                const Segmentation& seg, const HyperParams& hp,
                                const EngineConfig& cfg);

// Stable logistic helpers shared by the engine and the enumeration oracle
// checks.
double logit(double x);
double inv_logit(double z);

}  // namespace nar

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nar/core_types.hpp"
#include "nar/design_matrix.hpp"

namespace nar {

// Indicator-wise exact posterior for fixed hyperparameters, obtained by
// enumerating every indicator configuration and integrating the slab
// coefficients in closed form. Intractable beyond 16 factors by design; this
// exists to cross-check the variational engine on tiny problems.
struct ExactPosterior {
  double log_evidence = 0.0;
  Eigen::ArrayXXd gamma_probs;    // p x m marginal inclusion probabilities
  std::vector<double> eta_probs;  // p*m*g flattened (lag, node, group), empty groups 0
  std::vector<double> config_log_probs;  // normalized, one per configuration
  int factor_count = 0;

  double eta_prob(int l, int i, int k, int m, int g) const {
    return eta_probs[(static_cast<size_t>(l) * m + i) * g + k];
  }
};

ExactPosterior exact_posterior(const DesignMatrices& dm, const Segmentation& seg,
                               const HyperParams& hp);

struct Agreement {
  double max_abs_diff = 0.0;  // over all factor marginals
  int disagreements = 0;      // factors whose 1/2-thresholded selection differs
  bool selections_match = false;
};

Agreement agreement(const ExactPosterior& exact, const VariationalState& state,
                    const Segmentation& seg);

}  // namespace nar

#include "nar/reference_oracle.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

namespace nar {

namespace {

struct Factor {
  bool own = false;
  int l = 0, i = 0, k = 0;
  std::vector<int> cols;  // response columns of the block
};

double log_sum_exp(const std::vector<double>& v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

}  // namespace

ExactPosterior exact_posterior(const DesignMatrices& dm, const Segmentation& seg,
                               const HyperParams& hp) {
  dm.dims.validate();
  hp.validate();
  if (seg.node_count() != dm.dims.m)
    fail(ErrorKind::ShapeMismatch, "segmentation does not match panel width");
  const int p = dm.dims.p, m = dm.dims.m, g = seg.group_count();
  const int n = dm.dims.n_eff();

  // own factors first (lag-major, node-minor), then nonempty group factors
  std::vector<Factor> factors;
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i) factors.push_back({true, l, i, 0, {i}});
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < g; ++k) {
        auto cols = seg.derived_group(i, k);
        if (cols.empty()) continue;
        factors.push_back({false, l, i, k, std::move(cols)});
      }
  const int F = static_cast<int>(factors.size());
  if (F > 16)
    fail(ErrorKind::TooManyIndicators,
         std::to_string(F) + " indicators exceed the enumeration bound of 16");

  Eigen::LLT<Eigen::MatrixXd> llt(hp.Sigma);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::NotPositiveDefinite, "noise covariance is not positive definite");
  const Eigen::MatrixXd Sinv =
      llt.solve(Eigen::MatrixXd::Identity(m, m));
  const double logdet_Sigma = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

  // cross-grams between the factors' predictor columns, and x' Y Sinv rows
  Eigen::MatrixXd xgram(F, F);
  Eigen::MatrixXd hmat(F, m);  // hmat(f, c) = x_f' Y Sinv e_c
  for (int a = 0; a < F; ++a) {
    const auto& xa = dm.X[static_cast<size_t>(factors[static_cast<size_t>(a)].l)]
                         .col(factors[static_cast<size_t>(a)].i);
    for (int b = 0; b < F; ++b) {
      const auto& xb = dm.X[static_cast<size_t>(factors[static_cast<size_t>(b)].l)]
                           .col(factors[static_cast<size_t>(b)].i);
      xgram(a, b) = xa.dot(xb);
    }
    hmat.row(a) = (xa.transpose() * dm.Y) * Sinv;
  }

  const double base = -0.5 * n * m * std::log(2.0 * M_PI) -
                      0.5 * n * logdet_Sigma -
                      0.5 * Sinv.cwiseProduct(dm.Y.transpose() * dm.Y).sum();
  const double log_pi1 = std::log(hp.pi1), log_1m_pi1 = std::log1p(-hp.pi1);
  const double log_pi2 = std::log(hp.pi2), log_1m_pi2 = std::log1p(-hp.pi2);

  const size_t n_configs = size_t{1} << F;
  std::vector<double> log_weights(n_configs);
  std::vector<std::pair<int, int>> scalars;  // (factor, response column)
  for (size_t cfg = 0; cfg < n_configs; ++cfg) {
    double prior = 0.0;
    scalars.clear();
    for (int f = 0; f < F; ++f) {
      const bool active = (cfg >> f) & 1;
      const Factor& fac = factors[static_cast<size_t>(f)];
      if (fac.own)
        prior += active ? log_pi1 : log_1m_pi1;
      else
        prior += active ? log_pi2 : log_1m_pi2;
      if (active)
        for (int c : fac.cols) scalars.emplace_back(f, c);
    }
    const int d = static_cast<int>(scalars.size());
    double logw = base + prior;
    if (d > 0) {
      Eigen::MatrixXd P(d, d);
      Eigen::VectorXd h(d);
      for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b)
          P(a, b) = Sinv(scalars[static_cast<size_t>(a)].second,
                         scalars[static_cast<size_t>(b)].second) *
                    xgram(scalars[static_cast<size_t>(a)].first,
                          scalars[static_cast<size_t>(b)].first);
        P(a, a) += 1.0 / hp.sigma2_B;
        h(a) = hmat(scalars[static_cast<size_t>(a)].first,
                    scalars[static_cast<size_t>(a)].second);
      }
      Eigen::LLT<Eigen::MatrixXd> pllt(P);
      if (pllt.info() != Eigen::Success)
        fail(ErrorKind::SingularPrecision, "posterior precision not positive definite");
      const double logdet_P =
          2.0 * pllt.matrixLLT().diagonal().array().log().sum();
      logw += -0.5 * d * std::log(hp.sigma2_B) - 0.5 * logdet_P +
              0.5 * h.dot(pllt.solve(h));
    }
    log_weights[cfg] = logw;
  }

  ExactPosterior out;
  out.factor_count = F;
  out.log_evidence = log_sum_exp(log_weights);
  out.config_log_probs.resize(n_configs);
  for (size_t cfg = 0; cfg < n_configs; ++cfg)
    out.config_log_probs[cfg] = log_weights[cfg] - out.log_evidence;

  out.gamma_probs = Eigen::ArrayXXd::Zero(p, m);
  out.eta_probs.assign(static_cast<size_t>(p) * m * g, 0.0);
  for (int f = 0; f < F; ++f) {
    std::vector<double> on;
    on.reserve(n_configs / 2);
    for (size_t cfg = 0; cfg < n_configs; ++cfg)
      if ((cfg >> f) & 1) on.push_back(log_weights[cfg]);
    const double prob = std::exp(log_sum_exp(on) - out.log_evidence);
    const Factor& fac = factors[static_cast<size_t>(f)];
    if (fac.own)
      out.gamma_probs(fac.l, fac.i) = prob;
    else
      out.eta_probs[(static_cast<size_t>(fac.l) * m + fac.i) * g + fac.k] = prob;
  }
  return out;
}

Agreement agreement(const ExactPosterior& exact, const VariationalState& state,
                    const Segmentation& seg) {
  if (exact.gamma_probs.rows() != state.p || exact.gamma_probs.cols() != state.m ||
      seg.group_count() != state.g)
    fail(ErrorKind::ShapeMismatch, "posterior summaries have different shapes");
  Agreement out;
  for (int l = 0; l < state.p; ++l)
    for (int i = 0; i < state.m; ++i) {
      const double pe = exact.gamma_probs(l, i);
      const double pv = state.phi1(l, i);
      out.max_abs_diff = std::max(out.max_abs_diff, std::abs(pe - pv));
      if ((pe >= 0.5) != (pv >= 0.5)) ++out.disagreements;
      for (int k = 0; k < state.g; ++k) {
        const GroupFactor& f = state.group(l, i, k);
        if (f.mu.size() == 0) continue;
        const double ge = exact.eta_prob(l, i, k, state.m, state.g);
        out.max_abs_diff = std::max(out.max_abs_diff, std::abs(ge - f.phi));
        if ((ge >= 0.5) != (f.phi >= 0.5)) ++out.disagreements;
      }
    }
  out.selections_match = out.disagreements == 0;
  return out;
}

}  // namespace nar

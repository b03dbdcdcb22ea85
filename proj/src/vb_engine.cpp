#include "nar/vb_engine.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"

namespace nar {

double logit(double x) { return std::log(x) - std::log1p(-x); }

double inv_logit(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

constexpr double kProbFloor = 1e-12;

double clamp_prob(double x) {
  return std::min(1.0 - kProbFloor, std::max(kProbFloor, x));
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& S, ErrorKind kind,
                            const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) fail(kind, what);
  return llt.solve(Eigen::MatrixXd::Identity(S.rows(), S.cols()));
}

double log_det_spd(const Eigen::MatrixXd& S, ErrorKind kind, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) fail(kind, what);
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

void check_problem(const VariationalState& st, const DesignMatrices& dm,
                   const Segmentation& seg) {
  if (st.m != dm.dims.m || st.p != dm.dims.p || st.g != seg.group_count() ||
      seg.node_count() != dm.dims.m)
    fail(ErrorKind::ShapeMismatch, "state, design, and segmentation disagree");
}

// Residual bookkeeping for one sweep. Sigma_inv is refreshed once per sweep;
// mean_B and R are patched after every factor update.
struct SweepContext {
  Eigen::MatrixXd Sigma_inv;  // m x m
  Eigen::MatrixXd mean_B;     // (mp) x m
  Eigen::MatrixXd R;          // n x m, Y - X mean_B
  Eigen::ArrayXXd xx;         // p x m squared column norms
};

SweepContext make_context(const VariationalState& st, const HyperParams& hp,
                          const DesignMatrices& dm, const Segmentation& seg) {
  const int m = dm.dims.m, p = dm.dims.p;
  SweepContext ctx;
  ctx.Sigma_inv = inverse_spd(hp.Sigma, ErrorKind::NotPositiveDefinite,
                              "noise covariance is not positive definite");
  ctx.mean_B = st.mean_coefficients(seg);
  ctx.R = dm.Y;
  for (int l = 0; l < p; ++l)
    ctx.R.noalias() -= dm.X[static_cast<size_t>(l)] *
                       ctx.mean_B.middleRows(static_cast<Eigen::Index>(l) * m, m);
  ctx.xx.resize(p, m);
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i)
      ctx.xx(l, i) = dm.X[static_cast<size_t>(l)].col(i).squaredNorm();
  return ctx;
}

// u = x' R for the current (lag, node) predictor; patched in place as factors
// move so later updates in the same pass see the current residual.
void update_own_impl(VariationalState& st, const HyperParams& hp,
                     const DesignMatrices& dm, SweepContext& ctx, int l, int i,
                     Eigen::RowVectorXd& u) {
  const int m = dm.dims.m;
  const double xxv = ctx.xx(l, i);
  const double a = xxv * ctx.Sigma_inv(i, i);
  const double V = 1.0 / (a + 1.0 / hp.sigma2_B);
  const double mean_old = st.phi1(l, i) * st.mu1(l, i);
  const double b = u.dot(ctx.Sigma_inv.col(i)) + a * mean_old;
  const double mu = V * b;
  const double z = logit(hp.pi1) + 0.5 * std::log(V / hp.sigma2_B) + 0.5 * mu * b;
  const double phi = inv_logit(z);
  if (!std::isfinite(mu) || !std::isfinite(phi))
    fail(ErrorKind::NonFinite, "own-lag update diverged at lag " +
                                   std::to_string(l + 1) + ", node " +
                                   std::to_string(i + 1));
  st.phi1(l, i) = phi;
  st.mu1(l, i) = mu;
  st.var1(l, i) = V;
  const double delta = phi * mu - mean_old;
  ctx.mean_B(static_cast<Eigen::Index>(l) * m + i, i) = phi * mu;
  if (delta != 0.0) {
    ctx.R.col(i).noalias() -= dm.X[static_cast<size_t>(l)].col(i) * delta;
    u(i) -= xxv * delta;
  }
}

void update_group_impl(VariationalState& st, const HyperParams& hp,
                       const DesignMatrices& dm, const Segmentation& seg,
                       SweepContext& ctx, int l, int i, int k,
                       Eigen::RowVectorXd& u) {
  const auto cols = seg.derived_group(i, k);
  if (cols.empty()) return;
  const int m = dm.dims.m;
  const int s = static_cast<int>(cols.size());
  const double xxv = ctx.xx(l, i);
  GroupFactor& f = st.group(l, i, k);

  Eigen::MatrixXd A(s, s);
  for (int a = 0; a < s; ++a)
    for (int b = 0; b < s; ++b)
      A(a, b) = xxv * ctx.Sigma_inv(cols[static_cast<size_t>(a)],
                                    cols[static_cast<size_t>(b)]);
  A.diagonal().array() += 1.0 / hp.sigma2_B;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::SingularPrecision, "group precision not positive definite at lag " +
                                           std::to_string(l + 1) + ", node " +
                                           std::to_string(i + 1));

  Eigen::VectorXd mean_old = f.phi * f.mu;  // s, current E[B] on the block
  Eigen::VectorXd b(s);
  for (int j = 0; j < s; ++j) {
    const int c = cols[static_cast<size_t>(j)];
    double v = u.dot(ctx.Sigma_inv.col(c));
    for (int a = 0; a < s; ++a)
      v += xxv * mean_old(a) * ctx.Sigma_inv(cols[static_cast<size_t>(a)], c);
    b(j) = v;
  }
  Eigen::VectorXd mu2 = llt.solve(b);
  Eigen::MatrixXd cov2 = llt.solve(Eigen::MatrixXd::Identity(s, s));
  const double logdet_cov = -2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double z = logit(hp.pi2) - 0.5 * s * std::log(hp.sigma2_B) +
                   0.5 * logdet_cov + 0.5 * mu2.dot(b);
  const double phi = inv_logit(z);
  if (!mu2.allFinite() || !std::isfinite(phi))
    fail(ErrorKind::NonFinite, "group update diverged at lag " +
                                   std::to_string(l + 1) + ", node " +
                                   std::to_string(i + 1) + ", group " +
                                   std::to_string(k + 1));

  Eigen::VectorXd delta = phi * mu2 - mean_old;
  f.phi = phi;
  f.mu = std::move(mu2);
  f.cov = std::move(cov2);
  const Eigen::Index row = static_cast<Eigen::Index>(l) * m + i;
  const auto& x = dm.X[static_cast<size_t>(l)].col(i);
  for (int j = 0; j < s; ++j) {
    const int c = cols[static_cast<size_t>(j)];
    ctx.mean_B(row, c) = f.phi * f.mu(j);
    if (delta(j) != 0.0) {
      ctx.R.col(c).noalias() -= x * delta(j);
      u(c) -= xxv * delta(j);
    }
  }
}

void sweep_inplace(VariationalState& st, const HyperParams& hp,
                   const DesignMatrices& dm, const Segmentation& seg,
                   SweepContext& ctx) {
  const int p = dm.dims.p, m = dm.dims.m, g = seg.group_count();
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i) {
      Eigen::RowVectorXd u =
          dm.X[static_cast<size_t>(l)].col(i).transpose() * ctx.R;
      update_own_impl(st, hp, dm, ctx, l, i, u);
      for (int k = 0; k < g; ++k)
        update_group_impl(st, hp, dm, seg, ctx, l, i, k, u);
    }
}

// E_q[(Y - XB)'(Y - XB)] = R'R plus per-factor variance corrections.
Eigen::MatrixXd expected_gram(const VariationalState& st,
                              const DesignMatrices& dm, const Segmentation& seg) {
  const int p = dm.dims.p, m = dm.dims.m, g = seg.group_count();
  Eigen::MatrixXd mean_B = st.mean_coefficients(seg);
  Eigen::MatrixXd R = dm.Y;
  for (int l = 0; l < p; ++l)
    R.noalias() -= dm.X[static_cast<size_t>(l)] *
                   mean_B.middleRows(static_cast<Eigen::Index>(l) * m, m);
  Eigen::MatrixXd Sq = R.transpose() * R;
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i) {
      const double xxv = dm.X[static_cast<size_t>(l)].col(i).squaredNorm();
      const double phi = st.phi1(l, i), mu = st.mu1(l, i), V = st.var1(l, i);
      Sq(i, i) += xxv * (phi * (V + mu * mu) - phi * mu * phi * mu);
      for (int k = 0; k < g; ++k) {
        const GroupFactor& f = st.group(l, i, k);
        if (f.mu.size() == 0) continue;
        const auto cols = seg.derived_group(i, k);
        const int s = static_cast<int>(cols.size());
        // phi cov + phi (1 - phi) mu mu'
        for (int a = 0; a < s; ++a)
          for (int b = 0; b < s; ++b)
            Sq(cols[static_cast<size_t>(a)], cols[static_cast<size_t>(b)]) +=
                xxv * (f.phi * f.cov(a, b) +
                       f.phi * (1.0 - f.phi) * f.mu(a) * f.mu(b));
      }
    }
  return Sq;
}

// phi log(pi/phi) + (1 - phi) log((1-pi)/(1-phi)), with 0 log 0 = 0.
double bernoulli_term(double phi, double pi) {
  double t = 0.0;
  if (phi > 0.0) t += phi * (std::log(pi) - std::log(phi));
  if (phi < 1.0) t += (1.0 - phi) * (std::log1p(-pi) - std::log1p(-phi));
  return t;
}

FitOutput run_em(VariationalState state, HyperParams hp,
                 const DesignMatrices& dm, const Segmentation& seg,
                 const EngineConfig& cfg, bool update_hyperparams) {
  FitOutput out;
  double prev = elbo(state, hp, dm, seg);
  if (!std::isfinite(prev))
    fail(ErrorKind::NonFinite, "initial evidence bound is not finite");
  out.elbo_trace.push_back(prev);
  int it = 0;
  bool converged = false;
  while (it < cfg.max_iters) {
    ++it;
    SweepContext ctx = make_context(state, hp, dm, seg);
    sweep_inplace(state, hp, dm, seg, ctx);
    if (update_hyperparams) hp = m_step(state, dm, seg, hp);
    const double current = elbo(state, hp, dm, seg);
    out.elbo_trace.push_back(current);
    if (!std::isfinite(current))
      fail(ErrorKind::NonFinite,
           "evidence bound not finite at iteration " + std::to_string(it));
    if (std::abs(current - prev) < cfg.tol * std::max(1.0, std::abs(prev))) {
      converged = true;
      break;
    }
    prev = current;
  }
  out.state = std::move(state);
  out.hyperparams = std::move(hp);
  out.iterations = it;
  out.converged = converged;
  return out;
}

}  // namespace

void EngineConfig::validate() const {
  if (std::isnan(tol) || !(tol > 0.0))
    fail(ErrorKind::InvalidConfig, "tol must be positive");
  if (max_iters < 1) fail(ErrorKind::InvalidConfig, "max_iters must be at least 1");
  if (!(pi_init > 0.0 && pi_init < 1.0))
    fail(ErrorKind::InvalidConfig, "pi_init outside (0,1)");
  if (!std::isfinite(sigma2_B_init) || !(sigma2_B_init > 0.0))
    fail(ErrorKind::InvalidConfig, "sigma2_B_init must be positive");
  if (!std::isfinite(ridge) || ridge < 0.0)
    fail(ErrorKind::InvalidConfig, "ridge must be nonnegative");
}

EngineConfig EngineConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("engine config: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::ParseError, "engine config must be a JSON object");
  static const std::set<std::string> known = {"tol", "max_iters", "pi_init",
                                              "sigma2_B_init", "ridge"};
  for (const auto& item : j.items())
    if (known.find(item.key()) == known.end())
      fail(ErrorKind::InvalidConfig, "unknown engine config key '" + item.key() + "'");
  EngineConfig cfg;
  try {
    cfg.tol = j.value("tol", cfg.tol);
    cfg.max_iters = j.value("max_iters", cfg.max_iters);
    cfg.pi_init = j.value("pi_init", cfg.pi_init);
    cfg.sigma2_B_init = j.value("sigma2_B_init", cfg.sigma2_B_init);
    cfg.ridge = j.value("ridge", cfg.ridge);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("engine config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string EngineConfig::to_json_text() const {
  nlohmann::ordered_json j;
  j["tol"] = tol;
  j["max_iters"] = max_iters;
  j["pi_init"] = pi_init;
  j["sigma2_B_init"] = sigma2_B_init;
  j["ridge"] = ridge;
  return j.dump(2);
}

InitializedModel initialize(const DesignMatrices& dm, const Segmentation& seg,
                            const EngineConfig& cfg) {
  cfg.validate();
  dm.dims.validate();
  if (seg.node_count() != dm.dims.m)
    fail(ErrorKind::ShapeMismatch, "segmentation does not match panel width");
  const int m = dm.dims.m, p = dm.dims.p, g = seg.group_count();
  const int n = dm.dims.n_eff();
  if (n < 2)
    fail(ErrorKind::InsufficientHistory, "need at least two usable rows after embedding");

  // Ridge least squares warm start; the ridge is relative to the design scale
  // so all-zero designs degrade to B0 = 0 instead of a singular solve.
  const Eigen::Index mp = static_cast<Eigen::Index>(m) * p;
  Eigen::MatrixXd B0 = Eigen::MatrixXd::Zero(mp, m);
  {
    Eigen::MatrixXd Xs = dm.stacked_X();
    Eigen::MatrixXd G = Xs.transpose() * Xs;
    const double scale = G.trace() / static_cast<double>(mp);
    if (scale > 0.0) {
      G.diagonal().array() += cfg.ridge * scale;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
      if (ldlt.info() != Eigen::Success)
        fail(ErrorKind::SingularDesign, "warm-start normal equations failed");
      B0 = ldlt.solve(Xs.transpose() * dm.Y);
      if (!B0.allFinite())
        fail(ErrorKind::SingularDesign, "warm-start solution is not finite");
    }
  }

  HyperParams hp;
  hp.pi1 = cfg.pi_init;
  hp.pi2 = cfg.pi_init;
  hp.sigma2_B = cfg.sigma2_B_init;
  Eigen::VectorXd col_means = dm.Y.colwise().mean();
  Eigen::VectorXd half_var(m);
  for (int j = 0; j < m; ++j)
    half_var(j) =
        (dm.Y.col(j).array() - col_means(j)).square().sum() / (n - 1) / 2.0;
  hp.Sigma = half_var.asDiagonal();
  hp.validate();

  VariationalState st;
  st.p = p;
  st.m = m;
  st.g = g;
  st.phi1 = Eigen::ArrayXXd::Constant(p, m, cfg.pi_init);
  st.mu1 = Eigen::ArrayXXd::Zero(p, m);
  st.var1 = Eigen::ArrayXXd::Constant(p, m, cfg.sigma2_B_init);
  st.groups.assign(static_cast<size_t>(p) * m * g, GroupFactor{});
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(l) * m + i;
      st.mu1(l, i) = B0(row, i);
      for (int k = 0; k < g; ++k) {
        const auto cols = seg.derived_group(i, k);
        if (cols.empty()) continue;
        GroupFactor& f = st.group(l, i, k);
        const int s = static_cast<int>(cols.size());
        f.phi = cfg.pi_init;
        f.mu.resize(s);
        for (int j = 0; j < s; ++j) f.mu(j) = B0(row, cols[static_cast<size_t>(j)]);
        f.cov = cfg.sigma2_B_init * Eigen::MatrixXd::Identity(s, s);
      }
    }
  return {std::move(st), std::move(hp)};
}

void update_own(VariationalState& state, const HyperParams& hp,
                const DesignMatrices& dm, const Segmentation& seg, int lag,
                int node) {
  check_problem(state, dm, seg);
  if (lag < 0 || lag >= dm.dims.p || node < 0 || node >= dm.dims.m)
    fail(ErrorKind::IndexOutOfRange, "factor index out of range");
  SweepContext ctx = make_context(state, hp, dm, seg);
  Eigen::RowVectorXd u =
      dm.X[static_cast<size_t>(lag)].col(node).transpose() * ctx.R;
  update_own_impl(state, hp, dm, ctx, lag, node, u);
}

void update_group(VariationalState& state, const HyperParams& hp,
                  const DesignMatrices& dm, const Segmentation& seg, int lag,
                  int node, int k) {
  check_problem(state, dm, seg);
  if (lag < 0 || lag >= dm.dims.p || node < 0 || node >= dm.dims.m || k < 0 ||
      k >= seg.group_count())
    fail(ErrorKind::IndexOutOfRange, "factor index out of range");
  SweepContext ctx = make_context(state, hp, dm, seg);
  Eigen::RowVectorXd u =
      dm.X[static_cast<size_t>(lag)].col(node).transpose() * ctx.R;
  update_group_impl(state, hp, dm, seg, ctx, lag, node, k, u);
}

void e_step_sweep(VariationalState& state, const HyperParams& hp,
                  const DesignMatrices& dm, const Segmentation& seg) {
  check_problem(state, dm, seg);
  SweepContext ctx = make_context(state, hp, dm, seg);
  sweep_inplace(state, hp, dm, seg, ctx);
}

HyperParams m_step(const VariationalState& state, const DesignMatrices& dm,
                   const Segmentation& seg, const HyperParams& previous) {
  check_problem(state, dm, seg);
  const int p = dm.dims.p, m = dm.dims.m, g = seg.group_count();
  const int n = dm.dims.n_eff();
  HyperParams hp;

  hp.pi1 = clamp_prob(state.phi1.mean());

  double phi2_sum = 0.0;
  long group_factors = 0;
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < g; ++k) {
        const GroupFactor& f = state.group(l, i, k);
        if (f.mu.size() == 0) continue;
        phi2_sum += f.phi;
        ++group_factors;
      }
  hp.pi2 = group_factors > 0 ? clamp_prob(phi2_sum / group_factors) : previous.pi2;

  Eigen::MatrixXd Sq = expected_gram(state, dm, seg);
  Eigen::MatrixXd Sigma = Sq / static_cast<double>(n);
  Sigma = 0.5 * (Sigma + Sigma.transpose()).eval();
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sigma);
    if (es.info() != Eigen::Success)
      fail(ErrorKind::NonFinite, "noise covariance eigendecomposition failed");
    const double floor = 1e-10 * Sigma.trace() / m;
    const double lam_min = es.eigenvalues().minCoeff();
    if (lam_min < floor)
      Sigma.diagonal().array() += floor - lam_min;
  }
  hp.Sigma = std::move(Sigma);

  double num = 0.0, den = 0.0;
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i) {
      const double phi = state.phi1(l, i), mu = state.mu1(l, i), V = state.var1(l, i);
      num += phi * (V + mu * mu);
      den += phi;
      for (int k = 0; k < g; ++k) {
        const GroupFactor& f = state.group(l, i, k);
        if (f.mu.size() == 0) continue;
        num += f.phi * (f.cov.trace() + f.mu.squaredNorm());
        den += f.phi * static_cast<double>(f.mu.size());
      }
    }
  // vanishing inclusion mass leaves the slab scale alone
  hp.sigma2_B = (den > 1e-12 && num > 0.0) ? num / den : previous.sigma2_B;
  return hp;
}

double elbo(const VariationalState& state, const HyperParams& hp,
            const DesignMatrices& dm, const Segmentation& seg) {
  check_problem(state, dm, seg);
  const int p = dm.dims.p, m = dm.dims.m, g = seg.group_count();
  const int n = dm.dims.n_eff();
  const double s2 = hp.sigma2_B;

  const Eigen::MatrixXd Sigma_inv = inverse_spd(
      hp.Sigma, ErrorKind::NotPositiveDefinite, "noise covariance is not positive definite");
  const double logdet_Sigma = log_det_spd(hp.Sigma, ErrorKind::NotPositiveDefinite,
                                          "noise covariance is not positive definite");
  const Eigen::MatrixXd Sq = expected_gram(state, dm, seg);

  double L = -0.5 * n * m * std::log(2.0 * M_PI) - 0.5 * n * logdet_Sigma -
             0.5 * Sigma_inv.cwiseProduct(Sq).sum();

  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i) {
      const double phi = state.phi1(l, i), mu = state.mu1(l, i), V = state.var1(l, i);
      const double kl_slab =
          0.5 * (V / s2 + mu * mu / s2 - 1.0 + std::log(s2 / V));
      L += -phi * kl_slab + bernoulli_term(phi, hp.pi1);
      for (int k = 0; k < g; ++k) {
        const GroupFactor& f = state.group(l, i, k);
        const int s = static_cast<int>(f.mu.size());
        if (s == 0) continue;
        const double logdet_cov = log_det_spd(
            f.cov, ErrorKind::NotPositiveDefinite, "slab covariance lost definiteness");
        const double kl =
            0.5 * ((f.cov.trace() + f.mu.squaredNorm()) / s2 - s +
                   s * std::log(s2) - logdet_cov);
        L += -f.phi * kl + bernoulli_term(f.phi, hp.pi2);
      }
    }
  return L;
}

FitOutput fit(const DesignMatrices& dm, const Segmentation& seg,
              const EngineConfig& cfg) {
  InitializedModel init = initialize(dm, seg, cfg);
  return run_em(std::move(init.state), std::move(init.hyperparams), dm, seg, cfg,
                /*update_hyperparams=*/true);
}

FitOutput fit_fixed_hyperparams(const DesignMatrices& dm,
                                const Segmentation& seg, const HyperParams& hp,
                                const EngineConfig& cfg) {
  hp.validate();
  EngineConfig warm = cfg;
  warm.sigma2_B_init = hp.sigma2_B;  // slab blocks start on the given prior
  InitializedModel init = initialize(dm, seg, warm);
  return run_em(std::move(init.state), hp, dm, seg, cfg,
                /*update_hyperparams=*/false);
}

}  // namespace nar

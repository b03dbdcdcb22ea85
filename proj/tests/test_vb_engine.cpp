#include "nar/vb_engine.hpp"

#include <cmath>
#include <limits>

#include "doctest.h"
#include "nar/reference_oracle.hpp"
#include "test_util.hpp"

using namespace nar;
using testutil::expect_kind;

namespace {

// Zeroed mean-field state sized for (p, m, seg); every factor starts excluded
// with unit slab variance.
VariationalState blank_state(int p, int m, const Segmentation& seg) {
  VariationalState st;
  st.p = p;
  st.m = m;
  st.g = seg.group_count();
  st.phi1 = Eigen::ArrayXXd::Zero(p, m);
  st.mu1 = Eigen::ArrayXXd::Zero(p, m);
  st.var1 = Eigen::ArrayXXd::Ones(p, m);
  st.groups.assign(static_cast<size_t>(p) * m * st.g, GroupFactor{});
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < st.g; ++k) {
        const auto cols = seg.derived_group(i, k);
        if (cols.empty()) continue;
        GroupFactor& f = st.group(l, i, k);
        const int s = static_cast<int>(cols.size());
        f.phi = 0.0;
        f.mu = Eigen::VectorXd::Zero(s);
        f.cov = Eigen::MatrixXd::Identity(s, s);
      }
  return st;
}

HyperParams unit_hyper(int m) {
  HyperParams hp;
  hp.pi1 = 0.5;
  hp.pi2 = 0.5;
  hp.sigma2_B = 1.0;
  hp.Sigma = Eigen::MatrixXd::Identity(m, m);
  return hp;
}

}  // namespace

TEST_CASE("single coefficient update matches the closed form") {
  // One node, one lag, x = y = 1: posterior slab is N(1/2, 1/2) and the
  // inclusion logit gains exactly 1/4 from the fit term on top of the
  // half-log-variance ratio. The constants are cross-checked below against a
  // brute-force maximization and exact enumeration.
  TimeSeriesPanel panel;
  panel.values.resize(2, 1);
  panel.values << 1, 1;
  DesignMatrices dm = embed(panel, 1);
  REQUIRE(dm.dims.n_eff() == 1);
  CHECK(dm.X[0](0, 0) == 1.0);
  CHECK(dm.Y(0, 0) == 1.0);

  Segmentation seg = Segmentation::universal(1);
  HyperParams hp = unit_hyper(1);
  VariationalState st = blank_state(1, 1, seg);
  update_own(st, hp, dm, seg, 0, 0);

  CHECK(st.var1(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(st.mu1(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  // logit(phi) = logit(1/2) + (1/2) log(V / sigma2_B) + 1/4
  const double fit_term = logit(st.phi1(0, 0)) - 0.5 * std::log(0.5);
  CHECK(fit_term == doctest::Approx(0.25).epsilon(1e-12));

  // Brute force: with mu and V at their (phi-independent) optima, scan the
  // inclusion probability. The objective is the one-factor bound
  //   c + phi*(mu - (mu^2+V)/2 - KL) + H(phi) + phi log pi + (1-phi) log(1-pi).
  const double mu = 0.5, V = 0.5;
  const double kl = 0.5 * (V + mu * mu - 1.0 - std::log(V));
  const double gain = mu - 0.5 * (mu * mu + V) - kl;
  double best_phi = 0.0, best_val = -std::numeric_limits<double>::infinity();
  for (double phi = 1e-5; phi < 1.0; phi += 1e-5) {
    const double ent = -phi * std::log(phi) - (1 - phi) * std::log(1 - phi);
    const double val =
        gain * phi + ent + phi * std::log(0.5) + (1 - phi) * std::log(0.5);
    if (val > best_val) {
      best_val = val;
      best_phi = phi;
    }
  }
  CHECK(st.phi1(0, 0) == doctest::Approx(best_phi).epsilon(1e-3));

  // One factor makes the optimized bound tight, so the bound must equal the
  // exact log evidence and the inclusion probability the exact marginal.
  ExactPosterior exact = exact_posterior(dm, seg, hp);
  CHECK(st.phi1(0, 0) == doctest::Approx(exact.gamma_probs(0, 0)).epsilon(1e-12));
  CHECK(elbo(st, hp, dm, seg) ==
        doctest::Approx(exact.log_evidence).epsilon(1e-12));
}

TEST_CASE("zero predictor column leaves the prior untouched") {
  // Node 0 history is all zero until the final response row, so its own-lag
  // regressor is the zero column: the update must return the prior inclusion
  // and slab.
  TimeSeriesPanel panel;
  panel.values = Eigen::MatrixXd::Zero(4, 2);
  panel.values(3, 0) = 2.0;
  panel.values.col(1) << 0.3, -0.4, 0.5, 0.1;
  DesignMatrices dm = embed(panel, 1);
  REQUIRE(dm.X[0].col(0).isZero());

  Segmentation seg = Segmentation::nodewise(2);
  HyperParams hp = unit_hyper(2);
  hp.pi1 = 0.23;
  hp.sigma2_B = 1.7;
  VariationalState st = blank_state(1, 2, seg);
  st.var1.setConstant(1.7);
  update_own(st, hp, dm, seg, 0, 0);
  CHECK(st.phi1(0, 0) == doctest::Approx(0.23).epsilon(1e-14));
  CHECK(st.mu1(0, 0) == 0.0);
  CHECK(st.var1(0, 0) == doctest::Approx(1.7).epsilon(1e-14));
}

TEST_CASE("singleton derived group follows the scalar algebra") {
  // Groups {0},{1}: node 0 paired with group 1 covers the single column 1.
  TimeSeriesPanel panel = testutil::random_panel(20, 2, 42);
  DesignMatrices dm = embed(panel, 1);
  Segmentation seg({{0}, {1}}, 2);
  HyperParams hp = unit_hyper(2);
  hp.pi2 = 0.3;
  hp.sigma2_B = 0.8;
  hp.Sigma << 1.0, 0.2, 0.2, 0.7;

  VariationalState st = blank_state(1, 2, seg);
  update_group(st, hp, dm, seg, 0, 0, 1);

  const Eigen::MatrixXd Sinv = hp.Sigma.inverse();
  const Eigen::VectorXd x = dm.X[0].col(0);
  const double xx = x.squaredNorm();
  const double A = xx * Sinv(1, 1) + 1.0 / hp.sigma2_B;
  const Eigen::RowVectorXd u = x.transpose() * dm.Y;  // residual = Y at start
  const double b = (u * Sinv)(1);
  const double mu = b / A;
  const double z = logit(0.3) - 0.5 * std::log(hp.sigma2_B) -
                   0.5 * std::log(A) + 0.5 * mu * b;

  const GroupFactor& f = st.group(0, 0, 1);
  REQUIRE(f.mu.size() == 1);
  CHECK(f.cov(0, 0) == doctest::Approx(1.0 / A).epsilon(1e-12));
  CHECK(f.mu(0) == doctest::Approx(mu).epsilon(1e-12));
  CHECK(logit(f.phi) == doctest::Approx(z).epsilon(1e-10));
}

TEST_CASE("two-column derived group matches a dense solve") {
  TimeSeriesPanel panel = testutil::random_panel(25, 3, 9);
  DesignMatrices dm = embed(panel, 1);
  Segmentation seg = Segmentation::universal(3);
  HyperParams hp = unit_hyper(3);
  hp.sigma2_B = 0.5;
  hp.Sigma << 1.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 1.0;

  VariationalState st = blank_state(1, 3, seg);
  update_group(st, hp, dm, seg, 0, 0, 0);  // derived group {1, 2}

  const Eigen::MatrixXd Sinv = hp.Sigma.inverse();
  const Eigen::VectorXd x = dm.X[0].col(0);
  const double xx = x.squaredNorm();
  Eigen::MatrixXd A(2, 2);
  A << xx * Sinv(1, 1), xx * Sinv(1, 2), xx * Sinv(2, 1), xx * Sinv(2, 2);
  A += Eigen::MatrixXd::Identity(2, 2) / hp.sigma2_B;
  const Eigen::RowVectorXd u = x.transpose() * dm.Y;
  Eigen::VectorXd b(2);
  const Eigen::RowVectorXd uS = u * Sinv;
  b << uS(1), uS(2);
  const Eigen::MatrixXd cov = A.inverse();
  const Eigen::VectorXd mu = cov * b;
  const double z = logit(0.5) - 1.0 * std::log(0.5) +
                   0.5 * std::log(cov.determinant()) + 0.5 * mu.dot(b);

  const GroupFactor& f = st.group(0, 0, 0);
  REQUIRE(f.mu.size() == 2);
  CHECK((f.cov - cov).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((f.mu - mu).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(logit(f.phi) == doctest::Approx(z).epsilon(1e-9));
}

TEST_CASE("sweep starts with the standalone own update") {
  TimeSeriesPanel panel = testutil::random_panel(30, 3, 17);
  DesignMatrices dm = embed(panel, 2);
  Segmentation seg = Segmentation::universal(3);
  HyperParams hp = unit_hyper(3);

  VariationalState swept = blank_state(2, 3, seg);
  VariationalState single = blank_state(2, 3, seg);
  e_step_sweep(swept, hp, dm, seg);
  update_own(single, hp, dm, seg, 0, 0);

  // factor (lag 0, node 0) is updated first in the sweep, from the same state
  CHECK(swept.phi1(0, 0) == doctest::Approx(single.phi1(0, 0)).epsilon(1e-14));
  CHECK(swept.mu1(0, 0) == doctest::Approx(single.mu1(0, 0)).epsilon(1e-14));
  CHECK(swept.var1(0, 0) == doctest::Approx(single.var1(0, 0)).epsilon(1e-14));
}

TEST_CASE("sweeps never lower the bound") {
  TimeSeriesPanel panel = testutil::random_panel(40, 3, 23);
  DesignMatrices dm = embed(panel, 2);
  Segmentation seg({{0, 1}, {2}}, 3);
  EngineConfig cfg;
  InitializedModel init = initialize(dm, seg, cfg);

  double prev = elbo(init.state, init.hyperparams, dm, seg);
  CHECK(std::isfinite(prev));
  for (int sweep = 0; sweep < 6; ++sweep) {
    e_step_sweep(init.state, init.hyperparams, dm, seg);
    const double now = elbo(init.state, init.hyperparams, dm, seg);
    CHECK(now >= prev - 1e-9 * std::max(1.0, std::abs(prev)));
    prev = now;
  }
}

TEST_CASE("expected likelihood agrees with explicit second moments") {
  // Independent bound computation for m = 2, p = 1, universal grouping:
  // E[(Y-XB)'(Y-XB)] assembled from per-factor first and second moments
  // instead of the engine's residual-plus-correction shortcut.
  TimeSeriesPanel panel = testutil::random_panel(18, 2, 31);
  DesignMatrices dm = embed(panel, 1);
  Segmentation seg = Segmentation::universal(2);
  HyperParams hp = unit_hyper(2);
  hp.pi1 = 0.4;
  hp.pi2 = 0.25;
  hp.sigma2_B = 0.9;
  hp.Sigma << 1.2, 0.3, 0.3, 0.8;

  VariationalState st = blank_state(1, 2, seg);
  e_step_sweep(st, hp, dm, seg);
  e_step_sweep(st, hp, dm, seg);

  // positions: coefficient (row r, col c) carried by each factor
  struct Factor {
    double phi;
    Eigen::VectorXd mu;
    Eigen::MatrixXd cov;
    std::vector<std::pair<int, int>> pos;
  };
  std::vector<Factor> factors;
  factors.push_back({st.phi1(0, 0),
                     Eigen::VectorXd::Constant(1, st.mu1(0, 0)),
                     Eigen::MatrixXd::Constant(1, 1, st.var1(0, 0)),
                     {{0, 0}}});
  factors.push_back({st.phi1(0, 1),
                     Eigen::VectorXd::Constant(1, st.mu1(0, 1)),
                     Eigen::MatrixXd::Constant(1, 1, st.var1(0, 1)),
                     {{1, 1}}});
  factors.push_back({st.group(0, 0, 0).phi, st.group(0, 0, 0).mu,
                     st.group(0, 0, 0).cov, {{0, 1}}});
  factors.push_back({st.group(0, 1, 0).phi, st.group(0, 1, 0).mu,
                     st.group(0, 1, 0).cov, {{1, 0}}});

  // first moments
  Eigen::MatrixXd EB = Eigen::MatrixXd::Zero(2, 2);
  for (const auto& f : factors)
    for (size_t a = 0; a < f.pos.size(); ++a)
      EB(f.pos[a].first, f.pos[a].second) = f.phi * f.mu(static_cast<Eigen::Index>(a));

  const Eigen::MatrixXd XtX = dm.X[0].transpose() * dm.X[0];
  // E[B' X'X B](j,j') = sum over coefficient pairs; factors are independent.
  Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(2, 2);
  for (size_t fa = 0; fa < factors.size(); ++fa)
    for (size_t fb = 0; fb < factors.size(); ++fb)
      for (size_t a = 0; a < factors[fa].pos.size(); ++a)
        for (size_t b = 0; b < factors[fb].pos.size(); ++b) {
          const auto [ra, ca] = factors[fa].pos[a];
          const auto [rb, cb] = factors[fb].pos[b];
          double second;
          if (fa == fb) {
            second = factors[fa].phi *
                     (factors[fa].cov(static_cast<Eigen::Index>(a),
                                      static_cast<Eigen::Index>(b)) +
                      factors[fa].mu(static_cast<Eigen::Index>(a)) *
                          factors[fa].mu(static_cast<Eigen::Index>(b)));
          } else {
            second = EB(ra, ca) * EB(rb, cb);
          }
          quad(ca, cb) += second * XtX(ra, rb);
        }

  const Eigen::MatrixXd Sq = dm.Y.transpose() * dm.Y -
                             dm.Y.transpose() * dm.X[0] * EB -
                             EB.transpose() * dm.X[0].transpose() * dm.Y + quad;

  const Eigen::MatrixXd Sinv = hp.Sigma.inverse();
  const int n = dm.dims.n_eff();
  double L = -0.5 * n * 2 * std::log(2.0 * M_PI) -
             0.5 * n * std::log(hp.Sigma.determinant()) -
             0.5 * (Sinv * Sq).trace();
  auto bern = [](double phi, double pi) {
    double out = 0.0;
    if (phi > 0.0) out += phi * (std::log(pi) - std::log(phi));
    if (phi < 1.0) out += (1 - phi) * (std::log(1 - pi) - std::log(1 - phi));
    return out;
  };
  for (size_t fi = 0; fi < factors.size(); ++fi) {
    const auto& f = factors[fi];
    const bool own = fi < 2;
    const int s = static_cast<int>(f.mu.size());
    const double kl =
        0.5 * ((f.cov.trace() + f.mu.squaredNorm()) / hp.sigma2_B - s +
               s * std::log(hp.sigma2_B) - std::log(f.cov.determinant()));
    L += -f.phi * kl + bern(f.phi, own ? hp.pi1 : hp.pi2);
  }

  CHECK(elbo(st, hp, dm, seg) == doctest::Approx(L).epsilon(1e-10));
}

TEST_CASE("initialization") {
  TimeSeriesPanel panel = testutil::random_panel(24, 3, 77);
  DesignMatrices dm = embed(panel, 2);
  Segmentation seg = Segmentation::universal(3);
  EngineConfig cfg;
  cfg.pi_init = 0.05;
  cfg.sigma2_B_init = 2.0;
  cfg.ridge = 1e-6;

  InitializedModel init = initialize(dm, seg, cfg);
  CHECK(init.hyperparams.pi1 == 0.05);
  CHECK(init.hyperparams.pi2 == 0.05);
  CHECK(init.hyperparams.sigma2_B == 2.0);
  CHECK((init.state.phi1 == 0.05).all());
  CHECK((init.state.var1 == 2.0).all());

  // noise covariance starts at half the sample variance, diagonal
  for (int j = 0; j < 3; ++j) {
    const double mean = dm.Y.col(j).mean();
    const double var =
        (dm.Y.col(j).array() - mean).square().sum() / (dm.dims.n_eff() - 1);
    CHECK(init.hyperparams.Sigma(j, j) == doctest::Approx(var / 2).epsilon(1e-12));
  }
  CHECK(init.hyperparams.Sigma(0, 1) == 0.0);

  // slab means carry the ridge least-squares warm start
  Eigen::MatrixXd Xs = dm.stacked_X();
  Eigen::MatrixXd G = Xs.transpose() * Xs;
  G.diagonal().array() += cfg.ridge * G.trace() / 6.0;
  Eigen::MatrixXd B0 = G.ldlt().solve(Xs.transpose() * dm.Y);
  CHECK(init.state.mu1(0, 0) == doctest::Approx(B0(0, 0)).epsilon(1e-9));
  CHECK(init.state.mu1(1, 2) == doctest::Approx(B0(3 + 2, 2)).epsilon(1e-9));
  const GroupFactor& f = init.state.group(0, 1, 0);  // row 1, derived {0, 2}
  CHECK(f.mu(0) == doctest::Approx(B0(1, 0)).epsilon(1e-9));
  CHECK(f.mu(1) == doctest::Approx(B0(1, 2)).epsilon(1e-9));
}

TEST_CASE("initialization handles a zero design") {
  // History is all zeros; only the last response row carries signal.
  TimeSeriesPanel panel;
  panel.values = Eigen::MatrixXd::Zero(3, 2);
  panel.values(2, 0) = 1.0;
  panel.values(2, 1) = -2.0;
  DesignMatrices dm = embed(panel, 1);
  REQUIRE(dm.stacked_X().isZero());

  InitializedModel init = initialize(dm, Segmentation::universal(2), EngineConfig{});
  CHECK(init.state.mu1.isZero());
}

TEST_CASE("initialization needs two usable rows") {
  TimeSeriesPanel panel = testutil::random_panel(3, 2, 5);
  DesignMatrices dm = embed(panel, 2);  // n_eff = 1
  expect_kind(ErrorKind::InsufficientHistory, [&] {
    initialize(dm, Segmentation::universal(2), EngineConfig{});
  });
}

TEST_CASE("hyperparameter update is a stationary point of the bound") {
  TimeSeriesPanel panel = testutil::random_panel(50, 3, 3);
  DesignMatrices dm = embed(panel, 1);
  Segmentation seg({{0, 1}, {2}}, 3);
  EngineConfig cfg;
  InitializedModel init = initialize(dm, seg, cfg);
  e_step_sweep(init.state, init.hyperparams, dm, seg);
  HyperParams hp = m_step(init.state, dm, seg, init.hyperparams);

  const double L0 = elbo(init.state, hp, dm, seg);
  const double scale = std::max(1.0, std::abs(L0));
  const double h = 1e-6;

  auto fd = [&](const std::function<void(HyperParams&, double)>& bump) {
    HyperParams up = hp, dn = hp;
    bump(up, h);
    bump(dn, -h);
    return (elbo(init.state, up, dm, seg) - elbo(init.state, dn, dm, seg)) /
           (2 * h);
  };

  CHECK(std::abs(fd([](HyperParams& q, double d) { q.pi1 += d; })) <
        1e-3 * scale);
  CHECK(std::abs(fd([](HyperParams& q, double d) { q.pi2 += d; })) <
        1e-3 * scale);
  CHECK(std::abs(fd([](HyperParams& q, double d) { q.sigma2_B += d; })) <
        1e-3 * scale);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd E(3, 3);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) E(a, b) = dist(rng);
  E = (0.5 * (E + E.transpose())).eval();
  CHECK(std::abs(fd([&](HyperParams& q, double d) { q.Sigma += d * E; })) <
        1e-3 * scale);
}

TEST_CASE("degenerate updates hold the previous values") {
  TimeSeriesPanel panel = testutil::random_panel(20, 2, 13);
  DesignMatrices dm = embed(panel, 1);

  SUBCASE("all factors excluded keeps the slab variance") {
    Segmentation seg = Segmentation::universal(2);
    VariationalState st = blank_state(1, 2, seg);
    HyperParams prev = unit_hyper(2);
    prev.sigma2_B = 3.21;
    HyperParams hp = m_step(st, dm, seg, prev);
    CHECK(hp.sigma2_B == 3.21);
    CHECK(hp.pi1 > 0.0);  // clamped, not zero
    CHECK(hp.pi1 < 1e-10);
  }

  SUBCASE("no group factors keeps the group inclusion rate") {
    // a single node is the only case with no derived groups at all
    TimeSeriesPanel single = testutil::random_panel(20, 1, 14);
    DesignMatrices sdm = embed(single, 1);
    Segmentation seg = Segmentation::universal(1);
    VariationalState st = blank_state(1, 1, seg);
    st.phi1.setConstant(0.5);
    st.mu1.setConstant(0.1);
    st.var1.setConstant(0.2);
    HyperParams prev = unit_hyper(1);
    prev.pi2 = 0.123;
    HyperParams hp = m_step(st, sdm, seg, prev);
    CHECK(hp.pi2 == 0.123);
    CHECK(hp.pi1 == doctest::Approx(0.5).epsilon(1e-14));
  }
}

TEST_CASE("full fit converges and the trace is monotone") {
  TimeSeriesPanel panel = testutil::random_panel(60, 3, 99);
  DesignMatrices dm = embed(panel, 2);
  Segmentation seg = Segmentation::universal(3);
  EngineConfig cfg;
  cfg.tol = 1e-8;
  cfg.max_iters = 500;

  FitOutput out = fit(dm, seg, cfg);
  CHECK(out.converged);
  CHECK(out.iterations >= 1);
  CHECK(out.elbo_trace.size() == static_cast<size_t>(out.iterations) + 1);
  for (size_t i = 1; i < out.elbo_trace.size(); ++i)
    CHECK(out.elbo_trace[i] >=
          out.elbo_trace[i - 1] -
              1e-8 * std::max(1.0, std::abs(out.elbo_trace[i - 1])));

  // converged state is a fixed point: one more sweep barely moves the bound
  VariationalState st = out.state;
  e_step_sweep(st, out.hyperparams, dm, seg);
  const double before = out.elbo_trace.back();
  const double after = elbo(st, out.hyperparams, dm, seg);
  CHECK(std::abs(after - before) < 1e-5 * std::max(1.0, std::abs(before)));
}

TEST_CASE("infinite tolerance stops after one iteration") {
  TimeSeriesPanel panel = testutil::random_panel(30, 2, 55);
  DesignMatrices dm = embed(panel, 1);
  EngineConfig cfg;
  cfg.tol = std::numeric_limits<double>::infinity();
  FitOutput out = fit(dm, Segmentation::universal(2), cfg);
  CHECK(out.iterations == 1);
  CHECK(out.elbo_trace.size() == 2);
  CHECK(out.converged);
}

TEST_CASE("iteration cap flags non-convergence") {
  TimeSeriesPanel panel = testutil::random_panel(60, 3, 21);
  DesignMatrices dm = embed(panel, 2);
  EngineConfig cfg;
  cfg.tol = 1e-14;
  cfg.max_iters = 2;
  FitOutput out = fit(dm, Segmentation::universal(3), cfg);
  CHECK_FALSE(out.converged);
  CHECK(out.iterations == 2);
}

TEST_CASE("fixed hyperparameters never change during the fit") {
  TimeSeriesPanel panel = testutil::random_panel(40, 2, 61);
  DesignMatrices dm = embed(panel, 1);
  Segmentation seg = Segmentation::universal(2);
  HyperParams hp = unit_hyper(2);
  hp.pi1 = 0.2;
  hp.pi2 = 0.1;
  EngineConfig cfg;
  cfg.tol = 1e-10;
  FitOutput out = fit_fixed_hyperparams(dm, seg, hp, cfg);
  CHECK(out.hyperparams.pi1 == 0.2);
  CHECK(out.hyperparams.pi2 == 0.1);
  CHECK(out.hyperparams.sigma2_B == 1.0);
  CHECK(out.hyperparams.Sigma.isApprox(hp.Sigma));
  for (size_t i = 1; i < out.elbo_trace.size(); ++i)
    CHECK(out.elbo_trace[i] >=
          out.elbo_trace[i - 1] -
              1e-8 * std::max(1.0, std::abs(out.elbo_trace[i - 1])));
}

TEST_CASE("engine config json") {
  EngineConfig cfg = EngineConfig::from_json_text(
      R"({"tol": 1e-8, "max_iters": 100, "pi_init": 0.02})");
  CHECK(cfg.tol == 1e-8);
  CHECK(cfg.max_iters == 100);
  CHECK(cfg.pi_init == 0.02);
  CHECK(cfg.sigma2_B_init == 1.0);  // default preserved

  EngineConfig round = EngineConfig::from_json_text(cfg.to_json_text());
  CHECK(round.tol == cfg.tol);
  CHECK(round.max_iters == cfg.max_iters);
  CHECK(round.pi_init == cfg.pi_init);
  CHECK(round.ridge == cfg.ridge);

  expect_kind(ErrorKind::InvalidConfig, [] {
    EngineConfig::from_json_text(R"({"tol": 1e-8, "tolerance": 1.0})");
  });
  expect_kind(ErrorKind::ParseError,
              [] { EngineConfig::from_json_text("{not json"); });
  expect_kind(ErrorKind::InvalidConfig,
              [] { EngineConfig::from_json_text(R"({"tol": -1.0})"); });
  expect_kind(ErrorKind::InvalidConfig,
              [] { EngineConfig::from_json_text(R"({"pi_init": 1.5})"); });
}

TEST_CASE("logit helpers") {
  CHECK(logit(0.5) == 0.0);
  CHECK(inv_logit(0.0) == 0.5);
  for (double x : {0.01, 0.2, 0.5, 0.9, 0.999})
    CHECK(inv_logit(logit(x)) == doctest::Approx(x).epsilon(1e-12));
  CHECK(inv_logit(800.0) == 1.0);
  CHECK(inv_logit(-800.0) == doctest::Approx(0.0));
}

#include "nar/selection_forecast.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "nar/metrics.hpp"

namespace nar {

IndicatorSet select_structure(const VariationalState& state) {
  IndicatorSet ind(state.p, state.m, state.g);
  for (int l = 0; l < state.p; ++l)
    for (int i = 0; i < state.m; ++i) {
      ind.set_gamma(l, i, state.phi1(l, i) >= 0.5);
      for (int k = 0; k < state.g; ++k) {
        const GroupFactor& f = state.group(l, i, k);
        if (f.mu.size() == 0) continue;
        ind.set_eta(l, i, k, f.phi >= 0.5);
      }
    }
  return ind;
}

CoefficientTensor plugin_coefficients(const VariationalState& state,
                                      const IndicatorSet& indicators,
                                      const Segmentation& seg) {
  if (indicators.p() != state.p || indicators.m() != state.m ||
      indicators.g() != state.g || seg.group_count() != state.g ||
      seg.node_count() != state.m)
    fail(ErrorKind::ShapeMismatch, "indicators do not match the state");
  CoefficientTensor B(state.p, state.m);
  for (int l = 0; l < state.p; ++l)
    for (int i = 0; i < state.m; ++i) {
      if (indicators.gamma(l, i)) B.lag(l)(i, i) = state.mu1(l, i);
      for (int k = 0; k < state.g; ++k) {
        if (!indicators.eta(l, i, k)) continue;
        const GroupFactor& f = state.group(l, i, k);
        const auto cols = seg.derived_group(i, k);
        if (static_cast<size_t>(f.mu.size()) != cols.size())
          fail(ErrorKind::ShapeMismatch, "group factor does not match segmentation");
        for (size_t j = 0; j < cols.size(); ++j)
          B.lag(l)(i, cols[j]) = f.mu(static_cast<Eigen::Index>(j));
      }
    }
  return B;
}

FitResult fit_model(const TimeSeriesPanel& panel, const Segmentation& seg,
                    int p, const EngineConfig& cfg) {
  DemeanedPanel dp = demean(panel);
  DesignMatrices dm = embed(dp.panel, p);
  FitOutput fo = fit(dm, seg, cfg);
  FitResult result;
  result.indicators = select_structure(fo.state);
  result.coefficients = plugin_coefficients(fo.state, result.indicators, seg);
  result.state = std::move(fo.state);
  result.hyperparams = std::move(fo.hyperparams);
  result.elbo_trace = std::move(fo.elbo_trace);
  result.iterations = fo.iterations;
  result.converged = fo.converged;
  result.column_means = std::move(dp.means);
  return result;
}

Eigen::RowVectorXd forecast_one(const TimeSeriesPanel& panel,
                                const CoefficientTensor& B,
                                const Eigen::VectorXd& means) {
  panel.validate();
  const int p = B.p(), m = B.m();
  if (panel.cols() != m || means.size() != m)
    fail(ErrorKind::ShapeMismatch, "panel, coefficients, and means disagree");
  if (panel.rows() < p)
    fail(ErrorKind::InsufficientHistory, "panel shorter than the lag order");
  Eigen::RowVectorXd forecast = means.transpose();
  for (int l = 1; l <= p; ++l) {
    const Eigen::RowVectorXd lagged =
        panel.values.row(panel.rows() - l) - means.transpose();
    forecast.noalias() += lagged * B.lag(l - 1);
  }
  return forecast;
}

namespace {

Eigen::VectorXd solve_normal_equations(Eigen::MatrixXd G, const Eigen::VectorXd& rhs) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd beta = ldlt.solve(rhs);
    if (beta.allFinite()) return beta;
  }
  // collinear active set, retry with a relative jitter
  G.diagonal().array() += 1e-10 * G.trace() / static_cast<double>(G.rows());
  Eigen::LDLT<Eigen::MatrixXd> again(G);
  if (again.info() != Eigen::Success)
    fail(ErrorKind::SingularDesign, "restricted normal equations failed");
  Eigen::VectorXd beta = again.solve(rhs);
  if (!beta.allFinite())
    fail(ErrorKind::SingularDesign, "restricted solution is not finite");
  return beta;
}

}  // namespace

CoefficientTensor restricted_least_squares(const DesignMatrices& dm,
                                           const CoefficientMask& mask,
                                           bool gls,
                                           const Eigen::MatrixXd* Sigma) {
  const int p = dm.dims.p, m = dm.dims.m;
  if (mask.p != p || mask.m != m)
    fail(ErrorKind::ShapeMismatch, "mask does not match the design");
  CoefficientTensor B(p, m);

  if (!gls) {
    for (int j = 0; j < m; ++j) {
      std::vector<std::pair<int, int>> active;  // (lag, source)
      for (int l = 0; l < p; ++l)
        for (int i = 0; i < m; ++i)
          if (mask.at(l, i, j)) active.emplace_back(l, i);
      const int a = static_cast<int>(active.size());
      if (a == 0) continue;
      Eigen::MatrixXd G(a, a);
      Eigen::VectorXd rhs(a);
      for (int r = 0; r < a; ++r) {
        const auto& xr = dm.X[static_cast<size_t>(active[static_cast<size_t>(r)].first)]
                             .col(active[static_cast<size_t>(r)].second);
        for (int c = 0; c < a; ++c) {
          const auto& xc = dm.X[static_cast<size_t>(active[static_cast<size_t>(c)].first)]
                               .col(active[static_cast<size_t>(c)].second);
          G(r, c) = xr.dot(xc);
        }
        rhs(r) = xr.dot(dm.Y.col(j));
      }
      const Eigen::VectorXd beta = solve_normal_equations(std::move(G), rhs);
      for (int r = 0; r < a; ++r)
        B.lag(active[static_cast<size_t>(r)].first)(
            active[static_cast<size_t>(r)].second, j) = beta(r);
    }
    return B;
  }

  if (Sigma == nullptr)
    fail(ErrorKind::InvalidConfig, "joint refit needs a noise covariance");
  Eigen::LLT<Eigen::MatrixXd> llt(*Sigma);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::NotPositiveDefinite, "noise covariance is not positive definite");
  const Eigen::MatrixXd Sinv = llt.solve(Eigen::MatrixXd::Identity(m, m));

  struct Coord { int l, i, j; };
  std::vector<Coord> coords;
  for (int l = 0; l < p; ++l)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        if (mask.at(l, i, j)) coords.push_back({l, i, j});
  const int d = static_cast<int>(coords.size());
  if (d == 0) return B;

  Eigen::MatrixXd H(d, d);
  Eigen::VectorXd h(d);
  for (int a = 0; a < d; ++a) {
    const auto& xa = dm.X[static_cast<size_t>(coords[static_cast<size_t>(a)].l)]
                         .col(coords[static_cast<size_t>(a)].i);
    for (int b = 0; b < d; ++b) {
      const auto& xb = dm.X[static_cast<size_t>(coords[static_cast<size_t>(b)].l)]
                           .col(coords[static_cast<size_t>(b)].i);
      H(a, b) = Sinv(coords[static_cast<size_t>(a)].j,
                     coords[static_cast<size_t>(b)].j) *
                xa.dot(xb);
    }
    h(a) = (xa.transpose() * dm.Y) * Sinv.col(coords[static_cast<size_t>(a)].j);
  }
  const Eigen::VectorXd beta = solve_normal_equations(std::move(H), h);
  for (int a = 0; a < d; ++a)
    B.lag(coords[static_cast<size_t>(a)].l)(coords[static_cast<size_t>(a)].i,
                                            coords[static_cast<size_t>(a)].j) =
        beta(a);
  return B;
}

BacktestReport backtest(const TimeSeriesPanel& panel, const Segmentation& seg,
                        int p, const EngineConfig& cfg,
                        const BacktestOptions& opts) {
  panel.validate();
  const int T = panel.rows(), m = panel.cols();
  if (opts.split_index < p + 2)
    fail(ErrorKind::InsufficientHistory, "training window too short for the lag order");
  if (opts.split_index >= T)
    fail(ErrorKind::InvalidConfig, "split index leaves no test rows");
  if (opts.refit_structure_every < 0)
    fail(ErrorKind::InvalidConfig, "refit interval must be nonnegative");
  const int steps = T - opts.split_index;

  auto window_panel = [&](int rows) {
    TimeSeriesPanel w;
    w.values = panel.values.topRows(rows);
    w.node_ids = panel.node_ids;
    w.node_types = panel.node_types;
    return w;
  };

  BacktestReport report;
  report.split_index = opts.split_index;
  report.refit_structure_every = opts.refit_structure_every;
  report.gls = opts.gls;
  report.actuals.resize(steps, m);
  report.forecasts.resize(steps, m);

  FitResult base = fit_model(window_panel(opts.split_index), seg, p, cfg);
  CoefficientMask mask = coefficient_mask(base.indicators, seg);
  Eigen::MatrixXd Sigma_hat = base.hyperparams.Sigma;

  for (int s = 0; s < steps; ++s) {
    const int wlen = opts.split_index + s;
    TimeSeriesPanel window = window_panel(wlen);
    Eigen::RowVectorXd forecast;
    const bool refit = opts.refit_structure_every > 0 &&
                       s % opts.refit_structure_every == 0;
    if (refit) {
      const FitResult r = (s == 0) ? base : fit_model(window, seg, p, cfg);
      mask = coefficient_mask(r.indicators, seg);
      Sigma_hat = r.hyperparams.Sigma;
      forecast = forecast_one(window, r.coefficients, r.column_means);
      report.structure_refit_steps.push_back(s);
    } else {
      DemeanedPanel dw = demean(window);
      DesignMatrices dmw = embed(dw.panel, p);
      CoefficientTensor Bw =
          restricted_least_squares(dmw, mask, opts.gls, &Sigma_hat);
      forecast = forecast_one(window, Bw, dw.means);
    }
    report.forecasts.row(s) = forecast;
    report.actuals.row(s) = panel.values.row(opts.split_index + s);
  }

  const MapeResult mr = mape(report.actuals, report.forecasts);
  report.mape_percent = mr.percent;
  report.mape_excluded = mr.excluded;
  report.nrmse = nrmse(report.actuals, report.forecasts);
  return report;
}

}  // namespace nar

#include "nar/simulator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace nar {

const char* cov_kind_name(CovKind kind) {
  return kind == CovKind::Identity ? "identity" : "toeplitz";
}

CovKind cov_kind_from_name(const std::string& name) {
  if (name == "identity") return CovKind::Identity;
  if (name == "toeplitz") return CovKind::Toeplitz;
  fail(ErrorKind::InvalidConfig, "unknown covariance kind '" + name + "'");
}

void ScenarioSpec::validate() const {
  if (m < 1) fail(ErrorKind::InvalidConfig, "scenario needs at least one node");
  if (p < 1) fail(ErrorKind::InvalidConfig, "scenario needs at least one lag");
  if (T <= p) fail(ErrorKind::InsufficientHistory, "scenario panel too short");
  if (seg.node_count() != m)
    fail(ErrorKind::ShapeMismatch, "segmentation does not match node count");
  if (active_lags.empty())
    fail(ErrorKind::InvalidConfig, "scenario needs at least one active lag");
  for (size_t i = 0; i < active_lags.size(); ++i) {
    if (active_lags[i] < 1 || active_lags[i] > p)
      fail(ErrorKind::InvalidConfig, "active lag outside 1..p");
    if (i > 0 && active_lags[i] <= active_lags[i - 1])
      fail(ErrorKind::InvalidConfig, "active lags must be strictly increasing");
  }
  if (nonzero_count < 1)
    fail(ErrorKind::InvalidConfig, "scenario needs at least one nonzero");
  if (cov_diagonal.size() != m)
    fail(ErrorKind::ShapeMismatch, "covariance diagonal does not match node count");
  for (int i = 0; i < m; ++i)
    if (!(cov_diagonal(i) > 0.0))
      fail(ErrorKind::InvalidConfig, "covariance diagonal must be positive");
}

namespace {

std::vector<std::vector<int>> one_based(const Segmentation& seg) {
  std::vector<std::vector<int>> out;
  for (int k = 0; k < seg.group_count(); ++k) {
    std::vector<int> grp;
    for (int node : seg.group(k)) grp.push_back(node + 1);
    out.push_back(std::move(grp));
  }
  return out;
}

Segmentation seg_from_one_based(const std::vector<std::vector<int>>& groups, int m) {
  std::vector<std::vector<int>> zero;
  for (const auto& grp : groups) {
    std::vector<int> g;
    for (int node : grp) g.push_back(node - 1);
    zero.push_back(std::move(g));
  }
  return Segmentation(std::move(zero), m);
}

}  // namespace

std::string ScenarioSpec::to_json_text() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["m"] = m;
  j["p"] = p;
  j["T"] = T;
  j["groups"] = one_based(seg);
  j["active_lags"] = active_lags;
  j["nonzero_count"] = nonzero_count;
  j["cov"] = cov_kind_name(cov);
  std::vector<double> diag(cov_diagonal.data(), cov_diagonal.data() + cov_diagonal.size());
  j["cov_diagonal"] = diag;
  return j.dump(2);
}

ScenarioSpec ScenarioSpec::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("scenario: ") + e.what());
  }
  ScenarioSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.m = j.at("m").get<int>();
    spec.p = j.at("p").get<int>();
    spec.T = j.at("T").get<int>();
    spec.seg = seg_from_one_based(
        j.at("groups").get<std::vector<std::vector<int>>>(), spec.m);
    spec.active_lags = j.at("active_lags").get<std::vector<int>>();
    spec.nonzero_count = j.at("nonzero_count").get<int>();
    spec.cov = cov_kind_from_name(j.at("cov").get<std::string>());
    const auto diag = j.at("cov_diagonal").get<std::vector<double>>();
    spec.cov_diagonal = Eigen::Map<const Eigen::VectorXd>(
        diag.data(), static_cast<Eigen::Index>(diag.size()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("scenario: ") + e.what());
  }
  spec.validate();
  return spec;
}

namespace {

Eigen::VectorXd preset_diagonal(int m, CovKind cov) {
  Eigen::VectorXd d = Eigen::VectorXd::Ones(m);
  if (cov == CovKind::Identity) return d;
  auto put = [&](int start, int count, double v) {
    for (int i = 0; i < count; ++i) d(start + i) = v;
  };
  if (m == 10) {
    put(0, 6, 0.9);
    put(6, 4, 0.8);
  } else if (m == 20) {
    put(0, 3, 0.9);
    put(3, 3, 0.8);
    put(6, 14, 0.9);
  } else if (m == 50) {
    put(0, 3, 0.9);
    put(3, 3, 0.8);
    put(6, 14, 0.9);
    put(20, 20, 0.8);
    put(40, 10, 0.9);
  } else {
    fail(ErrorKind::InvalidConfig, "no covariance table for this size");
  }
  return d;
}

Segmentation preset_segmentation(int m, const std::string& suffix) {
  if (suffix == "UG") return Segmentation::universal(m);
  if (suffix == "NG") return Segmentation::nodewise(m);
  if (m == 10)
    return Segmentation({{0, 1, 2}, {3, 4, 5}, {6, 7, 8, 9}}, 10);
  if (m == 20)
    return Segmentation(
        {{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}, {10, 11, 12}, {13, 14, 15, 16, 17, 18, 19}},
        20);
  if (m == 50) {
    auto range = [](int lo, int hi) {  // inclusive, 0-based
      std::vector<int> v;
      for (int i = lo; i <= hi; ++i) v.push_back(i);
      return v;
    };
    return Segmentation({range(0, 4), range(5, 9), range(10, 12), range(13, 19),
                         range(20, 29), range(30, 34), range(35, 39), range(40, 49)},
                        50);
  }
  fail(ErrorKind::InvalidConfig, "no segmentation table for this size");
}

}  // namespace

std::vector<std::string> preset_scenario_names() {
  return {"m10UG", "m10SG", "m10NG", "m20UG", "m20SG",
          "m20NG", "m50UG", "m50SG", "m50NG"};
}

ScenarioSpec preset_scenario(const std::string& name, CovKind cov) {
  int m = 0;
  std::string suffix;
  if (name.size() == 5 && name.substr(0, 3) == "m10") m = 10;
  else if (name.size() == 5 && name.substr(0, 3) == "m20") m = 20;
  else if (name.size() == 5 && name.substr(0, 3) == "m50") m = 50;
  if (m != 0) suffix = name.substr(3);
  if (m == 0 || (suffix != "UG" && suffix != "SG" && suffix != "NG"))
    fail(ErrorKind::InvalidConfig, "unknown scenario '" + name + "'");

  ScenarioSpec spec;
  spec.name = name;
  spec.m = m;
  spec.p = 5;
  spec.T = m == 50 ? 701 : 301;
  spec.seg = preset_segmentation(m, suffix);
  spec.active_lags = {1, 3, 5};
  spec.cov = cov;
  spec.cov_diagonal = preset_diagonal(m, cov);
  if (suffix == "UG")
    spec.nonzero_count = m == 10 ? 72 : (m == 20 ? 145 : 355);
  else if (suffix == "SG")
    spec.nonzero_count = m == 10 ? 40 : (m == 20 ? 109 : 360);
  else
    spec.nonzero_count = m == 10 ? 18 : (m == 20 ? 27 : 128);
  spec.validate();
  return spec;
}

Eigen::MatrixXd build_covariance(const ScenarioSpec& spec) {
  const int m = spec.m;
  if (spec.cov == CovKind::Identity)
    return Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd S(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      S(i, j) = i == j ? spec.cov_diagonal(i)
                       : std::pow(0.4, std::abs(i - j)) *
                             std::sqrt(spec.cov_diagonal(i) * spec.cov_diagonal(j));
  return S;
}

double spectral_radius(const CoefficientTensor& B) {
  const int m = B.m(), p = B.p();
  const Eigen::Index d = static_cast<Eigen::Index>(m) * p;
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(d, d);
  for (int l = 0; l < p; ++l)
    F.block(0, static_cast<Eigen::Index>(l) * m, m, m) = B.lag(l).transpose();
  for (int l = 1; l < p; ++l)
    F.block(static_cast<Eigen::Index>(l) * m, static_cast<Eigen::Index>(l - 1) * m,
            m, m) = Eigen::MatrixXd::Identity(m, m);
  Eigen::EigenSolver<Eigen::MatrixXd> es(F, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    fail(ErrorKind::NonFinite, "companion eigenvalues did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

constexpr double kRadiusCap = 0.9;

struct LagPattern {
  std::vector<int> block_rows;  // rows carrying a whole derived-group block
  std::vector<int> diag_nodes;
};

// Split a total as evenly as the active lags allow, earlier lags first.
std::vector<int> per_lag_targets(int total, int lags) {
  std::vector<int> t(static_cast<size_t>(lags), total / lags);
  for (int i = 0; i < total % lags; ++i) ++t[static_cast<size_t>(i)];
  return t;
}

// Choose whole row blocks plus diagonal entries summing exactly to target.
// Rows with fewer prior uses come first so activity spreads across nodes,
// which keeps the companion spectral radius (and so the post-rescale
// magnitudes) from collapsing.
LagPattern place_lag(const ScenarioSpec& spec, int target,
                     std::vector<int>& row_use, std::vector<int>& diag_use,
                     std::mt19937_64& rng) {
  const int m = spec.m;
  std::vector<int> rows;
  for (int i = 0; i < m; ++i)
    if (spec.seg.derived_group(i, spec.seg.group_of(i)).size() > 0) rows.push_back(i);
  std::shuffle(rows.begin(), rows.end(), rng);
  std::stable_sort(rows.begin(), rows.end(), [&](int a, int b) {
    return row_use[static_cast<size_t>(a)] < row_use[static_cast<size_t>(b)];
  });

  const int diag_target = std::min(m / 2, target / 2);
  LagPattern pattern;
  int remaining = target;
  for (int row : rows) {
    if (remaining <= diag_target) break;
    const int size = static_cast<int>(
        spec.seg.derived_group(row, spec.seg.group_of(row)).size());
    if (size > remaining) continue;
    // never leave more open slots than the diagonal can absorb
    if (remaining - size < 0) continue;
    pattern.block_rows.push_back(row);
    remaining -= size;
  }
  if (remaining > m)
    fail(ErrorKind::InfeasiblePattern,
         "cannot reach " + std::to_string(target) + " nonzeros in one lag");

  std::vector<int> nodes(static_cast<size_t>(m));
  std::iota(nodes.begin(), nodes.end(), 0);
  std::shuffle(nodes.begin(), nodes.end(), rng);
  std::stable_sort(nodes.begin(), nodes.end(), [&](int a, int b) {
    return diag_use[static_cast<size_t>(a)] < diag_use[static_cast<size_t>(b)];
  });
  pattern.diag_nodes.assign(nodes.begin(), nodes.begin() + remaining);

  for (int row : pattern.block_rows) ++row_use[static_cast<size_t>(row)];
  for (int node : pattern.diag_nodes) ++diag_use[static_cast<size_t>(node)];
  std::sort(pattern.block_rows.begin(), pattern.block_rows.end());
  std::sort(pattern.diag_nodes.begin(), pattern.diag_nodes.end());
  return pattern;
}

}  // namespace

GroundTruth build_coefficients(const ScenarioSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const int m = spec.m;
  const int lags = static_cast<int>(spec.active_lags.size());
  const bool nodewise = spec.seg.kind() == GroupingKind::Nodewise;

  GroundTruth truth;
  truth.coefficients = CoefficientTensor(spec.p, m);
  truth.indicators = IndicatorSet(spec.p, m, spec.seg.group_count());

  const std::vector<int> targets = per_lag_targets(spec.nonzero_count, lags);
  std::vector<int> row_use(static_cast<size_t>(m), 0);
  std::vector<int> diag_use(static_cast<size_t>(m), 0);

  for (int idx = 0; idx < lags; ++idx) {
    const int l = spec.active_lags[static_cast<size_t>(idx)] - 1;
    const int target = targets[static_cast<size_t>(idx)];
    if (nodewise) {
      // diagonal-first and the preset counts stay within the diagonal
      if (target > m)
        fail(ErrorKind::InfeasiblePattern,
             "nodewise lag target exceeds the diagonal capacity");
      std::vector<int> nodes(static_cast<size_t>(m));
      std::iota(nodes.begin(), nodes.end(), 0);
      std::shuffle(nodes.begin(), nodes.end(), rng);
      std::stable_sort(nodes.begin(), nodes.end(), [&](int a, int b) {
        return diag_use[static_cast<size_t>(a)] < diag_use[static_cast<size_t>(b)];
      });
      for (int j = 0; j < target; ++j) {
        const int node = nodes[static_cast<size_t>(j)];
        truth.indicators.set_gamma(l, node, true);
        ++diag_use[static_cast<size_t>(node)];
      }
    } else {
      LagPattern pattern = place_lag(spec, target, row_use, diag_use, rng);
      for (int row : pattern.block_rows)
        truth.indicators.set_eta(l, row, spec.seg.group_of(row), true);
      for (int node : pattern.diag_nodes)
        truth.indicators.set_gamma(l, node, true);
    }
  }

  // magnitudes +-U[0.2, 0.8], assigned so that after the common stabilizing
  // shrink every active factor still carries enough evidence to be recovered
  struct Slot {
    int l, i, k;  // k = -1 marks an own-lag factor
    int size;
  };
  std::vector<Slot> slots;
  for (int l = 0; l < spec.p; ++l)
    for (int i = 0; i < m; ++i) {
      if (truth.indicators.gamma(l, i)) slots.push_back({l, i, -1, 1});
      for (int k = 0; k < spec.seg.group_count(); ++k)
        if (truth.indicators.eta(l, i, k))
          slots.push_back({l, i, k,
                           static_cast<int>(spec.seg.derived_group(i, k).size())});
    }
  // wide blocks first (their inclusion clears a larger complexity penalty),
  // then lower lags first: the companion radius tolerates a coefficient b at
  // lag l only up to |b| <= cap^l, so the big draws belong at short lags
  std::shuffle(slots.begin(), slots.end(), rng);
  std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    if (a.size != b.size) return a.size > b.size;
    return a.l < b.l;
  });

  std::uniform_real_distribution<double> magnitude(0.2, 0.8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> draws(static_cast<size_t>(spec.nonzero_count));
  for (double& v : draws) v = magnitude(rng);
  std::sort(draws.begin(), draws.end(), [](double a, double b) { return a > b; });

  // deal the sorted draws in rounds: every factor's first coefficient comes
  // from the top draws (wide blocks first, since their inclusion has to clear
  // a larger complexity penalty), then the blocks fill their remaining
  // coefficients from what is left
  std::vector<std::vector<double>> dealt(slots.size());
  int max_size = 0;
  for (const Slot& slot : slots) max_size = std::max(max_size, slot.size);
  size_t next = 0;
  for (int round = 0; round < max_size; ++round)
    for (size_t s = 0; s < slots.size(); ++s)
      if (slots[s].size > round) dealt[s].push_back(draws.at(next++));

  // own-lag signs alternate across each node's active lags so a node's own
  // history terms partially cancel instead of compounding toward a unit root;
  // block cells keep independent signs
  std::vector<double> node_sign(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) node_sign[static_cast<size_t>(i)] =
      unit(rng) < 0.5 ? -1.0 : 1.0;

  for (size_t s = 0; s < slots.size(); ++s) {
    const Slot& slot = slots[s];
    if (slot.k < 0) {
      double& sign = node_sign[static_cast<size_t>(slot.i)];
      truth.coefficients.lag(slot.l)(slot.i, slot.i) = sign * dealt[s][0];
      sign = -sign;
    } else {
      const std::vector<int>& cols = spec.seg.derived_group(slot.i, slot.k);
      for (size_t j = 0; j < cols.size(); ++j) {
        const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        truth.coefficients.lag(slot.l)(slot.i, cols[j]) = sign * dealt[s][j];
      }
    }
  }

  double rho = spectral_radius(truth.coefficients);
  truth.rescale = 1.0;
  if (rho > kRadiusCap) {
    auto radius_at = [&](double c) {
      CoefficientTensor scaled = truth.coefficients;
      for (int l = 0; l < spec.p; ++l) scaled.lag(l) *= c;
      return spectral_radius(scaled);
    };
    double lo = kRadiusCap / rho;  // usually already feasible
    for (int guard = 0; guard < 80 && radius_at(lo) > kRadiusCap; ++guard) lo *= 0.8;
    if (radius_at(lo) > kRadiusCap)
      fail(ErrorKind::InfeasiblePattern, "could not stabilize the coefficient draw");
    double hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (radius_at(mid) <= kRadiusCap)
        lo = mid;
      else
        hi = mid;
    }
    truth.rescale = lo;
    for (int l = 0; l < spec.p; ++l) truth.coefficients.lag(l) *= lo;
    rho = spectral_radius(truth.coefficients);
  }
  truth.spectral_radius = rho;
  return truth;
}

Eigen::MatrixXd iterate_var(const CoefficientTensor& B,
                            const Eigen::MatrixXd& noise, int burn_in) {
  const int m = B.m(), p = B.p();
  if (noise.cols() != m) fail(ErrorKind::ShapeMismatch, "noise width mismatch");
  if (noise.rows() <= burn_in)
    fail(ErrorKind::ShapeMismatch, "need more noise rows than burn-in");
  const Eigen::Index total = noise.rows();
  Eigen::MatrixXd path(total, m);
  for (Eigen::Index t = 0; t < total; ++t) {
    Eigen::RowVectorXd y = noise.row(t);
    for (int l = 1; l <= p; ++l) {
      if (t - l < 0) continue;  // zero initial state
      y.noalias() += path.row(t - l) * B.lag(l - 1);
    }
    if (y.cwiseAbs().maxCoeff() > 1e8)
      fail(ErrorKind::ExplosivePath,
           "simulated path exceeded 1e8 at row " + std::to_string(t + 1));
    path.row(t) = y;
  }
  return path.bottomRows(total - burn_in);
}

SimulatedData generate(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  constexpr int kBurnIn = 200;
  std::mt19937_64 rng(seed);
  SimulatedData out;
  out.truth = build_coefficients(spec, rng);

  const Eigen::MatrixXd Sigma = build_covariance(spec);
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::NotPositiveDefinite, "scenario covariance is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();

  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd z(kBurnIn + spec.T, spec.m);
  for (Eigen::Index t = 0; t < z.rows(); ++t)
    for (int j = 0; j < spec.m; ++j) z(t, j) = gauss(rng);
  const Eigen::MatrixXd noise = z * L.transpose();

  out.panel.values = iterate_var(out.truth.coefficients, noise, kBurnIn);
  out.panel.node_ids.reserve(static_cast<size_t>(spec.m));
  for (int i = 0; i < spec.m; ++i)
    out.panel.node_ids.push_back("n" + std::to_string(i + 1));
  out.noise = noise.bottomRows(spec.T);
  return out;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace nar

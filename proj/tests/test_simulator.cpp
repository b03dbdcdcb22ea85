#include "nar/simulator.hpp"

#include <cmath>
#include <set>

#include "doctest.h"
#include "nar/design_matrix.hpp"
#include "test_util.hpp"

using namespace nar;
using testutil::expect_kind;

namespace {

struct PresetExpect {
  const char* name;
  int m;
  int T;
  int nonzeros;
  GroupingKind kind;
};

const PresetExpect kPresets[] = {
    {"m10UG", 10, 301, 72, GroupingKind::Universal},
    {"m10SG", 10, 301, 40, GroupingKind::Segmented},
    {"m10NG", 10, 301, 18, GroupingKind::Nodewise},
    {"m20UG", 20, 301, 145, GroupingKind::Universal},
    {"m20SG", 20, 301, 109, GroupingKind::Segmented},
    {"m20NG", 20, 301, 27, GroupingKind::Nodewise},
    {"m50UG", 50, 701, 355, GroupingKind::Universal},
    {"m50SG", 50, 701, 360, GroupingKind::Segmented},
    {"m50NG", 50, 701, 128, GroupingKind::Nodewise},
};

}  // namespace

TEST_CASE("preset scenario shapes") {
  for (const auto& e : kPresets) {
    for (CovKind cov : {CovKind::Identity, CovKind::Toeplitz}) {
      ScenarioSpec spec = preset_scenario(e.name, cov);
      CHECK(spec.name == e.name);
      CHECK(spec.m == e.m);
      CHECK(spec.p == 5);
      CHECK(spec.T == e.T);
      CHECK(spec.nonzero_count == e.nonzeros);
      CHECK(spec.seg.kind() == e.kind);
      CHECK(spec.active_lags == std::vector<int>{1, 3, 5});
      CHECK(spec.cov_diagonal.size() == e.m);
      spec.validate();
    }
  }
  CHECK(preset_scenario_names().size() == 9);
  expect_kind(ErrorKind::InvalidConfig,
              [] { preset_scenario("m15UG", CovKind::Identity); });
}

TEST_CASE("preset segmentations and noise diagonals") {
  ScenarioSpec s10 = preset_scenario("m10SG", CovKind::Toeplitz);
  CHECK(s10.seg.group_count() == 3);
  CHECK(s10.seg.group(0) == std::vector<int>{0, 1, 2});
  CHECK(s10.seg.group(1) == std::vector<int>{3, 4, 5});
  CHECK(s10.seg.group(2) == std::vector<int>{6, 7, 8, 9});
  for (int i = 0; i < 6; ++i) CHECK(s10.cov_diagonal(i) == 0.9);
  for (int i = 6; i < 10; ++i) CHECK(s10.cov_diagonal(i) == 0.8);

  ScenarioSpec s20 = preset_scenario("m20SG", CovKind::Toeplitz);
  CHECK(s20.seg.group_count() == 4);
  CHECK(s20.seg.group(0) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(s20.seg.group(2) == std::vector<int>{10, 11, 12});
  CHECK(s20.seg.group(3) == std::vector<int>{13, 14, 15, 16, 17, 18, 19});
  for (int i = 0; i < 3; ++i) CHECK(s20.cov_diagonal(i) == 0.9);
  for (int i = 3; i < 6; ++i) CHECK(s20.cov_diagonal(i) == 0.8);
  for (int i = 6; i < 20; ++i) CHECK(s20.cov_diagonal(i) == 0.9);

  ScenarioSpec s50 = preset_scenario("m50SG", CovKind::Toeplitz);
  CHECK(s50.seg.group_count() == 8);
  CHECK(s50.seg.group(4) ==
        std::vector<int>{20, 21, 22, 23, 24, 25, 26, 27, 28, 29});
  CHECK(s50.seg.group(7) ==
        std::vector<int>{40, 41, 42, 43, 44, 45, 46, 47, 48, 49});
  for (int i = 0; i < 3; ++i) CHECK(s50.cov_diagonal(i) == 0.9);
  for (int i = 3; i < 6; ++i) CHECK(s50.cov_diagonal(i) == 0.8);
  for (int i = 6; i < 20; ++i) CHECK(s50.cov_diagonal(i) == 0.9);
  for (int i = 20; i < 40; ++i) CHECK(s50.cov_diagonal(i) == 0.8);
  for (int i = 40; i < 50; ++i) CHECK(s50.cov_diagonal(i) == 0.9);
}

TEST_CASE("covariance construction") {
  ScenarioSpec spec = preset_scenario("m10UG", CovKind::Identity);
  CHECK(build_covariance(spec).isIdentity(0.0));

  spec = preset_scenario("m10UG", CovKind::Toeplitz);
  Eigen::MatrixXd S = build_covariance(spec);
  for (int i = 0; i < 10; ++i) CHECK(S(i, i) == spec.cov_diagonal(i));
  CHECK(S(0, 1) ==
        doctest::Approx(0.4 * std::sqrt(0.9 * 0.9)).epsilon(1e-15));
  CHECK(S(5, 7) ==
        doctest::Approx(0.16 * std::sqrt(0.9 * 0.8)).epsilon(1e-15));
  CHECK(S.isApprox(S.transpose()));
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("generated truth matches every scenario contract") {
  for (const auto& e : kPresets) {
    ScenarioSpec spec = preset_scenario(e.name, CovKind::Identity);
    SimulatedData data = generate(spec, 12345);

    CHECK(data.panel.rows() == e.T);
    CHECK(data.panel.cols() == e.m);
    CHECK(data.noise.rows() == e.T);
    CHECK(data.truth.coefficients.nonzero_count() == e.nonzeros);
    CHECK(data.truth.spectral_radius <= 0.9 + 1e-9);
    CHECK(data.truth.spectral_radius ==
          doctest::Approx(spectral_radius(data.truth.coefficients)).epsilon(1e-9));

    // nonzeros live only on the declared lags, inside the group structure,
    // with magnitudes inside the scaled draw range
    const CoefficientMask mask = nonzero_mask(data.truth.coefficients);
    const CoefficientMask from_ind =
        coefficient_mask(data.truth.indicators, spec.seg);
    CHECK(mask.active == from_ind.active);
    for (int l = 0; l < 5; ++l) {
      const bool active_lag = l == 0 || l == 2 || l == 4;
      const auto& B = data.truth.coefficients.lag(l);
      if (!active_lag) {
        CHECK(B.isZero(0.0));
        continue;
      }
      for (int i = 0; i < e.m; ++i)
        for (int j = 0; j < e.m; ++j) {
          const double v = B(i, j);
          if (v == 0.0) continue;
          CHECK(std::abs(v) <= 0.8);
          CHECK(std::abs(v) > 0.0);
          if (e.kind == GroupingKind::Nodewise) CHECK(i == j);
          if (i != j) CHECK(spec.seg.group_of(i) == spec.seg.group_of(j));
        }
    }
  }
}

TEST_CASE("simulation reconstructs its own recursion") {
  ScenarioSpec spec = preset_scenario("m10SG", CovKind::Toeplitz);
  SimulatedData data = generate(spec, 777);

  DesignMatrices dm = embed(data.panel, 5);
  Eigen::MatrixXd residual = dm.Y;
  for (int l = 0; l < 5; ++l) residual -= dm.X[l] * data.truth.coefficients.lag(l);
  CHECK((residual - data.noise.bottomRows(spec.T - 5)).cwiseAbs().maxCoeff() <
        1e-9);
}

TEST_CASE("generation is deterministic in the seed") {
  ScenarioSpec spec = preset_scenario("m10UG", CovKind::Identity);
  SimulatedData a = generate(spec, 99);
  SimulatedData b = generate(spec, 99);
  SimulatedData c = generate(spec, 100);
  CHECK((a.panel.values.array() == b.panel.values.array()).all());
  CHECK(a.truth.rescale == b.truth.rescale);
  CHECK_FALSE((a.panel.values.array() == c.panel.values.array()).all());
}

TEST_CASE("noise covariance is respected empirically") {
  // With identity covariance the sample covariance of the retained noise
  // should be near the identity at T = 701.
  ScenarioSpec spec = preset_scenario("m50UG", CovKind::Identity);
  SimulatedData data = generate(spec, 5);
  Eigen::MatrixXd centered =
      data.noise.rowwise() - data.noise.colwise().mean();
  Eigen::MatrixXd S = centered.transpose() * centered / (data.noise.rows() - 1);
  CHECK(std::abs(S(0, 0) - 1.0) < 0.25);
  CHECK(std::abs(S(0, 1)) < 0.2);
}

TEST_CASE("explosive paths are refused") {
  CoefficientTensor B(1, 2);
  B.lag(0) << 1.5, 0.0, 0.0, 1.5;
  Eigen::MatrixXd noise = Eigen::MatrixXd::Ones(200, 2);
  expect_kind(ErrorKind::ExplosivePath, [&] { iterate_var(B, noise, 0); });
}

TEST_CASE("scenario json round trip") {
  ScenarioSpec spec = preset_scenario("m20SG", CovKind::Toeplitz);
  ScenarioSpec back = ScenarioSpec::from_json_text(spec.to_json_text());
  CHECK(back.name == spec.name);
  CHECK(back.m == spec.m);
  CHECK(back.p == spec.p);
  CHECK(back.T == spec.T);
  CHECK(back.seg == spec.seg);
  CHECK(back.active_lags == spec.active_lags);
  CHECK(back.nonzero_count == spec.nonzero_count);
  CHECK(back.cov == spec.cov);
  CHECK(back.cov_diagonal.isApprox(spec.cov_diagonal));
}

TEST_CASE("seed derivation is stable and spread out") {
  const std::uint64_t root = 42;
  CHECK(derive_seed(root, 0) == derive_seed(root, 0));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 100; ++i) seen.insert(derive_seed(root, i));
  CHECK(seen.size() == 100);
  CHECK(derive_seed(root, 1) != derive_seed(root + 1, 0));
}

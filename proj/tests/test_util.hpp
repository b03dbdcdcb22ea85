#pragma once

#include <functional>
#include <random>
#include <string>

#include "doctest.h"
#include "nar/core_types.hpp"
#include "nar/design_matrix.hpp"
#include "nar/errors.hpp"

namespace nar::testutil {

// Asserts that fn throws Error with the given kind.
inline void expect_kind(ErrorKind kind, const std::function<void()>& fn) {
  bool threw = false;
  try {
    fn();
  } catch (const Error& e) {
    threw = true;
    CHECK(error_kind_name(e.kind()) == std::string(error_kind_name(kind)));
  }
  CHECK(threw);
}

// Gaussian panel, deterministic in the seed.
inline TimeSeriesPanel random_panel(int T, int m, unsigned seed,
                                    double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  TimeSeriesPanel panel;
  panel.values.resize(T, m);
  for (int r = 0; r < T; ++r)
    for (int c = 0; c < m; ++c) panel.values(r, c) = dist(rng);
  return panel;
}

inline DesignMatrices random_design(int T, int m, int p, unsigned seed) {
  return embed(random_panel(T, m, seed), p);
}

}  // namespace nar::testutil

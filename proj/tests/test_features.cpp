#include <catch2/catch_amalgamated.hpp>

#include "ratelab/features.hpp"

using namespace ratelab;

TEST_CASE("neutral state maps to the zero-centered feature vector") {
  BudgetState state;  // deviation = 0, progress = 0
  const double r_eff = 0.1;
  const BudgetFeatures f = build_budget_features(r_eff, r_eff, state, 4096.0, 4096.0);
  CHECK(f.v[0] == Catch::Approx(std::log(0.1)).epsilon(1e-15));
  CHECK(f.v[1] == 0.0);
  CHECK(f.v[2] == 0.0);
  CHECK(f.v[3] == 0.0);
  CHECK(f.v[4] == 0.0);
}

TEST_CASE("budget feature entries evaluate per definition") {
  BudgetState state;
  state.deviation = 0.05;
  state.progress = 0.75;
  const BudgetFeatures f = build_budget_features(0.1, 0.12, state, 1024.0, 4096.0);
  CHECK(f.v[0] == Catch::Approx(-2.302585092994046).epsilon(1e-12));
  CHECK(f.v[1] == Catch::Approx(std::log(1.2)).epsilon(1e-12));
  CHECK(f.v[2] == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(f.v[3] == 0.75);
  CHECK(f.v[4] == Catch::Approx(std::log(0.25)).epsilon(1e-12));
  CHECK(f.v[4] == Catch::Approx(-1.386294361119891).epsilon(1e-12));
}

TEST_CASE("coding stats normalize by the effective target") {
  EncodeResult prev;
  prev.bpp_mv = 0.02;
  prev.bpp_res = 0.08;
  prev.motion_sparsity = 0.5;
  prev.warp_error = 1.0;
  const CodingStats c = build_coding_stats(prev, 0.1);
  CHECK(c.v[0] == Catch::Approx(0.2).epsilon(1e-12));
  CHECK(c.v[1] == Catch::Approx(0.8).epsilon(1e-12));
  CHECK(c.v[2] == 0.5);
  CHECK(c.v[3] == 0.0);  // log 1
}

TEST_CASE("degenerate inputs stay finite through the epsilon floor") {
  BudgetState state;
  const BudgetFeatures f = build_budget_features(0.0, 0.0, state, 32.0, 4096.0);
  for (double v : f.v) CHECK(std::isfinite(v));

  EncodeResult prev;  // all zero
  const CodingStats c = build_coding_stats(prev, 0.0);
  for (double v : c.v) CHECK(std::isfinite(v));
}

TEST_CASE("builders are pure and bitwise deterministic") {
  BudgetState state;
  state.deviation = -0.013;
  state.progress = 0.5;
  const BudgetFeatures a = build_budget_features(0.07, 0.085, state, 913.0, 4096.0);
  const BudgetFeatures b = build_budget_features(0.07, 0.085, state, 913.0, 4096.0);
  CHECK(a.v == b.v);

  EncodeResult prev;
  prev.bpp_mv = 0.011;
  prev.bpp_res = 0.072;
  prev.motion_sparsity = 0.41;
  prev.warp_error = 0.13;
  CHECK(build_coding_stats(prev, 0.07).v == build_coding_stats(prev, 0.07).v);
}

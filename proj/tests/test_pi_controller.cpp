#include <catch2/catch_amalgamated.hpp>

#include "ratelab/core.hpp"
#include "ratelab/pi_controller.hpp"
#include "support/oracles.hpp"

using namespace ratelab;

TEST_CASE("log_error evaluates the log-domain bitrate error") {
  CHECK(log_error(0.1, 0.1) == 0.0);
  CHECK(log_error(0.12, 0.10) == Catch::Approx(std::log(1.2)).epsilon(1e-15));
  CHECK(log_error(0.05, 0.10) == Catch::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(log_error(0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(log_error(0.1, -1.0), std::invalid_argument);
}

TEST_CASE("zero error leaves the state untouched") {
  PiState s;
  const double delta = pi_step(s, PiGains{}, PiBounds{}, 0.0);
  CHECK(delta == 0.0);
  CHECK(s.lambda_base == 1024.0);
  CHECK(s.integral == 0.0);
}

TEST_CASE("single step matches the update equations") {
  PiState s;
  const double e = std::log(1.2);
  const double delta = pi_step(s, PiGains{0.9, 0.05, 0.0}, PiBounds{}, e);
  // I = e, delta = -(0.9 e + 0.05 e) = -0.95 e
  CHECK(s.integral == Catch::Approx(e).epsilon(1e-15));
  CHECK(delta == Catch::Approx(-0.95 * e).epsilon(1e-15));
  CHECK(s.lambda_base == Catch::Approx(1024.0 * std::exp(-0.95 * e)).epsilon(1e-15));
  CHECK(s.lambda_base == Catch::Approx(861.13).epsilon(1e-4));
  CHECK(s.prev_error == e);
}

TEST_CASE("large errors saturate the increment clamp") {
  PiState s;
  const double delta = pi_step(s, PiGains{0.9, 0.05, 0.0}, PiBounds{}, 2.0);
  CHECK(delta == -0.30);
  CHECK(s.lambda_base == Catch::Approx(1024.0 * std::exp(-0.30)).epsilon(1e-12));
  CHECK(s.lambda_base == Catch::Approx(758.58).epsilon(1e-4));
}

TEST_CASE("derivative term reacts to the error change") {
  PiState s;
  s.prev_error = 0.1;
  const PiGains gains{0.0, 0.0, 1.0};
  const double delta = pi_step(s, gains, PiBounds{}, 0.25);
  CHECK(delta == Catch::Approx(-(0.25 - 0.1)).epsilon(1e-15));
}

TEST_CASE("randomized steps keep every bound") {
  const PiGains gains{0.9, 0.05, 0.0};
  const PiBounds bounds{};
  PiState s;
  rng::Engine engine(7);
  for (int i = 0; i < 100000; ++i) {
    const double e = (engine.uniform01() - 0.5) * 8.0;
    const double delta = pi_step(s, gains, bounds, e);
    REQUIRE(std::abs(delta) <= bounds.delta_max);
    REQUIRE(std::abs(s.integral) <= bounds.i_max);
    REQUIRE(s.lambda_base >= bounds.lambda_min);
    REQUIRE(s.lambda_base <= bounds.lambda_max);
  }
}

TEST_CASE("sign correctness with zero integral history") {
  for (double e : {0.5, 0.05, 2.5, -0.5, -0.05, -2.5}) {
    PiState s;
    const double delta = pi_step(s, PiGains{0.9, 0.05, 0.0}, PiBounds{}, e);
    if (e > 0.0) CHECK(delta <= 0.0);
    if (e < 0.0) CHECK(delta >= 0.0);
  }
}

TEST_CASE("steps agree with the independent reference implementation") {
  const PiGains gains{0.9, 0.05, 0.02};
  const PiBounds bounds{};
  PiState s;
  oracle::PiRef ref{1024.0, 0.0, 0.0};
  rng::Engine engine(123);
  for (int i = 0; i < 500; ++i) {
    const double e = (engine.uniform01() - 0.5) * 3.0;
    pi_step(s, gains, bounds, e);
    ref = oracle::pi_reference_step(ref, e, gains.kp, gains.ki, gains.kd, bounds.i_max,
                                    bounds.delta_max, bounds.lambda_min,
                                    bounds.lambda_max);
    REQUIRE(s.lambda_base == ref.lambda);
    REQUIRE(s.integral == ref.integral);
    REQUIRE(s.prev_error == ref.prev_error);
  }
}

TEST_CASE("closed loop on the log-linear plant converges to the target") {
  // Simulation oracle for the PI fixed point: gains kp=0.9, ki=0.05 on a
  // gamma=0.7 plant. The loop always settles, and from a near-nominal
  // start the error passes below 1e-3; the decay is governed by the slow
  // integral mode (|z| ~ 0.94), so wide targets need more frames.
  const double base_rate = 0.001, gamma = 0.7;
  for (double target : {0.12, 0.13, 0.14}) {
    const auto errors =
        oracle::pi_closed_loop_errors(1024.0, target, base_rate, gamma, 0.9, 0.05, 200);
    for (std::size_t t = 120; t < errors.size(); ++t) {
      REQUIRE(std::abs(errors[t]) < 1e-3);
    }
  }
  // Stationarity of the fixed point: starting exactly on target stays there.
  const double lambda_star = std::pow(0.1 / base_rate, 1.0 / gamma);
  const auto at_fixed_point =
      oracle::pi_closed_loop_errors(lambda_star, 0.1, base_rate, gamma, 0.9, 0.05, 50);
  for (double e : at_fixed_point) CHECK(std::abs(e) < 1e-12);
}

TEST_CASE("gain validation rejects all-zero and negative gains") {
  CHECK_THROWS_AS(PiGains({0.0, 0.0, 0.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(PiGains({-0.1, 0.0, 0.0}).validate(), std::invalid_argument);
  CHECK_NOTHROW(PiGains{}.validate());
}

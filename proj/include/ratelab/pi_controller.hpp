#pragma once

#include <cmath>
#include <stdexcept>

#include "ratelab/core.hpp"

namespace ratelab {

struct PiGains {
  double kp = 0.9;
  double ki = 0.05;
  double kd = 0.0;

  void validate() const {
    if (kp < 0.0 || ki < 0.0 || kd < 0.0) {
      throw std::invalid_argument("pi gains must be nonnegative");
    }
    if (kp == 0.0 && ki == 0.0 && kd == 0.0) {
      throw std::invalid_argument("at least one pi gain must be > 0");
    }
  }
};

struct PiBounds {
  double lambda_min = 32.0;
  double lambda_max = 4096.0;
  double i_max = 10.0;        // integral anti-windup clamp
  double delta_max = 0.30;    // per-frame log-lambda update clamp

  void validate() const {
    if (!(lambda_min > 0.0 && lambda_min < lambda_max)) {
      throw std::invalid_argument("need 0 < lambda_min < lambda_max");
    }
    if (!(i_max > 0.0)) throw std::invalid_argument("i_max must be > 0");
    if (!(delta_max > 0.0)) throw std::invalid_argument("delta_max must be > 0");
  }
};

struct PiState {
  double lambda_base = 1024.0;
  double integral = 0.0;
  double prev_error = 0.0;
};

// Bitrate error in the log domain: positive when the encode overshot.
inline double log_error(double rate_actual, double rate_target) {
  if (!(rate_actual > 0.0) || !(rate_target > 0.0)) {
    throw std::invalid_argument("log_error: rates must be > 0");
  }
  return std::log(rate_actual / rate_target);
}

// One PI/PID update in the log domain. Clip order: integral first, then
// the increment, then lambda; no windup back-off after the lambda clip.
inline double pi_step(PiState& state, const PiGains& gains, const PiBounds& bounds,
                      double error) {
  state.integral = clip(state.integral + error, -bounds.i_max, bounds.i_max);
  const double derivative = error - state.prev_error;
  double delta = -(gains.kp * error + gains.ki * state.integral + gains.kd * derivative);
  delta = clip(delta, -bounds.delta_max, bounds.delta_max);
  state.lambda_base = clip(state.lambda_base * std::exp(delta), bounds.lambda_min,
                           bounds.lambda_max);
  state.prev_error = error;
  return delta;
}

}  // namespace ratelab

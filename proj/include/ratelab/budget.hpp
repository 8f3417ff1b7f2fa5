#pragma once

#include <cstddef>
#include <stdexcept>

#include "ratelab/core.hpp"

namespace ratelab {

// Sequence-level rate target and mini-GOP allocation parameters. All bit
// quantities are bpp-sums (bpp x frame count), so nothing here depends on
// frame resolution.
struct BudgetConfig {
  double target_rate = 0.1;        // R_s
  std::size_t smoothing_window = 40;  // SW
  std::size_t minigop_len = 4;        // N_m
  double r_min = 0.0125;              // effective-target floor
  double r_max = 0.8;                 // effective-target ceiling

  static BudgetConfig for_target(double target, std::size_t smoothing_window = 40,
                                 std::size_t minigop_len = 4) {
    BudgetConfig cfg;
    cfg.target_rate = target;
    cfg.smoothing_window = smoothing_window;
    cfg.minigop_len = minigop_len;
    cfg.r_min = target / 8.0;
    cfg.r_max = target * 8.0;
    return cfg;
  }

  void validate() const {
    if (!(target_rate > 0.0)) throw std::invalid_argument("budget: target_rate must be > 0");
    if (!(0.0 < r_min && r_min < r_max)) throw std::invalid_argument("budget: need 0 < r_min < r_max");
    if (smoothing_window < 1) throw std::invalid_argument("budget: smoothing_window must be >= 1");
    if (minigop_len < 1) throw std::invalid_argument("budget: minigop_len must be >= 1");
  }
};

struct BudgetState {
  std::size_t coded_p_frames = 0;        // N_coded
  double accumulated_bits = 0.0;         // sum of coded P-frame bpp
  double minigop_budget = 0.0;           // R_mg of the open mini-GOP
  double spent_in_minigop = 0.0;
  std::size_t frames_left_in_minigop = 0;  // N_rem
  double deviation = 0.0;                // accumulated signed (actual - r_eff)
  double progress = 0.0;                 // position within the mini-GOP, [0,1]
};

// Opens a fresh mini-GOP, amortizing the accumulated deviation from the
// sequence target over the smoothing window. The computed budget may be
// nonpositive; the effective-target clip floors it later.
inline void open_minigop(const BudgetConfig& cfg, BudgetState& state) {
  const double window = static_cast<double>(cfg.smoothing_window);
  const double ideal =
      cfg.target_rate * (static_cast<double>(state.coded_p_frames) + window);
  state.minigop_budget = ((ideal - state.accumulated_bits) / window) *
                         static_cast<double>(cfg.minigop_len);
  state.spent_in_minigop = 0.0;
  state.frames_left_in_minigop = cfg.minigop_len;
  state.progress = 0.0;
}

// Drops the remaining frames of the open mini-GOP (used when a key frame
// interrupts it). Accounting totals are untouched.
inline void close_minigop(BudgetState& state) {
  state.frames_left_in_minigop = 0;
  state.progress = 1.0;
}

inline double effective_target(const BudgetConfig& cfg, const BudgetState& state) {
  if (state.frames_left_in_minigop < 1) {
    throw std::logic_error("effective_target: no frames left in mini-GOP");
  }
  const double remaining = state.minigop_budget - state.spent_in_minigop;
  return clip(remaining / static_cast<double>(state.frames_left_in_minigop),
              cfg.r_min, cfg.r_max);
}

// Books one coded P-frame. I-frames never pass through here.
inline void record_p_frame(const BudgetConfig& cfg, BudgetState& state,
                           double bpp_actual, double r_eff) {
  if (state.frames_left_in_minigop < 1) {
    throw std::logic_error("record_p_frame: no frames left in mini-GOP");
  }
  state.coded_p_frames += 1;
  state.accumulated_bits += bpp_actual;
  state.spent_in_minigop += bpp_actual;
  state.frames_left_in_minigop -= 1;
  state.deviation += bpp_actual - r_eff;
  state.progress =
      static_cast<double>(cfg.minigop_len - state.frames_left_in_minigop) /
      static_cast<double>(cfg.minigop_len);
}

}  // namespace ratelab

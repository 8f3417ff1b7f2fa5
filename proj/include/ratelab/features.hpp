#pragma once

#include <array>

#include "ratelab/budget.hpp"
#include "ratelab/core.hpp"
#include "ratelab/plant.hpp"

namespace ratelab {

// Both feature builders consume only quantities known before the current
// frame is encoded; nothing from the current frame's EncodeResult enters.

// [log r_eff, log(prev_rate / r_eff), deviation / r_eff, progress,
//  log(lambda_base / lambda_max)]
struct BudgetFeatures {
  std::array<double, 5> v{};
};

// [prev bpp_mv / r_eff, prev bpp_res / r_eff, prev motion sparsity,
//  log(prev warp error)]
struct CodingStats {
  std::array<double, 4> v{};
};

inline BudgetFeatures build_budget_features(double r_eff, double prev_rate,
                                            const BudgetState& budget,
                                            double lambda_base, double lambda_max) {
  BudgetFeatures f;
  f.v[0] = safe_log(r_eff);
  f.v[1] = safe_log(prev_rate) - safe_log(r_eff);
  f.v[2] = safe_div(budget.deviation, r_eff);
  f.v[3] = budget.progress;
  f.v[4] = safe_log(lambda_base) - safe_log(lambda_max);
  return f;
}

inline CodingStats build_coding_stats(const EncodeResult& prev, double r_eff) {
  CodingStats c;
  c.v[0] = safe_div(prev.bpp_mv, r_eff);
  c.v[1] = safe_div(prev.bpp_res, r_eff);
  c.v[2] = prev.motion_sparsity;
  c.v[3] = safe_log(prev.warp_error);
  return c;
}

}  // namespace ratelab

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratelab/core.hpp"

namespace ratelab {

// Per-frame source characteristics driving the synthetic codec response.
// A deterministic function of (plant seed, frame index).
struct FrameContent {
  double complexity = 1.0;       // scales rate
  double detail = 1.0;           // scales distortion
  double motion_share = 0.25;    // fraction of bits spent on motion
  double motion_sparsity = 0.5;  // in [0,1]
  double warp_error = 0.1;       // > 0
  double noise_factor = 1.0;     // multiplicative rate noise, frozen per frame
  // Multiplier on the distortion exponent. With a constant exponent the
  // marginal quality per bit is the same for every frame and uniform rate
  // allocation is already optimal; content-dependent elasticity is what
  // gives frame-level allocation something to win.
  double rd_elasticity = 1.0;
};

struct SyntheticCodecParams {
  double gamma = 0.7;            // rate exponent, rate increasing in lambda
  double eta = 0.9;              // distortion exponent, decreasing in lambda
  double base_rate = 0.001;      // lambda=1024 -> ~0.128 bpp
  double base_distortion = 0.16; // lambda=1024 -> ~35 dB equivalent
  double ar_coeff = 0.9;         // AR(1) persistence of log complexity
  double log_noise_sigma = 0.1;
  double iframe_rate = 0.5;
  double iframe_distortion = 0.02;
  // Couples detail to complexity so harder content is also costlier to
  // reconstruct; exposed because it shapes how much allocation can gain.
  double detail_exponent = 1.6;
  // Half-width of log rd_elasticity across content; 0 restores a single
  // global distortion exponent.
  double elasticity_spread = 0.75;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("plant: gamma must be in (0,1]");
    if (!(eta > 0.0)) throw std::invalid_argument("plant: eta must be > 0");
    if (!(base_rate > 0.0)) throw std::invalid_argument("plant: base_rate must be > 0");
    if (!(base_distortion > 0.0)) throw std::invalid_argument("plant: base_distortion must be > 0");
    if (!(ar_coeff >= 0.0 && ar_coeff < 1.0)) throw std::invalid_argument("plant: ar_coeff must be in [0,1)");
    if (!(log_noise_sigma >= 0.0)) throw std::invalid_argument("plant: log_noise_sigma must be >= 0");
    if (!(elasticity_spread >= 0.0 && elasticity_spread < 1.0)) {
      throw std::invalid_argument("plant: elasticity_spread must be in [0,1)");
    }
    if (!(iframe_rate > 0.0)) throw std::invalid_argument("plant: iframe_rate must be > 0");
    if (!(iframe_distortion > 0.0)) throw std::invalid_argument("plant: iframe_distortion must be > 0");
  }
};

// One encode call's observable outputs plus the exact response slopes in
// log-lambda, which the trainer consumes.
struct EncodeResult {
  double bpp_total = 0.0;
  double bpp_mv = 0.0;
  double bpp_res = 0.0;
  double distortion = 0.0;
  double motion_sparsity = 0.0;
  double warp_error = 0.0;
  double d_rate_d_loglambda = 0.0;   // d bpp_total / d log(lambda)
  double d_dist_d_loglambda = 0.0;   // d distortion / d log(lambda)
  bool lambda_clamped = false;       // trace plant: query left the grid
};

// Deterministic AR(1) content stream in the log domain. Generating frame
// by frame keeps any prefix independent of the requested length.
inline std::vector<FrameContent> synth_sequence(const SyntheticCodecParams& p,
                                                std::size_t num_frames) {
  p.validate();
  if (num_frames < 1) throw std::invalid_argument("synth_sequence: num_frames must be >= 1");

  enum Stream : std::uint64_t {
    kComplexity = 1,
    kDetailNoise = 2,
    kShare = 3,
    kSparsity = 4,
    kWarp = 5,
    kRateNoise = 6,
  };

  const double sigma = p.log_noise_sigma;
  // Start at the stationary distribution so statistics are homogeneous
  // from frame 0.
  const double stationary_sd =
      p.ar_coeff > 0.0 ? sigma / std::sqrt(1.0 - p.ar_coeff * p.ar_coeff) : sigma;

  std::vector<FrameContent> frames;
  frames.reserve(num_frames);
  double log_c = stationary_sd * rng::gaussian(p.seed, kComplexity, 0);
  double prev_log_c = log_c;
  double prev_sparsity = 0.0;  // frame 0 references itself, set below
  for (std::size_t t = 0; t < num_frames; ++t) {
    if (t > 0) {
      prev_log_c = log_c;
      log_c = p.ar_coeff * log_c + sigma * rng::gaussian(p.seed, kComplexity, t);
    }
    // Side statistics are smooth functions of complexity plus seeded
    // jitter; every jitter amplitude scales with sigma so that sigma = 0
    // degenerates to fully constant content.
    FrameContent f;
    f.complexity = std::exp(log_c);
    f.detail = std::exp(p.detail_exponent * log_c +
                        0.5 * sigma * rng::gaussian(p.seed, kDetailNoise, t));
    f.motion_share =
        1.0 / (1.0 + std::exp(-(-1.1 + 0.5 * log_c +
                                3.0 * sigma * rng::gaussian(p.seed, kShare, t))));
    f.motion_sparsity =
        1.0 / (1.0 + std::exp(-(0.4 - 0.6 * log_c +
                                3.0 * sigma * rng::gaussian(p.seed, kSparsity, t))));
    f.warp_error = std::exp(-2.0 + 0.8 * log_c +
                            2.0 * sigma * rng::gaussian(p.seed, kWarp, t));
    f.noise_factor = std::exp(sigma * rng::gaussian(p.seed, kRateNoise, t));
    // How strongly this frame's distortion responds to lambda depends on
    // the reference it predicts from, i.e. on the previous frame's motion
    // statistics. Those statistics are exactly what the coding-stats
    // features expose one step later. Frame 0 references itself.
    if (t == 0) {
      prev_sparsity = f.motion_sparsity;
    }
    f.rd_elasticity = std::exp(
        p.elasticity_spread *
        std::tanh(0.5 * prev_log_c + 6.0 * (prev_sparsity - 0.6)));
    prev_sparsity = f.motion_sparsity;
    frames.push_back(f);
  }
  return frames;
}

// Closed-form power-law codec: rate strictly increasing and distortion
// strictly decreasing in lambda, linear in the log domain.
class SyntheticPlant {
 public:
  explicit SyntheticPlant(const SyntheticCodecParams& params) : params_(params) {
    params_.validate();
  }

  const SyntheticCodecParams& params() const { return params_; }

  std::vector<FrameContent> sequence(std::size_t num_frames) const {
    return synth_sequence(params_, num_frames);
  }

  EncodeResult encode_p(std::size_t /*frame_idx*/, const FrameContent& f,
                        double lambda) const {
    if (!(lambda > 0.0)) throw std::invalid_argument("encode_p: lambda must be > 0");
    const double eta_t = params_.eta * f.rd_elasticity;
    EncodeResult r;
    r.bpp_total = f.complexity * params_.base_rate *
                  std::pow(lambda, params_.gamma) * f.noise_factor;
    r.distortion = f.detail * params_.base_distortion * std::pow(lambda, -eta_t);
    r.bpp_mv = f.motion_share * r.bpp_total;
    r.bpp_res = r.bpp_total - r.bpp_mv;
    r.bpp_total = r.bpp_mv + r.bpp_res;  // decomposition holds bit-exactly
    r.motion_sparsity = f.motion_sparsity;
    r.warp_error = f.warp_error;
    r.d_rate_d_loglambda = params_.gamma * r.bpp_total;
    r.d_dist_d_loglambda = -eta_t * r.distortion;
    return r;
  }

  // Fixed-cost key frame, independent of lambda.
  EncodeResult encode_i(std::size_t /*frame_idx*/, const FrameContent& f) const {
    EncodeResult r;
    r.bpp_total = params_.iframe_rate * f.complexity;
    r.distortion = params_.iframe_distortion * f.detail;
    r.bpp_mv = 0.0;
    r.bpp_res = r.bpp_total;
    r.motion_sparsity = f.motion_sparsity;
    r.warp_error = f.warp_error;
    return r;
  }

 private:
  SyntheticCodecParams params_;
};

// One sampled operating point of a recorded encoder response.
struct TraceSample {
  double lambda = 0.0;
  double bpp_mv = 0.0;
  double bpp_res = 0.0;
  double distortion = 0.0;
  double motion_sparsity = 0.0;
  double warp_error = 0.0;

  double bpp_total() const { return bpp_mv + bpp_res; }
};

// Validated per-frame lambda grids of recorded samples.
class TraceTable {
 public:
  explicit TraceTable(std::vector<std::vector<TraceSample>> frames)
      : frames_(std::move(frames)) {
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      const auto& grid = frames_[i];
      const std::string where = "trace frame " + std::to_string(i);
      if (grid.size() < 2) {
        throw std::runtime_error(where + ": needs at least 2 lambda grid points, got " +
                                 std::to_string(grid.size()));
      }
      for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        if (!(grid[k].lambda < grid[k + 1].lambda)) {
          throw std::runtime_error(where + ": column lambda must be strictly increasing");
        }
        if (grid[k].bpp_total() > grid[k + 1].bpp_total()) {
          throw std::runtime_error(where +
                                   ": columns bpp_mv+bpp_res must be nondecreasing in lambda");
        }
      }
      for (std::size_t k = 0; k < grid.size(); ++k) {
        if (!(grid[k].lambda > 0.0)) throw std::runtime_error(where + ": column lambda must be > 0");
        if (!(grid[k].bpp_total() > 0.0)) {
          throw std::runtime_error(where + ": columns bpp_mv+bpp_res must be > 0");
        }
        if (!(grid[k].distortion > 0.0)) {
          throw std::runtime_error(where + ": column distortion must be > 0");
        }
      }
    }
  }

  std::size_t num_frames() const { return frames_.size(); }
  const std::vector<TraceSample>& grid(std::size_t frame) const { return frames_.at(frame); }

 private:
  std::vector<std::vector<TraceSample>> frames_;
};

// Replays a recorded response by log-log interpolation on each frame's
// lambda grid. Queries beyond the grid clamp to the endpoints.
class TracePlant {
 public:
  explicit TracePlant(TraceTable table, double iframe_rate = 0.5,
                      double iframe_distortion = 0.02)
      : table_(std::move(table)),
        iframe_rate_(iframe_rate),
        iframe_distortion_(iframe_distortion) {}

  const TraceTable& table() const { return table_; }

  std::vector<FrameContent> sequence(std::size_t num_frames) const {
    if (num_frames > table_.num_frames()) {
      throw std::runtime_error("trace has " + std::to_string(table_.num_frames()) +
                               " frames, sequence needs " + std::to_string(num_frames));
    }
    std::vector<FrameContent> frames(num_frames);
    for (std::size_t i = 0; i < num_frames; ++i) {
      const auto& g = table_.grid(i);
      frames[i].motion_sparsity = g.front().motion_sparsity;
      frames[i].warp_error = g.front().warp_error;
    }
    return frames;
  }

  EncodeResult encode_p(std::size_t frame_idx, const FrameContent& /*content*/,
                        double lambda) const {
    if (!(lambda > 0.0)) throw std::invalid_argument("encode_p: lambda must be > 0");
    const auto& g = table_.grid(frame_idx);

    EncodeResult r;
    if (lambda <= g.front().lambda || lambda >= g.back().lambda) {
      const bool outside = lambda < g.front().lambda || lambda > g.back().lambda;
      const TraceSample& s = lambda <= g.front().lambda ? g.front() : g.back();
      r = from_sample(s);
      if (outside) {
        // No extrapolation: flat response beyond the grid, zero slope.
        r.lambda_clamped = true;
      } else {
        fill_slopes(r, g, lambda == g.front().lambda ? 0 : g.size() - 2, s);
      }
      return r;
    }

    std::size_t k = 0;
    while (k + 2 < g.size() && g[k + 1].lambda < lambda) ++k;
    const TraceSample& a = g[k];
    const TraceSample& b = g[k + 1];
    if (lambda == b.lambda) {
      r = from_sample(b);
      fill_slopes(r, g, k, b);
      return r;
    }

    const double t = (std::log(lambda) - std::log(a.lambda)) /
                     (std::log(b.lambda) - std::log(a.lambda));
    const double total = loglog(a.bpp_total(), b.bpp_total(), t);
    const double share_a = a.bpp_mv / a.bpp_total();
    const double share_b = b.bpp_mv / b.bpp_total();
    const double share = share_a + t * (share_b - share_a);

    r.bpp_mv = share * total;
    r.bpp_res = total - r.bpp_mv;
    r.bpp_total = r.bpp_mv + r.bpp_res;  // decomposition holds bit-exactly
    r.distortion = loglog(a.distortion, b.distortion, t);
    r.motion_sparsity = a.motion_sparsity + t * (b.motion_sparsity - a.motion_sparsity);
    r.warp_error = loglog(a.warp_error, b.warp_error, t);
    r.d_rate_d_loglambda = segment_slope(a.bpp_total(), b.bpp_total(), a, b) * total;
    r.d_dist_d_loglambda = segment_slope(a.distortion, b.distortion, a, b) * r.distortion;
    return r;
  }

  EncodeResult encode_i(std::size_t frame_idx, const FrameContent& /*content*/) const {
    const auto& g = table_.grid(frame_idx);
    EncodeResult r;
    r.bpp_total = iframe_rate_;
    r.distortion = iframe_distortion_;
    r.bpp_mv = 0.0;
    r.bpp_res = r.bpp_total;
    r.motion_sparsity = g.front().motion_sparsity;
    r.warp_error = g.front().warp_error;
    return r;
  }

 private:
  static double loglog(double a, double b, double t) {
    return std::exp(std::log(a) + t * (std::log(b) - std::log(a)));
  }

  static double segment_slope(double va, double vb, const TraceSample& a,
                              const TraceSample& b) {
    return (std::log(vb) - std::log(va)) / (std::log(b.lambda) - std::log(a.lambda));
  }

  static EncodeResult from_sample(const TraceSample& s) {
    EncodeResult r;
    r.bpp_total = s.bpp_total();
    r.bpp_mv = s.bpp_mv;
    r.bpp_res = s.bpp_res;
    r.distortion = s.distortion;
    r.motion_sparsity = s.motion_sparsity;
    r.warp_error = s.warp_error;
    return r;
  }

  // Grid-point hit: report the slope of the adjacent segment [k, k+1].
  static void fill_slopes(EncodeResult& r, const std::vector<TraceSample>& g,
                          std::size_t k, const TraceSample& at) {
    const TraceSample& a = g[k];
    const TraceSample& b = g[k + 1];
    r.d_rate_d_loglambda = segment_slope(a.bpp_total(), b.bpp_total(), a, b) * at.bpp_total();
    r.d_dist_d_loglambda = segment_slope(a.distortion, b.distortion, a, b) * at.distortion;
  }

  TraceTable table_;
  double iframe_rate_;
  double iframe_distortion_;
};

}  // namespace ratelab

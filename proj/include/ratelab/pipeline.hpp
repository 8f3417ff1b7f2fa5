#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratelab/budget.hpp"
#include "ratelab/controller.hpp"
#include "ratelab/features.hpp"
#include "ratelab/pi_controller.hpp"
#include "ratelab/plant.hpp"

namespace ratelab {

enum class ControlMode { fixed_lambda, pi_only, pi_gru };

inline std::string to_string(ControlMode m) {
  switch (m) {
    case ControlMode::fixed_lambda: return "fixed_lambda";
    case ControlMode::pi_only: return "pi_only";
    case ControlMode::pi_gru: return "pi_gru";
  }
  throw std::logic_error("bad ControlMode");
}

inline ControlMode control_mode_from_string(const std::string& s) {
  if (s == "fixed_lambda") return ControlMode::fixed_lambda;
  if (s == "pi_only") return ControlMode::pi_only;
  if (s == "pi_gru") return ControlMode::pi_gru;
  throw std::invalid_argument("unknown mode '" + s +
                              "' (expected fixed_lambda, pi_only or pi_gru)");
}

struct SequenceConfig {
  std::size_t num_frames = 96;
  std::size_t gop_size = 32;
  ControlMode mode = ControlMode::pi_only;
  std::optional<double> fixed_lambda_value;
  double target_rate = 0.1;

  void validate() const {
    if (num_frames < 1) throw std::invalid_argument("sequence: num_frames must be >= 1");
    if (gop_size < 2) throw std::invalid_argument("sequence: gop_size must be >= 2");
    if (!(target_rate > 0.0)) throw std::invalid_argument("sequence: target_rate must be > 0");
    if ((mode == ControlMode::fixed_lambda) != fixed_lambda_value.has_value()) {
      throw std::invalid_argument(
          "sequence: fixed_lambda_value is required exactly when mode = fixed_lambda");
    }
    if (fixed_lambda_value && !(*fixed_lambda_value > 0.0)) {
      throw std::invalid_argument("sequence: fixed_lambda_value must be > 0");
    }
  }
};

// One row of the experiment log.
struct FrameRecord {
  std::size_t frame = 0;
  char kind = 'P';            // 'I' or 'P'
  double r_eff = 0.0;
  double lambda_base = 0.0;
  double delta_gru = 0.0;
  double lambda = 0.0;
  double bpp_total = 0.0;
  double bpp_mv = 0.0;
  double bpp_res = 0.0;
  double distortion = 0.0;
  double quality_db = 0.0;    // -10 log10(distortion), unit reference
  double e_t = 0.0;
  double integral = 0.0;
  double deviation = 0.0;
  long minigop = -1;          // -1 for I-frames
  double minigop_budget = 0.0;  // budget of the owning mini-GOP (P-frames)
};

// Per-P-frame capture for training: everything needed to replay the
// controller and the plant response at this step.
struct StepTrace {
  BudgetFeatures features_b;
  CodingStats features_c;
  double r_eff = 0.0;
  double lambda_base = 0.0;
  double delta = 0.0;
  double lambda_final = 0.0;
  bool lambda_clipped = false;  // composition clip or trace-grid clamp hit
  EncodeResult result;
  ControllerCache cache;
  std::size_t frame_idx = 0;
};

// The online frame loop: mini-GOP budget update -> effective target ->
// base control update -> residual prediction -> encode -> accounting.
// One instance drives one sequence; plants are shared read-only.
class ControlLoop {
 public:
  ControlLoop(ControlMode mode, const PiGains& gains, const PiBounds& bounds,
              const BudgetConfig& budget, double lambda_init,
              const ControllerWeights* weights = nullptr,
              std::optional<double> fixed_lambda = std::nullopt)
      : mode_(mode),
        gains_(gains),
        bounds_(bounds),
        budget_cfg_(budget),
        weights_(weights),
        fixed_lambda_(fixed_lambda) {
    gains_.validate();
    bounds_.validate();
    budget_cfg_.validate();
    if (mode_ == ControlMode::pi_gru && weights_ == nullptr) {
      throw std::invalid_argument("pi_gru mode requires controller weights");
    }
    if ((mode_ == ControlMode::fixed_lambda) != fixed_lambda_.has_value()) {
      throw std::invalid_argument("fixed lambda value required exactly in fixed_lambda mode");
    }
    pi_.lambda_base = mode_ == ControlMode::fixed_lambda
                          ? clip(*fixed_lambda_, bounds_.lambda_min, bounds_.lambda_max)
                          : clip(lambda_init, bounds_.lambda_min, bounds_.lambda_max);
  }

  const PiState& pi_state() const { return pi_; }
  const BudgetState& budget_state() const { return budget_; }
  const ControllerState& controller_state() const { return ctrl_; }

  // Training episodes hold the base control signal fixed: a residual
  // around a moving base is not identifiable through a loss that the base
  // controller re-centers on its own.
  void freeze_base_signal(bool freeze) { freeze_base_ = freeze; }

  // Key frames bypass the feedback loop entirely: controller states are
  // carried over and only the previous-result slot is refreshed.
  template <typename Plant>
  FrameRecord step_i(const Plant& plant, std::size_t frame_idx,
                     const FrameContent& content) {
    const EncodeResult r = plant.encode_i(frame_idx, content);
    prev_result_ = r;
    has_prev_result_ = true;
    iframe_boundary_ = true;

    FrameRecord rec;
    rec.frame = frame_idx;
    rec.kind = 'I';
    rec.lambda_base = pi_.lambda_base;
    rec.lambda = pi_.lambda_base;
    rec.bpp_total = r.bpp_total;
    rec.bpp_mv = r.bpp_mv;
    rec.bpp_res = r.bpp_res;
    rec.distortion = r.distortion;
    rec.quality_db = quality_db(r.distortion);
    rec.integral = pi_.integral;
    rec.deviation = budget_.deviation;
    rec.minigop = -1;
    return rec;
  }

  template <typename Plant>
  FrameRecord step_p(const Plant& plant, std::size_t frame_idx,
                     const FrameContent& content, StepTrace* trace = nullptr) {
    if (!has_prev_result_) {
      throw std::logic_error("step_p: sequence must start with an I-frame");
    }

    // Budget read. A key frame closes the current mini-GOP early.
    if (budget_.frames_left_in_minigop == 0 || iframe_boundary_) {
      if (iframe_boundary_ && budget_.frames_left_in_minigop > 0) {
        close_minigop(budget_);
      }
      open_minigop(budget_cfg_, budget_);
      ++minigop_index_;
      current_minigop_budget_ = budget_.minigop_budget;
      iframe_boundary_ = false;
    }
    const double r_eff = effective_target(budget_cfg_, budget_);

    // Base control update uses the previous P-frame's error.
    if (mode_ != ControlMode::fixed_lambda && !freeze_base_ && has_pending_error_) {
      pi_step(pi_, gains_, bounds_, pending_error_);
      has_pending_error_ = false;
    }
    const double lambda_base = pi_.lambda_base;

    const double prev_rate = has_prev_p_ ? prev_p_rate_ : r_eff;
    const BudgetFeatures fb =
        build_budget_features(r_eff, prev_rate, budget_, lambda_base, bounds_.lambda_max);
    const CodingStats fc = build_coding_stats(prev_result_, r_eff);

    double delta = 0.0;
    if (mode_ == ControlMode::pi_gru) {
      const ControllerOutput out =
          controller_forward(*weights_, ctrl_, fb, fc, trace ? &trace->cache : nullptr);
      delta = out.delta;
      ctrl_ = out.state;
    }

    double lambda_final = lambda_base;
    bool clipped = false;
    if (mode_ != ControlMode::fixed_lambda) {
      const double raw = lambda_base * std::exp(delta);
      lambda_final = compose_lambda(lambda_base, delta, bounds_);
      clipped = raw < bounds_.lambda_min || raw > bounds_.lambda_max;
    }

    const EncodeResult r = plant.encode_p(frame_idx, content, lambda_final);
    const double e_t = log_error(r.bpp_total, r_eff);

    // Budget write.
    record_p_frame(budget_cfg_, budget_, r.bpp_total, r_eff);
    prev_p_rate_ = r.bpp_total;
    has_prev_p_ = true;
    prev_result_ = r;
    if (mode_ != ControlMode::fixed_lambda) {
      pending_error_ = e_t;
      has_pending_error_ = true;
    }

    if (trace) {
      trace->features_b = fb;
      trace->features_c = fc;
      trace->r_eff = r_eff;
      trace->lambda_base = lambda_base;
      trace->delta = delta;
      trace->lambda_final = lambda_final;
      trace->lambda_clipped = clipped || r.lambda_clamped;
      trace->result = r;
      trace->frame_idx = frame_idx;
    }

    FrameRecord rec;
    rec.frame = frame_idx;
    rec.kind = 'P';
    rec.r_eff = r_eff;
    rec.lambda_base = lambda_base;
    rec.delta_gru = delta;
    rec.lambda = lambda_final;
    rec.bpp_total = r.bpp_total;
    rec.bpp_mv = r.bpp_mv;
    rec.bpp_res = r.bpp_res;
    rec.distortion = r.distortion;
    rec.quality_db = quality_db(r.distortion);
    rec.e_t = e_t;
    rec.integral = pi_.integral;
    rec.deviation = budget_.deviation;
    rec.minigop = minigop_index_;
    rec.minigop_budget = current_minigop_budget_;
    return rec;
  }

 private:
  ControlMode mode_;
  PiGains gains_;
  PiBounds bounds_;
  BudgetConfig budget_cfg_;
  const ControllerWeights* weights_;
  std::optional<double> fixed_lambda_;

  PiState pi_;
  BudgetState budget_;
  ControllerState ctrl_;
  EncodeResult prev_result_;
  bool has_prev_result_ = false;
  bool iframe_boundary_ = false;
  double prev_p_rate_ = 0.0;
  bool has_prev_p_ = false;
  double pending_error_ = 0.0;
  bool has_pending_error_ = false;
  bool freeze_base_ = false;
  long minigop_index_ = -1;
  double current_minigop_budget_ = 0.0;
};

// Encodes one sequence under the configured control mode. Frame 0 and
// every gop_size-th frame are key frames.
template <typename Plant>
std::vector<FrameRecord> encode_sequence(const Plant& plant, const SequenceConfig& seq,
                                         const PiGains& gains, const PiBounds& bounds,
                                         const BudgetConfig& budget, double lambda_init,
                                         const ControllerWeights* weights = nullptr) {
  seq.validate();
  if (budget.target_rate != seq.target_rate) {
    throw std::invalid_argument("budget target_rate must equal sequence target_rate");
  }
  const auto contents = plant.sequence(seq.num_frames);
  ControlLoop loop(seq.mode, gains, bounds, budget, lambda_init, weights,
                   seq.fixed_lambda_value);
  std::vector<FrameRecord> records;
  records.reserve(seq.num_frames);
  for (std::size_t i = 0; i < seq.num_frames; ++i) {
    if (i % seq.gop_size == 0) {
      records.push_back(loop.step_i(plant, i, contents[i]));
    } else {
      records.push_back(loop.step_p(plant, i, contents[i]));
    }
  }
  return records;
}

// Average P-frame rate of a run; key frames are excluded from accounting.
inline double average_p_rate(const std::vector<FrameRecord>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.kind == 'P') {
      sum += r.bpp_total;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline double average_p_quality(const std::vector<FrameRecord>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.kind == 'P') {
      sum += r.quality_db;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace ratelab

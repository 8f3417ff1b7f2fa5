#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ratelab/budget.hpp"
#include "ratelab/controller.hpp"
#include "ratelab/core.hpp"
#include "ratelab/pipeline.hpp"
#include "ratelab/plant.hpp"

namespace ratelab {

struct LossWeights {
  double dist = 1.0;
  double budget = 500.0;
  double smooth = 0.05;

  void validate() const {
    if (dist < 0.0 || budget < 0.0 || smooth < 0.0) {
      throw std::invalid_argument("loss weights must be nonnegative");
    }
    if (dist == 0.0 && budget == 0.0 && smooth == 0.0) {
      throw std::invalid_argument("at least one loss weight must be > 0");
    }
  }
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 4;
  std::size_t epochs = 20;
  std::size_t lr_step = 5;   // epochs between decays
  double lr_gamma = 0.5;
  std::vector<double> lambda_pre_set = {128.0, 256.0, 512.0, 1024.0, 2048.0};
  std::size_t episode_len = 16;  // P-frames per episode
  std::size_t episodes_per_sequence = 32;
  std::size_t minigop_len = 4;
  std::size_t smoothing_window = 40;
  std::uint64_t seed = 1;

  void validate(const PiBounds& bounds) const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (lr_step < 1) throw std::invalid_argument("train: lr_step must be >= 1");
    if (!(lr_gamma > 0.0)) throw std::invalid_argument("train: lr_gamma must be > 0");
    if (lambda_pre_set.empty()) throw std::invalid_argument("train: lambda_pre_set must be nonempty");
    for (double l : lambda_pre_set) {
      if (l < bounds.lambda_min || l > bounds.lambda_max) {
        throw std::invalid_argument("train: lambda_pre_set value outside lambda bounds");
      }
    }
    if (episode_len < minigop_len) {
      throw std::invalid_argument("train: episode_len must cover at least one mini-GOP");
    }
    if (episodes_per_sequence < 1) {
      throw std::invalid_argument("train: episodes_per_sequence must be >= 1");
    }
  }

  double lr_at(std::size_t epoch) const {
    return learning_rate * std::pow(lr_gamma, static_cast<double>(epoch / lr_step));
  }
};

// Target derived by pre-encoding the episode at a sampled lambda, so it is
// always reachable by the frozen plant.
struct EpisodeTarget {
  std::vector<double> minigop_budgets;  // bpp-sums, one per mini-GOP
  double mean_rate = 0.0;               // per-frame target rate
  // Per-frame distortion normalizers from the pre-encoding pass. Dividing
  // each frame by its own reachable distortion puts every frame's quality
  // term on the same scale regardless of content.
  std::vector<double> dist_scales;
  double lambda_pre = 0.0;
};

// Reverse-pass bookkeeping: step traces plus the frame contents needed to
// replay the episode under perturbed weights.
struct EpisodeTape {
  std::vector<StepTrace> steps;
  std::vector<FrameContent> contents;       // aligned with steps
  FrameContent iframe_content;
  std::size_t first_frame_idx = 0;          // plant index of the I-frame
};

struct LossParts {
  double total = 0.0;
  double dist = 0.0;
  double budget = 0.0;
  double smooth = 0.0;
};

// Encodes the episode's P-frames once at lambda_pre with the frozen plant.
// `window` holds episode_len + 1 frames; window[0] is the key-frame anchor.
template <typename Plant>
EpisodeTarget build_target_budget(const Plant& plant,
                                  const std::vector<FrameContent>& window,
                                  std::size_t first_frame_idx, double lambda_pre,
                                  std::size_t minigop_len) {
  if (window.size() < 2) throw std::invalid_argument("episode window needs >= 2 frames");
  EpisodeTarget target;
  target.lambda_pre = lambda_pre;
  const std::size_t p_frames = window.size() - 1;
  double rate_sum = 0.0;
  target.dist_scales.reserve(p_frames);
  for (std::size_t t = 0; t < p_frames; ++t) {
    const EncodeResult r =
        plant.encode_p(first_frame_idx + 1 + t, window[t + 1], lambda_pre);
    if (t % minigop_len == 0) target.minigop_budgets.push_back(0.0);
    target.minigop_budgets.back() += r.bpp_total;
    rate_sum += r.bpp_total;
    target.dist_scales.push_back(r.distortion);
  }
  target.mean_rate = rate_sum / static_cast<double>(p_frames);
  return target;
}

// Runs the online pipeline over one episode with the controller active.
// The base control signal is pinned to the episode's lambda_pre: the
// pre-encoded budget is then exactly reachable at delta = 0, and the
// budget term can oppose a uniform residual drift that a live base
// controller would silently cancel.
template <typename Plant>
EpisodeTape run_episode(const Plant& plant, const std::vector<FrameContent>& window,
                        std::size_t first_frame_idx, const EpisodeTarget& target,
                        const ControllerWeights& weights, const PiGains& gains,
                        const PiBounds& bounds, std::size_t minigop_len,
                        std::size_t smoothing_window) {
  const BudgetConfig budget =
      BudgetConfig::for_target(target.mean_rate, smoothing_window, minigop_len);
  ControlLoop loop(ControlMode::pi_gru, gains, bounds, budget, target.lambda_pre,
                   &weights);
  loop.freeze_base_signal(true);
  EpisodeTape tape;
  tape.first_frame_idx = first_frame_idx;
  tape.iframe_content = window[0];
  loop.step_i(plant, first_frame_idx, window[0]);
  tape.steps.resize(window.size() - 1);
  tape.contents.assign(window.begin() + 1, window.end());
  for (std::size_t t = 0; t + 1 < window.size(); ++t) {
    loop.step_p(plant, first_frame_idx + 1 + t, window[t + 1], &tape.steps[t]);
  }
  return tape;
}

// Episode objective: reconstruction quality, local budget consistency and
// control-trajectory smoothness. Distortion is divided by the episode's
// pre-encoded distortion scale and the budget error is taken relative to
// the target rate, so one set of weights balances every operating point.
inline LossParts episode_loss(const EpisodeTape& tape, const EpisodeTarget& target,
                              const LossWeights& w) {
  LossParts parts;
  const std::size_t n = tape.steps.size();
  double rate_sum = 0.0;
  double prev_delta = 0.0;  // pre-episode delta is defined as 0
  for (std::size_t t = 0; t < n; ++t) {
    const StepTrace& s = tape.steps[t];
    const double scale = target.dist_scales.empty() ? 1.0 : target.dist_scales[t];
    parts.dist += s.result.distortion / scale;
    rate_sum += s.result.bpp_total;
    const double dd = s.delta - prev_delta;
    parts.smooth += dd * dd;
    prev_delta = s.delta;
  }
  const double mean_rate = rate_sum / static_cast<double>(n);
  const double rel_err = (mean_rate - target.mean_rate) / target.mean_rate;
  parts.budget = rel_err * rel_err;
  parts.total = w.dist * parts.dist + w.budget * parts.budget + w.smooth * parts.smooth;
  return parts;
}

// Exact reverse-mode gradient of episode_loss with respect to every
// controller tensor. The base control signal and both feature vectors are
// treated as constants per step; gradients reach the weights through the
// plant response slopes, the composition clip (zero when clipped), the
// bounded head, the gate fusion, both GRU unrolls and the embeddings.
inline ControllerWeights episode_backward(const EpisodeTape& tape,
                                          const EpisodeTarget& target,
                                          const ControllerWeights& weights,
                                          const LossWeights& lw) {
  ControllerWeights grads;  // zero-initialized, same shapes
  grads.delta_max = 0.0;
  const std::size_t n = tape.steps.size();

  double rate_sum = 0.0;
  for (const StepTrace& s : tape.steps) rate_sum += s.result.bpp_total;
  const double mean_rate = rate_sum / static_cast<double>(n);
  const double d_budget_d_rate = lw.budget * 2.0 *
                                 (mean_rate - target.mean_rate) /
                                 (target.mean_rate * target.mean_rate) /
                                 static_cast<double>(n);

  Vec carry_b = zeros(kHiddenDim);
  Vec carry_c = zeros(kHiddenDim);
  for (std::size_t it = n; it-- > 0;) {
    const StepTrace& s = tape.steps[it];
    const double scale = target.dist_scales.empty() ? 1.0 : target.dist_scales[it];
    double d_delta = 0.0;
    if (!s.lambda_clipped) {
      d_delta += lw.dist * s.result.d_dist_d_loglambda / scale;
      d_delta += d_budget_d_rate * s.result.d_rate_d_loglambda;
    }
    const double prev_delta = it == 0 ? 0.0 : tape.steps[it - 1].delta;
    d_delta += lw.smooth * 2.0 * (s.delta - prev_delta);
    if (it + 1 < n) {
      d_delta -= lw.smooth * 2.0 * (tape.steps[it + 1].delta - s.delta);
    }
    controller_backward_step(weights, s.cache, d_delta, carry_b, carry_c, grads);
  }
  return grads;
}

// Recomputes the episode loss for a different weight vector under the same
// stop-gradient convention the backward pass assumes: features and base
// control signals are frozen from the tape, while the controller chain,
// the composed lambda and the plant response are recomputed. Central
// differences of this function are what episode_backward must match.
template <typename Plant>
LossParts replay_episode_loss(const Plant& plant, const EpisodeTape& tape,
                              const EpisodeTarget& target,
                              const ControllerWeights& weights,
                              const PiBounds& bounds, const LossWeights& lw) {
  EpisodeTape replay = tape;
  ControllerState state;
  for (std::size_t t = 0; t < tape.steps.size(); ++t) {
    const StepTrace& s = tape.steps[t];
    const ControllerOutput out =
        controller_forward(weights, state, s.features_b, s.features_c);
    state = out.state;
    StepTrace& rs = replay.steps[t];
    rs.delta = out.delta;
    const double lambda = compose_lambda(s.lambda_base, out.delta, bounds);
    rs.lambda_final = lambda;
    rs.result = plant.encode_p(tape.first_frame_idx + 1 + t, tape.contents[t], lambda);
  }
  return episode_loss(replay, target, lw);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ControllerWeights m;  // first moment, zero-initialized
  ControllerWeights v;  // second moment
  std::size_t step = 0;
};

inline void adam_step(ControllerWeights& weights, const ControllerWeights& grads,
                      AdamState& state, double learning_rate,
                      const AdamConfig& cfg = {}) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  const auto wv = param_views(weights);
  const auto gv = param_views(grads);
  const auto mv = param_views(state.m);
  const auto vv = param_views(state.v);
  for (std::size_t k = 0; k < wv.size(); ++k) {
    double* w = wv[k].data;
    const double* g = gv[k].data;
    double* m = mv[k].data;
    double* v = vv[k].data;
    for (std::size_t i = 0; i < wv[k].count; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      w[i] -= learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
    }
  }
}

// Scales every gradient entry, used for batch averaging.
inline void scale_params(ControllerWeights& w, double s) {
  for (const auto& view : param_views(w)) {
    for (std::size_t i = 0; i < view.count; ++i) view.data[i] *= s;
  }
}

inline void accumulate_params(ControllerWeights& acc, const ControllerWeights& inc) {
  const auto av = param_views(acc);
  const auto iv = param_views(inc);
  for (std::size_t k = 0; k < av.size(); ++k) {
    for (std::size_t i = 0; i < av[k].count; ++i) av[k].data[i] += iv[k].data[i];
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainLogRow {
  std::size_t epoch = 0;
  std::string split;  // "val_init", "train" or "val"
  double loss_total = 0.0;
  double loss_dist = 0.0;
  double loss_budget = 0.0;
  double loss_smooth = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ControllerWeights weights;
  std::vector<TrainLogRow> log;
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
};

namespace detail {

struct EpisodePlan {
  std::size_t sequence = 0;
  std::size_t offset = 0;      // index of the episode's key-frame anchor
  double lambda_pre = 0.0;
};

inline void add_parts(LossParts& acc, const LossParts& p) {
  acc.total += p.total;
  acc.dist += p.dist;
  acc.budget += p.budget;
  acc.smooth += p.smooth;
}

inline LossParts mean_parts(const LossParts& acc, std::size_t n) {
  const double s = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
  return {acc.total * s, acc.dist * s, acc.budget * s, acc.smooth * s};
}

}  // namespace detail

// Controller-only training on a frozen plant: every episode samples a
// lambda_pre, derives a reachable budget by pre-encoding, runs the online
// pipeline to record a tape, and applies one accumulated Adam step per
// batch. Sequences whose index is 4 mod 5 are held out for validation.
template <typename Plant>
TrainResult train(const Plant& plant,
                  const std::vector<std::vector<FrameContent>>& corpus,
                  const TrainConfig& cfg, const LossWeights& loss_weights,
                  const PiGains& gains, const PiBounds& bounds,
                  ControllerWeights initial_weights) {
  if (corpus.empty()) throw std::invalid_argument("train: corpus must be nonempty");
  cfg.validate(bounds);
  loss_weights.validate();
  for (const auto& seq : corpus) {
    if (seq.size() < cfg.episode_len + 1) {
      throw std::invalid_argument("train: corpus sequence shorter than one episode");
    }
  }

  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (i % 5 == 4 ? val_idx : train_idx).push_back(i);
  }
  if (train_idx.empty()) train_idx.push_back(0);
  if (val_idx.empty()) val_idx.push_back(corpus.size() - 1);

  auto episode_pass = [&](const ControllerWeights& w, const detail::EpisodePlan& plan,
                          EpisodeTape* tape_out) {
    const auto& seq = corpus[plan.sequence];
    const std::vector<FrameContent> window(seq.begin() + plan.offset,
                                           seq.begin() + plan.offset + cfg.episode_len + 1);
    const EpisodeTarget target = build_target_budget(plant, window, plan.offset,
                                                     plan.lambda_pre, cfg.minigop_len);
    EpisodeTape tape = run_episode(plant, window, plan.offset, target, w, gains, bounds,
                                   cfg.minigop_len, cfg.smoothing_window);
    const LossParts parts = episode_loss(tape, target, loss_weights);
    if (!std::isfinite(parts.total)) {
      throw std::runtime_error(
          "train: loss diverged (sequence " + std::to_string(plan.sequence) +
          ", offset " + std::to_string(plan.offset) + ", lambda_pre " +
          format_double(plan.lambda_pre) + ")");
    }
    if (tape_out) *tape_out = std::move(tape);
    return std::make_pair(parts, target);
  };

  auto validate_pass = [&](const ControllerWeights& w) {
    LossParts acc;
    std::size_t n = 0;
    for (std::size_t k = 0; k < val_idx.size(); ++k) {
      detail::EpisodePlan plan;
      plan.sequence = val_idx[k];
      plan.offset = 0;
      plan.lambda_pre = cfg.lambda_pre_set[k % cfg.lambda_pre_set.size()];
      detail::add_parts(acc, episode_pass(w, plan, nullptr).first);
      ++n;
    }
    return detail::mean_parts(acc, n);
  };

  TrainResult result;
  result.weights = std::move(initial_weights);
  AdamState adam;

  const LossParts init_val = validate_pass(result.weights);
  result.initial_val_loss = init_val.total;
  result.log.push_back({0, "val_init", init_val.total, init_val.dist, init_val.budget,
                        init_val.smooth, cfg.lr_at(0)});

  rng::Engine engine(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);

    std::vector<detail::EpisodePlan> plans;
    plans.reserve(train_idx.size() * cfg.episodes_per_sequence);
    for (std::size_t seq : train_idx) {
      const std::size_t span = corpus[seq].size() - cfg.episode_len - 1;
      for (std::size_t k = 0; k < cfg.episodes_per_sequence; ++k) {
        detail::EpisodePlan plan;
        plan.sequence = seq;
        plan.offset = span == 0 ? 0 : engine.index(span + 1);
        plan.lambda_pre = cfg.lambda_pre_set[engine.index(cfg.lambda_pre_set.size())];
        plans.push_back(plan);
      }
    }
    engine.shuffle(plans);

    LossParts epoch_acc;
    std::size_t episode_count = 0;
    for (std::size_t start = 0; start < plans.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, plans.size());
      ControllerWeights grad_sum;
      grad_sum.delta_max = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        EpisodeTape tape;
        const auto [parts, target] = episode_pass(result.weights, plans[k], &tape);
        detail::add_parts(epoch_acc, parts);
        ++episode_count;
        accumulate_params(grad_sum,
                          episode_backward(tape, target, result.weights, loss_weights));
      }
      scale_params(grad_sum, 1.0 / static_cast<double>(end - start));
      adam_step(result.weights, grad_sum, adam, lr);
    }

    const LossParts train_mean = detail::mean_parts(epoch_acc, episode_count);
    result.log.push_back({epoch, "train", train_mean.total, train_mean.dist,
                          train_mean.budget, train_mean.smooth, lr});
    const LossParts val = validate_pass(result.weights);
    result.log.push_back({epoch, "val", val.total, val.dist, val.budget, val.smooth, lr});
    result.final_val_loss = val.total;
  }
  if (cfg.epochs == 0) result.final_val_loss = result.initial_val_loss;
  return result;
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  std::string worst_group;
};

// Central finite differences of the replayed episode loss against the
// analytic gradients, sampled per weight group. Elements where both
// gradients are below the absolute floor are counted as agreeing. The
// tamper hook deliberately corrupts the analytic gradients; it exists so
// the negative path of the check itself can be exercised.
template <typename Plant>
GradCheckReport gradcheck(const Plant& plant, const EpisodeTape& tape,
                          const EpisodeTarget& target, const ControllerWeights& weights,
                          const PiBounds& bounds, const LossWeights& lw,
                          double step = 1e-5, std::size_t samples_per_group = 16,
                          std::uint64_t seed = 0,
                          const std::function<void(ControllerWeights&)>& tamper = {}) {
  ControllerWeights analytic = episode_backward(tape, target, weights, lw);
  if (tamper) tamper(analytic);
  const auto analytic_views = param_views(analytic);

  ControllerWeights work = weights;
  const auto work_views = param_views(work);

  GradCheckReport report;
  rng::Engine engine(seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t g = 0; g < work_views.size(); ++g) {
    GradCheckGroup group;
    group.name = work_views[g].name;
    const std::size_t n = work_views[g].count;
    const std::size_t samples = std::min(samples_per_group, n);
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t i = n <= samples_per_group ? s : engine.index(n);
      double* slot = work_views[g].data + i;
      const double saved = *slot;
      *slot = saved + step;
      const double up = replay_episode_loss(plant, tape, target, work, bounds, lw).total;
      *slot = saved - step;
      const double down = replay_episode_loss(plant, tape, target, work, bounds, lw).total;
      *slot = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic_views[g].data[i];
      const double diff = std::abs(an - fd);
      // below the floor, central-difference roundoff dominates any signal
      if (diff < 3e-10) continue;
      // guarded relative error: tiny entries are held to the absolute
      // floor instead, which central differences can actually resolve
      const double rel = diff / std::max({std::abs(an), std::abs(fd), 1e-5});
      group.max_rel_error = std::max(group.max_rel_error, rel);
    }
    if (group.max_rel_error > report.max_rel_error) {
      report.max_rel_error = group.max_rel_error;
      report.worst_group = group.name;
    }
    report.groups.push_back(group);
  }
  return report;
}

}  // namespace ratelab

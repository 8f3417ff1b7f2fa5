#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ratelab/config.hpp"
#include "ratelab/controller_io.hpp"
#include "ratelab/csv.hpp"
#include "ratelab/metrics.hpp"
#include "ratelab/pipeline.hpp"
#include "ratelab/trace_io.hpp"
#include "ratelab/trainer.hpp"

namespace ratelab {

namespace detail {

template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t count = std::min(jobs, n);
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::filesystem::path run_dir(const ExperimentConfig& cfg) {
  return std::filesystem::path(cfg.out_dir) / cfg.run_name;
}

// Noise-free inverse of the synthetic rate law at unit content; the
// operating point an open-loop encoder would pick for a target.
inline double nominal_lambda(const SyntheticCodecParams& p, double target,
                             const PiBounds& bounds) {
  const double lambda = std::pow(target / p.base_rate, 1.0 / p.gamma);
  return clip(lambda, bounds.lambda_min, bounds.lambda_max);
}

struct PlantHandle {
  std::optional<SyntheticPlant> synthetic;
  std::optional<TracePlant> trace;
};

inline PlantHandle open_plant(const ExperimentConfig& cfg) {
  PlantHandle h;
  if (cfg.plant_kind == PlantKind::synthetic) {
    h.synthetic.emplace(cfg.plant);
  } else {
    h.trace.emplace(load_trace(cfg.trace_path), cfg.plant.iframe_rate,
                    cfg.plant.iframe_distortion);
  }
  return h;
}

}  // namespace detail

inline std::string frames_csv_name(double target) {
  return "frames_" + format_double(target) + ".csv";
}

// simulate: one per-frame CSV per target plus a summary CSV.
inline void run_simulate(const ExperimentConfig& cfg, std::size_t jobs = 1) {
  const auto dir = detail::run_dir(cfg);
  std::filesystem::create_directories(dir);

  std::optional<ControllerWeights> weights;
  if (cfg.sequence.mode == ControlMode::pi_gru) {
    if (cfg.controller_weights_path.empty()) {
      throw std::runtime_error("pi_gru mode requires control.controller_weights");
    }
    weights = load_weights(cfg.controller_weights_path);
    std::cout << "controller parameters: " << weights->parameter_count() << "\n";
  }

  const detail::PlantHandle plant = detail::open_plant(cfg);
  std::vector<SummaryRow> summary(cfg.targets.size());

  detail::parallel_for(cfg.targets.size(), jobs, [&](std::size_t i) {
    const double target = cfg.targets[i];
    SequenceConfig seq = cfg.sequence;
    seq.target_rate = target;
    if (seq.mode == ControlMode::fixed_lambda && cfg.fixed_lambda_nominal) {
      seq.fixed_lambda_value = detail::nominal_lambda(cfg.plant, target, cfg.bounds);
    }
    const BudgetConfig budget = cfg.budget_for(target);
    const ControllerWeights* w = weights ? &*weights : nullptr;

    std::vector<FrameRecord> records;
    if (plant.synthetic) {
      records = encode_sequence(*plant.synthetic, seq, cfg.gains, cfg.bounds, budget,
                                cfg.lambda_init, w);
    } else {
      records = encode_sequence(*plant.trace, seq, cfg.gains, cfg.bounds, budget,
                                cfg.lambda_init, w);
    }
    write_frames_csv((dir / frames_csv_name(target)).string(), records);

    const double avg = average_p_rate(records);
    summary[i] = {cfg.dataset,       to_string(seq.mode),        target,
                  avg,               delta_r(avg, target),       average_p_quality(records)};
  });

  write_summary_csv((dir / "summary.csv").string(), summary);
}

// train: controller-only training on a synthetic corpus; writes the weight
// file and the training log.
inline void run_train(const ExperimentConfig& cfg) {
  if (cfg.plant_kind != PlantKind::synthetic) {
    throw std::runtime_error("train requires a synthetic plant (the corpus is seeded)");
  }
  const auto dir = detail::run_dir(cfg);
  std::filesystem::create_directories(dir);

  const SyntheticPlant plant(cfg.plant);
  std::vector<std::vector<FrameContent>> corpus;
  corpus.reserve(cfg.corpus_size);
  for (std::size_t i = 0; i < cfg.corpus_size; ++i) {
    SyntheticCodecParams p = cfg.plant;
    p.seed = cfg.corpus_seed + i;
    corpus.push_back(synth_sequence(p, cfg.corpus_frames));
  }

  ControllerWeights init = init_controller_weights(cfg.seed, cfg.controller_delta_max);
  std::cout << "controller parameters: " << init.parameter_count() << "\n";

  const TrainResult result = train(plant, corpus, cfg.train, cfg.loss_weights, cfg.gains,
                                   cfg.bounds, std::move(init));
  save_weights(result.weights, (dir / "weights.json").string(), cfg.seed);
  write_train_log_csv((dir / "train_log.csv").string(), result.log);
  std::cout << "validation loss: " << format_double(result.initial_val_loss) << " -> "
            << format_double(result.final_val_loss) << "\n";
}

// eval: recomputes per-run metrics from the frame logs, cross-checks them
// against the stored summaries, and emits the BD-rate matrix between runs.
inline void run_eval(const ExperimentConfig& cfg) {
  const std::filesystem::path out(cfg.out_dir);
  std::vector<std::string> runs = cfg.eval_runs;
  if (runs.empty()) {
    for (const auto& entry : std::filesystem::directory_iterator(out)) {
      if (entry.is_directory() &&
          std::filesystem::exists(entry.path() / "summary.csv")) {
        runs.push_back(entry.path().filename().string());
      }
    }
    std::sort(runs.begin(), runs.end());
  }
  if (runs.empty()) throw std::runtime_error("eval: no runs with summary.csv under " + cfg.out_dir);

  std::vector<SummaryRow> all_rows;
  std::map<std::string, std::vector<RdPoint>> curves;
  for (const std::string& run : runs) {
    const auto dir = out / run;
    const auto stored = read_summary_csv((dir / "summary.csv").string());
    if (stored.empty()) throw std::runtime_error("eval: " + run + "/summary.csv has no rows");
    std::vector<RdPoint> curve;
    for (const SummaryRow& row : stored) {
      const auto frames_path = dir / frames_csv_name(row.target);
      const auto records = read_frames_csv(frames_path.string());
      const double avg = average_p_rate(records);
      const double dr = delta_r(avg, row.target);
      if (std::abs(dr - row.delta_r_pct) > 1e-12) {
        throw std::runtime_error("eval: " + run + ": recomputed delta_r " + format_double(dr) +
                                 " disagrees with stored " + format_double(row.delta_r_pct) +
                                 " for target " + format_double(row.target));
      }
      SummaryRow fresh = row;
      fresh.avg_bpp = avg;
      fresh.delta_r_pct = dr;
      fresh.avg_quality = average_p_quality(records);
      all_rows.push_back(fresh);
      curve.push_back({fresh.avg_bpp, fresh.avg_quality});
    }
    std::sort(curve.begin(), curve.end(),
              [](const RdPoint& a, const RdPoint& b) { return a.rate < b.rate; });
    curves[run] = curve;
  }

  std::vector<BdRateRow> matrix;
  for (const std::string& anchor : runs) {
    for (const std::string& test : runs) {
      matrix.push_back({anchor, test, bd_rate(curves[anchor], curves[test])});
    }
  }

  write_summary_csv((out / "eval_summary.csv").string(), all_rows);
  write_bdrate_csv((out / "bdrate.csv").string(), matrix);
}

// gradcheck: analytic episode gradients against central finite
// differences, reported per weight group.
inline int run_gradcheck(const ExperimentConfig& cfg, double tolerance,
                         const std::string& corrupt_group = "") {
  if (cfg.plant_kind != PlantKind::synthetic) {
    throw std::runtime_error("gradcheck requires a synthetic plant");
  }
  const SyntheticPlant plant(cfg.plant);
  const auto window = plant.sequence(cfg.train.episode_len + 1);
  const double lambda_pre = cfg.train.lambda_pre_set[cfg.train.lambda_pre_set.size() / 2];
  const EpisodeTarget target =
      build_target_budget(plant, window, 0, lambda_pre, cfg.train.minigop_len);

  ControllerWeights weights = init_controller_weights(cfg.seed, cfg.controller_delta_max);
  for (std::size_t i = 0; i < weights.head_w.size(); ++i) {
    weights.head_w[i] = rng::uniform(cfg.seed, 999, i, -0.35, 0.35);
  }
  weights.head_b = rng::uniform(cfg.seed, 998, 0, -0.1, 0.1);

  const EpisodeTape tape =
      run_episode(plant, window, 0, target, weights, cfg.gains, cfg.bounds,
                  cfg.train.minigop_len, cfg.train.smoothing_window);

  std::function<void(ControllerWeights&)> tamper;
  if (!corrupt_group.empty()) {
    tamper = [&corrupt_group](ControllerWeights& grads) {
      bool found = false;
      for_each_param(grads, [&](const std::string& name, double* data, std::size_t count) {
        if (name != corrupt_group) return;
        found = true;
        for (std::size_t i = 0; i < count; ++i) data[i] = data[i] * 1.5 + 1e-3;
      });
      if (!found) throw std::runtime_error("unknown weight group: " + corrupt_group);
    };
  }

  const GradCheckReport report = gradcheck(plant, tape, target, weights, cfg.bounds,
                                           cfg.loss_weights, 1e-5, 16, cfg.seed, tamper);
  for (const auto& group : report.groups) {
    std::cout << "group " << group.name << ": max rel err "
              << format_double(group.max_rel_error) << "\n";
  }
  if (report.max_rel_error >= tolerance) {
    std::cerr << "gradcheck FAILED: group " << report.worst_group << " rel err "
              << format_double(report.max_rel_error) << " >= tolerance "
              << format_double(tolerance) << "\n";
    return 1;
  }
  std::cout << "gradcheck passed: max rel err " << format_double(report.max_rel_error)
            << " < " << format_double(tolerance) << "\n";
  return 0;
}

// gen-trace: samples the synthetic plant on a geometric lambda grid and
// writes the trace CSV schema.
inline void run_gen_trace(const ExperimentConfig& cfg, std::size_t num_frames,
                          std::size_t grid_points, const std::string& out_path) {
  if (cfg.plant_kind != PlantKind::synthetic) {
    throw std::runtime_error("gen-trace requires a synthetic plant");
  }
  const SyntheticPlant plant(cfg.plant);
  const auto rows = sample_plant_grid(plant, num_frames, grid_points,
                                      cfg.bounds.lambda_min, cfg.bounds.lambda_max);
  std::filesystem::path path = out_path.empty()
                                   ? std::filesystem::path(cfg.out_dir) / "trace.csv"
                                   : std::filesystem::path(out_path);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_trace(path.string(), rows);
}

}  // namespace ratelab

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ratelab/budget.hpp"
#include "ratelab/pi_controller.hpp"
#include "ratelab/pipeline.hpp"
#include "ratelab/plant.hpp"
#include "ratelab/trainer.hpp"

namespace ratelab {

inline constexpr int kConfigSchemaVersion = 1;

enum class PlantKind { synthetic, trace };

// Everything one experiment needs, loaded from a single JSON document.
// Numeric constraints of the nested types are enforced on load with
// key-qualified messages; relative paths resolve against the config file.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string run_name;
  std::string out_dir = "runs";
  std::string dataset;

  PlantKind plant_kind = PlantKind::synthetic;
  SyntheticCodecParams plant;
  std::string trace_path;

  SequenceConfig sequence;
  // "nominal" in the config picks the plant's noise-free inverse per target
  // for fixed_lambda sweeps.
  bool fixed_lambda_nominal = false;

  PiGains gains;
  PiBounds bounds;
  double lambda_init = 1024.0;
  std::size_t smoothing_window = 40;
  std::size_t minigop_len = 4;
  std::optional<double> r_min_override;
  std::optional<double> r_max_override;
  std::string controller_weights_path;
  double controller_delta_max = 0.20;

  std::vector<double> targets = {0.05, 0.09, 0.15, 0.24};

  TrainConfig train;
  LossWeights loss_weights;
  std::size_t corpus_size = 40;
  std::size_t corpus_frames = 96;
  std::uint64_t corpus_seed = 1000;

  std::vector<std::string> eval_runs;  // empty: every run under out_dir

  BudgetConfig budget_for(double target) const {
    BudgetConfig cfg = BudgetConfig::for_target(target, smoothing_window, minigop_len);
    if (r_min_override) cfg.r_min = *r_min_override;
    if (r_max_override) cfg.r_max = *r_max_override;
    return cfg;
  }
};

namespace detail {

class JsonReader {
 public:
  JsonReader(const nlohmann::json& j, std::string prefix)
      : j_(j), prefix_(std::move(prefix)) {}

  template <typename T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw std::runtime_error("config: " + prefix_ + key + " has the wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const nlohmann::json& raw(const char* key) const { return j_.at(key); }

 private:
  const nlohmann::json& j_;
  std::string prefix_;
};

inline std::string resolve_path(const std::filesystem::path& config_dir,
                                const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  return p.is_absolute() ? p.string() : (config_dir / p).string();
}

}  // namespace detail

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": malformed JSON: " + e.what());
  }

  if (doc.contains("schema_version") && doc["schema_version"].get<int>() != kConfigSchemaVersion) {
    throw std::runtime_error(path + ": unsupported schema_version");
  }
  const std::filesystem::path config_dir = std::filesystem::path(path).parent_path();

  ExperimentConfig cfg;
  detail::JsonReader top(doc, "");
  top.get("seed", cfg.seed);
  top.get("run_name", cfg.run_name);
  top.get("out_dir", cfg.out_dir);
  top.get("dataset", cfg.dataset);
  top.get("targets", cfg.targets);

  if (doc.contains("plant")) {
    detail::JsonReader plant(doc["plant"], "plant.");
    std::string kind = "synthetic";
    plant.get("type", kind);
    if (kind == "synthetic") {
      cfg.plant_kind = PlantKind::synthetic;
    } else if (kind == "trace") {
      cfg.plant_kind = PlantKind::trace;
    } else {
      throw std::runtime_error("config: plant.type must be 'synthetic' or 'trace'");
    }
    plant.get("gamma", cfg.plant.gamma);
    plant.get("eta", cfg.plant.eta);
    plant.get("base_rate", cfg.plant.base_rate);
    plant.get("base_distortion", cfg.plant.base_distortion);
    plant.get("ar_coeff", cfg.plant.ar_coeff);
    plant.get("log_noise_sigma", cfg.plant.log_noise_sigma);
    plant.get("iframe_rate", cfg.plant.iframe_rate);
    plant.get("iframe_distortion", cfg.plant.iframe_distortion);
    plant.get("detail_exponent", cfg.plant.detail_exponent);
    plant.get("elasticity_spread", cfg.plant.elasticity_spread);
    plant.get("seed", cfg.plant.seed);
    plant.get("trace_path", cfg.trace_path);
    cfg.trace_path = detail::resolve_path(config_dir, cfg.trace_path);
    if (cfg.plant_kind == PlantKind::trace && cfg.trace_path.empty()) {
      throw std::runtime_error("config: plant.trace_path is required for trace plants");
    }
  }
  try {
    cfg.plant.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }

  if (doc.contains("sequence")) {
    detail::JsonReader seq(doc["sequence"], "sequence.");
    seq.get("num_frames", cfg.sequence.num_frames);
    seq.get("gop_size", cfg.sequence.gop_size);
    std::string mode = "pi_only";
    seq.get("mode", mode);
    cfg.sequence.mode = control_mode_from_string(mode);
    if (seq.has("fixed_lambda")) {
      const auto& v = seq.raw("fixed_lambda");
      if (v.is_string() && v.get<std::string>() == "nominal") {
        cfg.fixed_lambda_nominal = true;
      } else if (v.is_number()) {
        cfg.sequence.fixed_lambda_value = v.get<double>();
      } else {
        throw std::runtime_error("config: sequence.fixed_lambda must be a number or 'nominal'");
      }
    }
  }
  if (cfg.fixed_lambda_nominal && cfg.plant_kind != PlantKind::synthetic) {
    throw std::runtime_error("config: sequence.fixed_lambda 'nominal' needs a synthetic plant");
  }

  if (doc.contains("control")) {
    detail::JsonReader ctl(doc["control"], "control.");
    ctl.get("kp", cfg.gains.kp);
    ctl.get("ki", cfg.gains.ki);
    ctl.get("kd", cfg.gains.kd);
    ctl.get("lambda_min", cfg.bounds.lambda_min);
    ctl.get("lambda_max", cfg.bounds.lambda_max);
    ctl.get("i_max", cfg.bounds.i_max);
    ctl.get("delta_max", cfg.bounds.delta_max);
    ctl.get("lambda_init", cfg.lambda_init);
    ctl.get("smoothing_window", cfg.smoothing_window);
    ctl.get("minigop_len", cfg.minigop_len);
    if (ctl.has("r_min")) cfg.r_min_override = ctl.raw("r_min").get<double>();
    if (ctl.has("r_max")) cfg.r_max_override = ctl.raw("r_max").get<double>();
    ctl.get("controller_weights", cfg.controller_weights_path);
    cfg.controller_weights_path = detail::resolve_path(config_dir, cfg.controller_weights_path);
    ctl.get("controller_delta_max", cfg.controller_delta_max);
  }
  try {
    cfg.gains.validate();
    cfg.bounds.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("config: control: ") + e.what());
  }
  if (!(cfg.lambda_init >= cfg.bounds.lambda_min && cfg.lambda_init <= cfg.bounds.lambda_max)) {
    throw std::runtime_error("config: control.lambda_init must lie within the lambda bounds");
  }
  if (!(cfg.controller_delta_max > 0.0)) {
    throw std::runtime_error("config: control.controller_delta_max must be > 0");
  }

  if (doc.contains("train")) {
    detail::JsonReader tr(doc["train"], "train.");
    tr.get("learning_rate", cfg.train.learning_rate);
    tr.get("batch_size", cfg.train.batch_size);
    tr.get("epochs", cfg.train.epochs);
    tr.get("lr_step", cfg.train.lr_step);
    tr.get("lr_gamma", cfg.train.lr_gamma);
    tr.get("lambda_pre_set", cfg.train.lambda_pre_set);
    tr.get("episode_len", cfg.train.episode_len);
    tr.get("episodes_per_sequence", cfg.train.episodes_per_sequence);
    tr.get("corpus_size", cfg.corpus_size);
    tr.get("corpus_frames", cfg.corpus_frames);
    tr.get("corpus_seed", cfg.corpus_seed);
    tr.get("loss_dist", cfg.loss_weights.dist);
    tr.get("loss_budget", cfg.loss_weights.budget);
    tr.get("loss_smooth", cfg.loss_weights.smooth);
    cfg.train.minigop_len = cfg.minigop_len;
    cfg.train.smoothing_window = cfg.smoothing_window;
  }
  cfg.train.seed = cfg.seed;
  try {
    cfg.train.validate(cfg.bounds);
    cfg.loss_weights.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("config: train: ") + e.what());
  }
  if (cfg.corpus_size < 2) throw std::runtime_error("config: train.corpus_size must be >= 2");
  if (cfg.corpus_frames < cfg.train.episode_len + 1) {
    throw std::runtime_error("config: train.corpus_frames must cover one episode");
  }

  if (doc.contains("eval")) {
    detail::JsonReader ev(doc["eval"], "eval.");
    ev.get("runs", cfg.eval_runs);
  }

  for (double t : cfg.targets) {
    if (!(t > 0.0)) throw std::runtime_error("config: targets must be > 0");
  }
  if (cfg.targets.empty()) throw std::runtime_error("config: targets must be nonempty");

  if (cfg.run_name.empty()) cfg.run_name = to_string(cfg.sequence.mode);
  if (cfg.dataset.empty()) {
    cfg.dataset = cfg.plant_kind == PlantKind::synthetic
                      ? "synthetic-" + std::to_string(cfg.plant.seed)
                      : std::filesystem::path(cfg.trace_path).stem().string();
  }
  return cfg;
}

}  // namespace ratelab

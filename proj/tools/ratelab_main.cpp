// ratelab command-line front end: simulate, train, eval, gradcheck and
// gen-trace, all driven by a JSON config with seeded determinism.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ratelab/commands.hpp"
#include "ratelab/config.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> mode;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out", args.out_dir, "override the output directory");
  cmd->add_option("--mode", args.mode,
                  "override the control mode (fixed_lambda, pi_only, pi_gru)");
  cmd->add_option("--jobs", args.jobs, "worker threads for per-target fan-out")
      ->check(CLI::PositiveNumber);
}

ratelab::ExperimentConfig load(const CommonArgs& args) {
  ratelab::ExperimentConfig cfg = ratelab::load_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.train.seed = *args.seed;
  }
  if (args.out_dir) cfg.out_dir = *args.out_dir;
  if (args.mode) {
    cfg.sequence.mode = ratelab::control_mode_from_string(*args.mode);
    ratelab::ExperimentConfig defaults;
    if (cfg.run_name == ratelab::to_string(defaults.sequence.mode) || cfg.run_name.empty()) {
      cfg.run_name = *args.mode;
    }
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rate-control laboratory"};
  app.require_subcommand(1);

  CommonArgs sim_args, train_args, eval_args, grad_args, trace_args;

  CLI::App* sim = app.add_subcommand("simulate", "encode sequences under the configured mode");
  add_common(sim, sim_args);

  CLI::App* tr = app.add_subcommand("train", "train the adjustment controller");
  add_common(tr, train_args);

  CLI::App* ev = app.add_subcommand("eval", "evaluate completed runs and emit BD-rate matrix");
  add_common(ev, eval_args);

  CLI::App* gc = app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
  add_common(gc, grad_args);
  double tolerance = 1e-4;
  std::string corrupt_group;
  gc->add_option("--tolerance", tolerance, "maximum relative error");
  gc->add_option("--corrupt-group", corrupt_group,
                 "test hook: corrupt one gradient group so the check must fail");

  CLI::App* gt = app.add_subcommand("gen-trace", "sample the synthetic plant into a trace CSV");
  add_common(gt, trace_args);
  std::size_t trace_frames = 16;
  std::size_t grid_points = 8;
  std::string trace_out;
  gt->add_option("--frames", trace_frames, "frames to sample")->check(CLI::PositiveNumber);
  gt->add_option("--grid-points", grid_points, "lambda grid points per frame")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1000}));
  gt->add_option("--trace-out", trace_out, "output path (default <out_dir>/trace.csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      ratelab::run_simulate(load(sim_args), sim_args.jobs);
    } else if (tr->parsed()) {
      ratelab::run_train(load(train_args));
    } else if (ev->parsed()) {
      ratelab::run_eval(load(eval_args));
    } else if (gc->parsed()) {
      return ratelab::run_gradcheck(load(grad_args), tolerance, corrupt_group);
    } else if (gt->parsed()) {
      ratelab::run_gen_trace(load(trace_args), trace_frames, grid_points, trace_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

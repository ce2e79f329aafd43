#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>

#include "vbb/harness/analyze.hpp"
#include "vbb/harness/runner.hpp"

namespace {

void configure_logging() {
  const char* level = std::getenv("VBB_LOG");
  const std::string l = level ? level : "info";
  if (l == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (l == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    if (l != "info") spdlog::warn("VBB_LOG='{}' not recognised, using info", l);
    spdlog::set_level(spdlog::level::info);
  }
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
}

void log_record(const vbb::harness::MetricsRecord& r) {
  spdlog::info("{} on {}: success {:.3f} access {:.3f} junction fraction {:.3f} enrichment {:.3f}", r.run_id,
               r.eval_env, r.eval_success, r.access_rate, r.junction_access_fraction, r.junction_enrichment);
  if (r.mean_kl_bits) spdlog::info("  bits {:.4f} (floored {:.4f})", *r.mean_kl_bits, *r.mean_kl_bits_floored);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace vbb::harness;
  configure_logging();

  CLI::App app{"Variational bandwidth bottleneck experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> train_seed;
  bool train_eval = false;
  auto* train = app.add_subcommand("train", "train one or all seeds of a configuration");
  train->add_option("--config", config_path, "experiment JSON")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", train_seed, "train only this seed");
  train->add_flag("--eval", train_eval, "evaluate each final checkpoint on the configured eval envs");

  std::string checkpoint;
  EvalRequest req;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and append a metrics row");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--env", req.env, "environment name")->required();
  eval->add_option("--episodes", req.episodes, "episodes")->capture_default_str();
  eval->add_option("--eval-seed", req.eval_seed, "evaluation seed")->capture_default_str();
  eval->add_flag("--greedy", req.greedy, "greedy actions");
  eval->add_flag("--gate-threshold", req.gate_threshold, "open the gate when d_cap > 0.5");
  eval->add_option("--metrics", req.metrics_path, "metrics CSV (default: next to the checkpoint)");
  eval->add_option("--episode-log", req.episode_log, "write per-episode JSON lines here");

  std::string runs, table;
  auto* analyze = app.add_subcommand("analyze", "summarise metrics.csv files as a markdown table");
  analyze->add_option("--runs", runs, "directory searched for metrics.csv")->required();
  analyze->add_option("--table", table, "generalization, junction, planner or bits")->required();

  std::string render_env;
  std::uint64_t render_seed = 0;
  auto* render = app.add_subcommand("render", "print a level and its first observation");
  render->add_option("--env", render_env, "environment name")->required();
  render->add_option("--seed", render_seed, "level seed")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      const ExperimentConfig config = load_config(config_path);
      validate(config);
      std::vector<std::uint64_t> seeds = train_seed ? std::vector<std::uint64_t>{*train_seed} : config.seeds;
      for (std::uint64_t seed : seeds) {
        spdlog::info("training {}", run_id(config, seed));
        const TrainOutcome o = train_run(config, seed, out_dir, [](const vbb::agent::CurvePoint& p) {
          spdlog::info("frames {} return {:.3f} success {:.3f} access {:.3f} kl {:.4g} entropy {:.3f}", p.frames,
                       p.mean_return, p.success_rate, p.access_rate, p.mean_kl_nats, p.entropy);
        });
        spdlog::info("wrote {} (train success {:.3f}, {:.0f}s)", o.checkpoint, o.train_success, o.wall_clock_s);
        if (train_eval) {
          for (const auto& env : config.eval_envs) {
            EvalRequest r;
            r.env = env;
            r.episodes = config.eval_episodes;
            r.eval_seed = config.eval_seed;
            log_record(eval_run(o.checkpoint, r));
          }
        }
      }
    } else if (*eval) {
      log_record(eval_run(checkpoint, req));
    } else if (*analyze) {
      const TableOutput t = analyze_table(collect_metrics(runs), table);
      std::cout << t.markdown;
      for (const auto& m : t.missing) spdlog::warn("missing cell: {}", m);
    } else if (*render) {
      std::cout << render_level(render_env, render_seed);
    }
  } catch (const vbb::ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
  return 0;
}

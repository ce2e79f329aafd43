#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "vbb/agent/evaluate.hpp"
#include "vbb/agent/train.hpp"
#include "vbb/harness/checkpoint.hpp"
#include "vbb/harness/config.hpp"
#include "vbb/harness/metrics.hpp"

namespace vbb::harness {

namespace fs = std::filesystem;

struct TrainOutcome {
  std::string run_dir;
  std::string checkpoint;
  double train_success = 0.0;
  std::uint64_t frames = 0;
  double wall_clock_s = 0.0;
};

/// Trains one seed into `<out>/<run_id>`: config.json, curve.csv, periodic
/// checkpoints under checkpoints/, and final.vbb.
inline TrainOutcome train_run(const ExperimentConfig& config, std::uint64_t seed, const std::string& out,
                              const std::function<void(const agent::CurvePoint&)>& on_log = {}) {
  validate(config);
  const fs::path dir = fs::path(out) / run_id(config, seed);
  fs::create_directories(dir / "checkpoints");
  {
    ExperimentConfig snapshot = config;
    snapshot.seeds = {seed};
    std::ofstream cfg(dir / "config.json", std::ios::trunc);
    cfg << to_json(snapshot).dump(2) << "\n";
  }
  std::ofstream curve(dir / "curve.csv", std::ios::trunc);
  curve << curve_header() << "\r\n";

  agent::Trainer trainer(agent_spec(config), train_settings(config, seed));
  std::uint64_t next_checkpoint = config.checkpoint_interval;
  const auto start = std::chrono::steady_clock::now();
  trainer.run([&](const agent::CurvePoint& p) {
    curve << to_csv_row(p) << "\r\n";
    curve.flush();
    if (on_log) on_log(p);
    if (config.checkpoint_interval > 0 && trainer.frames() >= next_checkpoint && !trainer.finished()) {
      save_checkpoint((dir / "checkpoints" / ("frames_" + std::to_string(trainer.frames()) + ".vbb")).string(),
                      capture(config, seed, trainer));
      while (next_checkpoint <= trainer.frames()) next_checkpoint += config.checkpoint_interval;
    }
  });
  TrainOutcome outcome;
  outcome.run_dir = dir.string();
  outcome.checkpoint = (dir / "final.vbb").string();
  outcome.train_success = trainer.recent_success();
  outcome.frames = trainer.frames();
  outcome.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_checkpoint(outcome.checkpoint, capture(config, seed, trainer));
  return outcome;
}

struct EvalRequest {
  std::string env;
  std::size_t episodes = 500;
  std::uint64_t eval_seed = 1'000'003;
  bool greedy = false;
  bool gate_threshold = false;
  /// Metrics file to append to; empty means metrics.csv next to the checkpoint.
  std::string metrics_path;
  /// Optional JSON-lines dump of every episode.
  std::string episode_log;
};

inline std::string episode_json(const agent::EpisodeLog& log) {
  json steps = json::array();
  for (const auto& s : log.steps) {
    json st{{"x", s.pos.x},           {"y", s.pos.y},         {"dir", s.dir},
            {"action", s.action},     {"accessed", s.accessed}, {"junction", s.junction}};
    if (s.d_cap >= 0.0) st["d_cap"] = s.d_cap;
    if (s.kl_nats) st["kl_nats"] = *s.kl_nats;
    steps.push_back(std::move(st));
  }
  return json{{"episode", log.index}, {"level_seed", log.level_seed}, {"success", log.success},
              {"reward", log.reward},  {"steps", std::move(steps)}}
      .dump();
}

inline MetricsRecord make_record(const Checkpoint& ck, const std::string& env, const agent::EvalResult& r,
                                 double wall_clock_s) {
  MetricsRecord m;
  m.run_id = run_id(ck.config, ck.seed);
  m.seed = ck.seed;
  m.variant = agent::to_string(ck.config.variant);
  m.beta = ck.config.beta;
  m.train_env = ck.config.train_env;
  m.eval_env = env;
  m.frames = ck.frames;
  m.train_success = ck.train_success;
  m.eval_success = r.success_rate;
  m.access_rate = r.junction.access_rate;
  m.junction_access_fraction = r.junction.junction_access_fraction;
  m.junction_enrichment = r.junction.junction_enrichment;
  m.mean_kl_nats = r.mean_kl_nats;
  m.mean_kl_bits = r.mean_kl_bits;
  m.mean_kl_bits_floored = r.mean_kl_bits_floored;
  m.wall_clock_s = wall_clock_s;
  return m;
}

/// Evaluates a checkpoint and appends one metrics row.
inline MetricsRecord eval_run(const std::string& checkpoint_path, const EvalRequest& req) {
  if (req.episodes == 0) throw ConfigError("episodes", "at least one evaluation episode is required");
  grid::parse_env_name(req.env);
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const auto net = make_net(ck);
  agent::EvalSettings es;
  es.env = req.env;
  es.episodes = req.episodes;
  es.seed = req.eval_seed;
  es.greedy = req.greedy;
  es.gate_threshold = req.gate_threshold;
  es.keep_logs = !req.episode_log.empty();
  const auto start = std::chrono::steady_clock::now();
  const agent::EvalResult result = agent::evaluate(*net, agent_spec(ck.config), es);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const MetricsRecord record = make_record(ck, req.env, result, secs);
  const std::string metrics =
      req.metrics_path.empty() ? (fs::path(checkpoint_path).parent_path() / "metrics.csv").string() : req.metrics_path;
  append_metrics(metrics, record);
  if (!req.episode_log.empty()) {
    std::ofstream out(req.episode_log, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + req.episode_log);
    for (const auto& log : result.logs) out << episode_json(log) << "\n";
  }
  return record;
}

/// ASCII map of a level followed by the step-0 observation channels.
inline std::string render_level(const std::string& env, std::uint64_t seed, int view = grid::kDefaultView) {
  const grid::EnvState s = grid::reset(grid::parse_env_name(env), seed);
  std::ostringstream os;
  os << env << " seed " << seed << "\n";
  os << grid::render(s.grid(), s.pos, s.dir) << "\n";
  const grid::Observation o = grid::observe(s, view);
  static const char* names[] = {"type", "color", "state"};
  for (int ch = 0; ch < 3; ++ch) {
    os << "observation " << names[ch] << "\n";
    for (int vy = 0; vy < view; ++vy) {
      for (int vx = 0; vx < view; ++vx) os << (vx ? " " : "") << static_cast<int>(o.at(vx, vy, ch));
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace vbb::harness

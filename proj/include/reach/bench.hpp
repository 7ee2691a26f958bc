#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reach/agents.hpp"
#include "reach/env.hpp"
#include "reach/train.hpp"

namespace reach {

class Config;

inline const std::vector<double> kDefaultThresholds{0.05, 0.02, 0.01, 0.005};

struct EvalReport {
  double average_return = 0.0;
  double train_walltime_s = 0.0;
  std::vector<double> thresholds;
  std::vector<double> success_ratio;
  std::vector<std::optional<double>> reach_time;  // empty when nothing succeeded
  int episodes = 0;
};

/// Success at X: the last distance of the episode is below X. Reach time at
/// X: first 1-based step whose distance is below X, averaged over the
/// successful episodes only. Thresholds must be strictly decreasing.
EvalReport compute_report(const std::vector<EpisodeLog>& logs, const std::vector<double>& thresholds);

struct Evaluation {
  EvalReport report;
  std::vector<EpisodeLog> logs;
};

/// Runs `episodes` full episodes with Exploit actions on env_for(spec, env).
Evaluation evaluate(Agent& agent, const ArmModel& model, const EnvConfig& env, int episodes,
                    const std::vector<double>& thresholds, std::uint64_t seed);

/// Trailing rolling mean; the first window-1 points average the prefix.
std::vector<double> smooth_curve(const std::vector<double>& series, int window = 50);

struct CurveBucket {
  long long timestep = 0;  // upper edge of the bucket
  double mean = 0.0;
  double std = 0.0;  // population standard deviation across seeds
  int seeds = 0;
};

/// Bins each seed's (timestep, value) points into `bucket`-wide buckets
/// (mean inside a bucket), then averages the seeds that have data there.
std::vector<CurveBucket> aggregate_curves(const std::vector<LearningCurve>& per_seed,
                                          long long bucket = 1000);

struct ExperimentConfig {
  std::vector<EnvConfig> envs{EnvConfig::env1()};
  std::vector<AgentSpec> agents;
  std::filesystem::path arm_file;  // empty: default arm
  long long total_timesteps = 200000;
  int n_seeds = 10;
  std::uint64_t base_seed = 0;
  int eval_episodes = 100;
  std::vector<double> thresholds = kDefaultThresholds;
  int smoothing_window = 50;
  long long bucket = 1000;
  std::filesystem::path output_dir = "bench_out";
  bool resume = false;

  /// [bench] envs, agents, total_timesteps, n_seeds, seed, eval_episodes,
  /// thresholds, smoothing_window, bucket, resume; [env] as EnvConfig;
  /// [agent] for every agent, [agent_<ALGO>] and [agent_<LABEL>] per agent
  /// (her_strategy and her_k go there too).
  static ExperimentConfig from_config(const Config& cfg);
  void validate() const;
};

/// Reads agent hyperparameters (and HER settings) for `label` from the
/// config layers described above.
AgentSpec agent_from_config(const Config& cfg, const std::string& label);

struct BenchRow {
  std::string env;
  std::string algo;
  EvalReport report;
  double return_std = 0.0;
  int seeds = 0;
  std::vector<std::string> warnings;
};

struct RunArtifacts {
  std::filesystem::path dir;
  std::vector<std::string> files;  // relative to the benchmark output dir
  EvalReport report;
  LearningCurve curve;
  std::optional<std::string> failure;
};

/// Trains, checkpoints and evaluates one (env, agent, seed) run into `dir`.
RunArtifacts run_single(const AgentSpec& spec, const ArmModel& model, const EnvConfig& env,
                        long long total_timesteps, std::uint64_t seed, int eval_episodes,
                        const std::vector<double>& thresholds, const std::filesystem::path& dir,
                        const std::string& config_hash);

struct BenchmarkResult {
  std::vector<BenchRow> rows;
  std::vector<std::string> files;  // every emitted file, relative to output_dir
};

/// Averages per-seed reports: returns, walltimes and success ratios by the
/// arithmetic mean; reach times over the seeds that have one.
BenchRow aggregate_reports(const std::string& env, const std::string& algo,
                           const std::vector<EvalReport>& reports);

/// Runs every (env, agent, seed) and writes benchmark.csv, curves.csv,
/// figures and manifest.json under output_dir.
BenchmarkResult run_benchmark(const ExperimentConfig& cfg, const std::string& config_hash = "");

}  // namespace reach

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reach/agents.hpp"
#include "reach/env.hpp"

namespace reach {

/// One finished training episode, indexed by cumulative environment steps.
struct CurvePoint {
  long long timestep = 0;
  double episode_return = 0.0;
};

using LearningCurve = std::vector<CurvePoint>;

struct TrainResult {
  std::unique_ptr<Agent> agent;
  LearningCurve curve;
  double walltime_s = 0.0;
  long long timesteps = 0;
  LossDiagnostics last_losses;
  bool stopped_early = false;
  /// Set when an update failed (non-finite loss); training stops there.
  std::optional<std::string> failure;
};

/// Called after every finished episode; return false to stop training.
using EpisodeCallback = std::function<bool(const CurvePoint&)>;

/// Environment configuration an agent spec trains on: HER agents always see
/// the goal-conditioned observation.
EnvConfig env_for(const AgentSpec& spec, EnvConfig env);

/// Runs the interaction loop: n_envs lock-step environments feeding one
/// learner for A2C/PPO, a single environment otherwise. Deterministic in
/// `seed`.
TrainResult train(const AgentSpec& spec, const ArmModel& model, const EnvConfig& env_config,
                  long long total_timesteps, std::uint64_t seed,
                  const EpisodeCallback& on_episode = {});

}  // namespace reach

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "reach/kinematics.hpp"

namespace reach {

class Config;

inline constexpr int kActionDim = 6;
inline constexpr int kPlainObsDim = 9;
inline constexpr int kGoalObsDim = 15;

using Rng = std::mt19937_64;
using Action = std::array<double, kActionDim>;

enum class GoalMode { Fixed, Random };

/// Actuator imperfections; both knobs are off when zero.
struct NoiseConfig {
  double actuator_resolution = 0.0;  // rad, applied deltas are rounded to this grid
  double action_noise_std = 0.0;     // rad, zero-mean Gaussian added to each delta
};

struct EnvConfig {
  GoalMode goal_mode = GoalMode::Fixed;
  Pose3 fixed_goal{0.17, 0.0, 0.22};
  int episode_len = 100;
  double termination_eps = 0.0005;
  double delta_max = 0.1;
  std::optional<NoiseConfig> noise;
  JointAngles initial_angles{0.0, 0.3, 0.8, 0.6, 0.0, 0.0};
  bool goal_conditioned = false;
  std::uint64_t seed = 0;
  GoalRegion region;

  /// Env1: fixed goal. Env2: goal resampled at every reset.
  static EnvConfig env1();
  static EnvConfig env2();

  /// Reads the [env] section; `env.id` selects the Env1/Env2 preset.
  static EnvConfig from_config(const Config& cfg);

  std::string id() const { return goal_mode == GoalMode::Fixed ? "Env1" : "Env2"; }
  int obs_dim() const { return goal_conditioned ? kGoalObsDim : kPlainObsDim; }

  /// Throws ConfigError on violated invariants.
  void validate(const ArmModel& model) const;
};

/// [x_e, y_e, z_e, theta_1..theta_6].
struct Observation {
  Pose3 ee;
  JointAngles theta{};
};

struct GoalObservation {
  Observation obs;
  Pose3 achieved_goal;
  Pose3 desired_goal;
};

/// 9 numbers for the plain variant, 15 (plus achieved and desired goal) for
/// the goal-conditioned one.
std::vector<double> flatten(const GoalObservation& o, bool goal_conditioned);

struct StepResult {
  GoalObservation obs;
  double reward = 0.0;  // -distance^2
  bool done = false;
  bool terminated = false;  // entered the termination ball
  bool truncated = false;   // hit the episode length without terminating
  double distance = 0.0;
};

/// One row of an exported episode trace.
struct StepRecord {
  int t = 0;
  JointAngles theta{};
  Pose3 ee;
  Pose3 goal;
  Action action{};
  double reward = 0.0;
  double distance = 0.0;
  bool done = false;
};

std::string to_json_line(const StepRecord& r);

Pose3 sample_goal(Rng& rng, const GoalRegion& region = {});

/// The reaching MDP. Single-owner state machine.
class ReachEnv {
 public:
  ReachEnv(ArmModel model, EnvConfig config);

  /// Restores the initial joint configuration and draws the goal.
  GoalObservation reset();
  /// Reseeds the goal and noise streams before resetting.
  GoalObservation reset(std::uint64_t seed);

  /// Applies clipped action * delta_max as joint deltas.
  StepResult step(std::span<const double> action);

  std::vector<double> observation() const { return flatten(current_, config_.goal_conditioned); }
  const GoalObservation& current() const { return current_; }
  const EnvConfig& config() const { return config_; }
  const ArmModel& model() const { return model_; }
  const Pose3& goal() const { return goal_; }
  int steps_taken() const { return t_; }
  bool finished() const { return done_; }
  int obs_dim() const { return config_.obs_dim(); }

  /// Last applied action (clipped), for trace export.
  const Action& last_action() const { return last_action_; }

 private:
  GoalObservation make_observation() const;

  ArmModel model_;
  EnvConfig config_;
  Rng goal_rng_;
  Rng noise_rng_;
  JointAngles theta_{};
  Pose3 ee_;
  Pose3 goal_;
  GoalObservation current_;
  Action last_action_{};
  int t_ = 0;
  bool done_ = true;
  bool was_reset_ = false;
};

/// Per-step rewards and end-effector to goal distances of one episode.
struct EpisodeLog {
  std::vector<double> rewards;
  std::vector<double> distances;

  std::size_t length() const { return rewards.size(); }
};

/// Correctly rounded sum (independent of summation order).
double exact_sum(std::span<const double> values);

/// Sum of per-step rewards. Throws UsageError on an empty log.
double episode_return(const EpisodeLog& log);

}  // namespace reach

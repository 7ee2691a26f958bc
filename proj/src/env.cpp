#include "reach/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "reach/config.hpp"
#include "reach/errors.hpp"

namespace reach {

EnvConfig EnvConfig::env1() { return EnvConfig{}; }

EnvConfig EnvConfig::env2() {
  EnvConfig c;
  c.goal_mode = GoalMode::Random;
  return c;
}

EnvConfig EnvConfig::from_config(const Config& cfg) {
  const std::string id = cfg.get_string("env.id", "Env1");
  EnvConfig c;
  if (id == "Env1") {
    c = env1();
  } else if (id == "Env2") {
    c = env2();
  } else {
    throw ConfigError("env.id must be Env1 or Env2, got '" + id + "'");
  }
  const std::string mode = cfg.get_string("env.goal_mode", c.goal_mode == GoalMode::Fixed ? "fixed" : "random");
  if (mode == "fixed") {
    c.goal_mode = GoalMode::Fixed;
  } else if (mode == "random") {
    c.goal_mode = GoalMode::Random;
  } else {
    throw ConfigError("env.goal_mode must be fixed or random, got '" + mode + "'");
  }
  const auto g = cfg.get_doubles("env.fixed_goal", {c.fixed_goal.x, c.fixed_goal.y, c.fixed_goal.z});
  if (g.size() != 3) throw ConfigError("env.fixed_goal: expected x, y, z");
  c.fixed_goal = {g[0], g[1], g[2]};
  c.episode_len = static_cast<int>(cfg.get_int("env.episode_len", c.episode_len));
  c.termination_eps = cfg.get_double("env.termination_eps", c.termination_eps);
  c.delta_max = cfg.get_double("env.delta_max", c.delta_max);
  const auto q0 = cfg.get_doubles("env.initial_angles",
                                  {c.initial_angles.begin(), c.initial_angles.end()});
  if (q0.size() != kNumJoints) throw ConfigError("env.initial_angles: expected 6 angles");
  std::copy(q0.begin(), q0.end(), c.initial_angles.begin());
  c.goal_conditioned = cfg.get_bool("env.goal_conditioned", c.goal_conditioned);
  c.seed = static_cast<std::uint64_t>(cfg.get_int("env.seed", 0));
  const double res = cfg.get_double("env.actuator_resolution", 0.0);
  const double std_dev = cfg.get_double("env.action_noise_std", 0.0);
  if (res < 0.0 || std_dev < 0.0) throw ConfigError("env noise knobs must be non-negative");
  if (res > 0.0 || std_dev > 0.0) c.noise = NoiseConfig{res, std_dev};
  return c;
}

void EnvConfig::validate(const ArmModel& model) const {
  if (episode_len < 1) throw ConfigError("episode_len must be >= 1");
  if (!(termination_eps > 0.0)) throw ConfigError("termination_eps must be > 0");
  if (!(delta_max > 0.0)) throw ConfigError("delta_max must be > 0");
  if (goal_mode == GoalMode::Fixed && !workspace_contains(model, fixed_goal, region)) {
    throw ConfigError("fixed goal lies outside the goal workspace");
  }
}

std::vector<double> flatten(const GoalObservation& o, bool goal_conditioned) {
  std::vector<double> v;
  v.reserve(goal_conditioned ? kGoalObsDim : kPlainObsDim);
  v.insert(v.end(), {o.obs.ee.x, o.obs.ee.y, o.obs.ee.z});
  v.insert(v.end(), o.obs.theta.begin(), o.obs.theta.end());
  if (goal_conditioned) {
    v.insert(v.end(), {o.achieved_goal.x, o.achieved_goal.y, o.achieved_goal.z});
    v.insert(v.end(), {o.desired_goal.x, o.desired_goal.y, o.desired_goal.z});
  }
  return v;
}

Pose3 sample_goal(Rng& rng, const GoalRegion& region) {
  std::uniform_real_distribution<double> ux(region.box_lo.x(), region.box_hi.x());
  std::uniform_real_distribution<double> uy(region.box_lo.y(), region.box_hi.y());
  std::uniform_real_distribution<double> uz(region.box_lo.z(), region.box_hi.z());
  // Rejection sampling keeps the draw uniform over box ∩ shell.
  for (;;) {
    const Pose3 p{ux(rng), uy(rng), uz(rng)};
    if (region.contains(p)) return p;
  }
}

ReachEnv::ReachEnv(ArmModel model, EnvConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  config_.validate(model_);
  goal_rng_.seed(config_.seed);
  noise_rng_.seed(config_.seed ^ 0x9e3779b97f4a7c15ULL);
}

GoalObservation ReachEnv::reset(std::uint64_t seed) {
  goal_rng_.seed(seed);
  noise_rng_.seed(seed ^ 0x9e3779b97f4a7c15ULL);
  return reset();
}

GoalObservation ReachEnv::reset() {
  theta_ = clamp_angles(model_, config_.initial_angles);
  ee_ = forward_kinematics(model_, theta_);
  goal_ = config_.goal_mode == GoalMode::Fixed ? config_.fixed_goal
                                                : sample_goal(goal_rng_, config_.region);
  t_ = 0;
  done_ = false;
  was_reset_ = true;
  last_action_.fill(0.0);
  current_ = make_observation();
  return current_;
}

GoalObservation ReachEnv::make_observation() const {
  GoalObservation o;
  o.obs.ee = ee_;
  o.obs.theta = theta_;
  o.achieved_goal = ee_;
  o.desired_goal = goal_;
  return o;
}

StepResult ReachEnv::step(std::span<const double> action) {
  if (!was_reset_) throw UsageError("step called before reset");
  if (done_) throw UsageError("step called on a finished episode");
  if (action.size() != kActionDim) throw UsageError("action must have 6 components");
  for (double a : action) {
    if (!std::isfinite(a)) throw std::domain_error("non-finite action component");
  }

  std::array<double, kNumJoints> target;
  for (int i = 0; i < kActionDim; ++i) {
    last_action_[i] = std::clamp(action[i], -1.0, 1.0);
    double delta = last_action_[i] * config_.delta_max;
    if (config_.noise) {
      if (config_.noise->actuator_resolution > 0.0) {
        delta = std::round(delta / config_.noise->actuator_resolution) *
                config_.noise->actuator_resolution;
      }
      if (config_.noise->action_noise_std > 0.0) {
        std::normal_distribution<double> n(0.0, config_.noise->action_noise_std);
        delta += n(noise_rng_);
      }
    }
    target[i] = theta_[i] + delta;
  }
  theta_ = clamp_angles(model_, target);
  ee_ = forward_kinematics(model_, theta_);
  ++t_;

  StepResult r;
  r.distance = distance(ee_, goal_);
  r.reward = -squared_distance(ee_, goal_);
  r.terminated = r.distance < config_.termination_eps;
  r.truncated = !r.terminated && t_ >= config_.episode_len;
  r.done = r.terminated || r.truncated;
  done_ = r.done;
  current_ = make_observation();
  r.obs = current_;
  return r;
}

std::string to_json_line(const StepRecord& r) {
  std::string out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
  };
  auto arr = [&](std::span<const double> v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ',';
      num(v[i]);
    }
    out += ']';
  };
  const double ee[3] = {r.ee.x, r.ee.y, r.ee.z};
  const double goal[3] = {r.goal.x, r.goal.y, r.goal.z};
  out += "{\"t\":" + std::to_string(r.t) + ",\"theta\":";
  arr(r.theta);
  out += ",\"ee\":";
  arr(ee);
  out += ",\"goal\":";
  arr(goal);
  out += ",\"action\":";
  arr(r.action);
  out += ",\"reward\":";
  num(r.reward);
  out += ",\"distance\":";
  num(r.distance);
  out += ",\"done\":";
  out += r.done ? "true" : "false";
  out += '}';
  return out;
}

double exact_sum(std::span<const double> values) {
  // Shewchuk's non-overlapping partials with a final half-even correction.
  std::vector<double> partials;
  double plain = 0.0;
  for (double x : values) {
    plain += x;
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  if (!std::isfinite(plain)) return plain;
  if (partials.empty()) return 0.0;
  std::size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

double episode_return(const EpisodeLog& log) {
  if (log.rewards.empty()) throw UsageError("episode_return: empty episode log");
  return exact_sum(log.rewards);
}

}  // namespace reach

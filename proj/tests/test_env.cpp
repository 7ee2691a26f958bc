#include <doctest.h>

#include <algorithm>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "oracles.hpp"
#include "reach/config.hpp"
#include "reach/env.hpp"
#include "reach/errors.hpp"

using namespace reach;

namespace {

const ArmModel& arm() {
  static const ArmModel m = ArmModel::default_model();
  return m;
}

constexpr std::array<double, 6> kZero{};

// An in-region pose reachable from a known configuration.
std::pair<JointAngles, Pose3> reachable_pose(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (;;) {
    JointAngles q;
    for (double& a : q) a = u(rng);
    const auto p = oracle::fk(arm(), q);
    const Pose3 pose{p[0], p[1], p[2]};
    if (workspace_contains(arm(), pose)) return {q, pose};
  }
}

}  // namespace

TEST_CASE("observation layout") {
  ReachEnv env(arm(), EnvConfig::env1());
  const auto o = env.reset();
  const auto flat = flatten(o, false);
  REQUIRE(flat.size() == 9);
  CHECK(flat[0] == o.obs.ee.x);
  CHECK(flat[2] == o.obs.ee.z);
  for (int i = 0; i < 6; ++i) CHECK(flat[3 + i] == o.obs.theta[i]);
  const auto g = flatten(o, true);
  REQUIRE(g.size() == 15);
  CHECK(g[9] == o.obs.ee.x);
  CHECK(g[14] == o.desired_goal.z);
}

TEST_CASE("fixed-goal resets are identical") {
  ReachEnv env(arm(), EnvConfig::env1());
  const auto a = flatten(env.reset(), true);
  env.step(std::array<double, 6>{1, -1, 0.5, 0.2, 0, 0});
  const auto b = flatten(env.reset(), true);
  CHECK(a == b);
}

TEST_CASE("random-goal resets are seeded") {
  EnvConfig c = EnvConfig::env2();
  c.seed = 77;
  ReachEnv e1(arm(), c), e2(arm(), c);
  for (int i = 0; i < 20; ++i) CHECK(e1.reset().desired_goal == e2.reset().desired_goal);
  CHECK(e1.reset(5).desired_goal == e2.reset(5).desired_goal);
  CHECK_FALSE(e1.reset().desired_goal == e1.reset().desired_goal);
}

TEST_CASE("sampled goals stay inside the workspace") {
  EnvConfig c = EnvConfig::env2();
  c.seed = 3;
  ReachEnv env(arm(), c);
  for (int i = 0; i < 10000; ++i) CHECK(workspace_contains(arm(), env.reset().desired_goal));
}

TEST_CASE("goal sampler is uniform over the region") {
  const GoalRegion region;
  // Reference centroid by an independent stratified grid over the box.
  double sx = 0, sy = 0, sz = 0;
  long n_ref = 0;
  const int g = 60;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j)
      for (int k = 0; k < g; ++k) {
        const Pose3 p{-0.25 + 0.5 * (i + 0.5) / g, -0.25 + 0.5 * (j + 0.5) / g, 0.10 + 0.25 * (k + 0.5) / g};
        const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
        if (r < 0.15 || r > 0.41) continue;
        sx += p.x;
        sy += p.y;
        sz += p.z;
        ++n_ref;
      }
  Rng rng(1);
  double mx = 0, my = 0, mz = 0, rmin = 1, rmax = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Pose3 p = sample_goal(rng, region);
    mx += p.x;
    my += p.y;
    mz += p.z;
    const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  CHECK(std::abs(mx / n - sx / n_ref) < 0.01 * 0.5);
  CHECK(std::abs(my / n - sy / n_ref) < 0.01 * 0.5);
  CHECK(std::abs(mz / n - sz / n_ref) < 0.01 * 0.25);
  CHECK(rmin >= 0.15);
  CHECK(rmax <= 0.41);
  Rng a(9), b(9);
  CHECK(sample_goal(a) == sample_goal(b));
}

TEST_CASE("zero action from reset gives minus the squared initial distance") {
  const EnvConfig c = EnvConfig::env1();
  ReachEnv env(arm(), c);
  env.reset();
  const auto ee = oracle::fk(arm(), c.initial_angles);
  const double d0sq = std::pow(ee[0] - c.fixed_goal.x, 2) + std::pow(ee[1] - c.fixed_goal.y, 2) +
                      std::pow(ee[2] - c.fixed_goal.z, 2);
  const auto r = env.step(kZero);
  CHECK(r.reward == doctest::Approx(-d0sq).epsilon(1e-14));
  CHECK_FALSE(r.done);
}

TEST_CASE("reaching the goal exactly terminates with zero reward") {
  const auto [q, pose] = reachable_pose(4);
  EnvConfig c = EnvConfig::env1();
  c.initial_angles = q;
  c.fixed_goal = Pose3::from(forward_kinematics(arm(), q).vec());
  ReachEnv env(arm(), c);
  env.reset();
  const auto r = env.step(kZero);
  CHECK(r.reward == 0.0);
  CHECK(r.distance == 0.0);
  CHECK(r.done);
  CHECK(r.terminated);
  CHECK_FALSE(r.truncated);
  CHECK_THROWS_AS(env.step(kZero), UsageError);
}

TEST_CASE("episodes truncate at the time limit") {
  ReachEnv env(arm(), EnvConfig::env1());
  env.reset();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  StepResult r;
  int steps = 0;
  do {
    std::array<double, 6> a;
    for (double& x : a) x = u(rng);
    r = env.step(a);
    ++steps;
    CHECK(r.reward == doctest::Approx(-r.distance * r.distance).epsilon(1e-15));
    CHECK(r.reward <= 0.0);
    CHECK(env.current().achieved_goal == env.current().obs.ee);
  } while (!r.done);
  CHECK(steps == 100);
  CHECK(r.truncated);
}

TEST_CASE("actions are clipped and scaled by delta_max") {
  EnvConfig c = EnvConfig::env1();
  ReachEnv env(arm(), c);
  env.reset();
  env.step(std::array<double, 6>{5.0, -5.0, 0.5, 0, 0, 0});
  const auto& th = env.current().obs.theta;
  CHECK(th[0] == doctest::Approx(c.initial_angles[0] + 0.1));
  CHECK(th[1] == doctest::Approx(c.initial_angles[1] - 0.1));
  CHECK(th[2] == doctest::Approx(c.initial_angles[2] + 0.05));
  CHECK(env.last_action()[0] == 1.0);
}

TEST_CASE("step errors") {
  ReachEnv env(arm(), EnvConfig::env1());
  CHECK_THROWS_AS(env.step(kZero), UsageError);
  env.reset();
  CHECK_THROWS_AS(env.step(std::array<double, 6>{0, 0, NAN, 0, 0, 0}), std::domain_error);
  CHECK_THROWS_AS(env.step(std::array<double, 5>{}), UsageError);
}

TEST_CASE("fixed goal outside the workspace is a config error") {
  EnvConfig c = EnvConfig::env1();
  c.fixed_goal = {0.6, 0.0, 0.2};
  CHECK_THROWS_AS(ReachEnv(arm(), c), ConfigError);
}

TEST_CASE("trajectory is a deterministic function of the action sequence") {
  EnvConfig c = EnvConfig::env2();
  c.seed = 12;
  ReachEnv e1(arm(), c), e2(arm(), c);
  e1.reset();
  e2.reset();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 100; ++t) {
    std::array<double, 6> a;
    for (double& x : a) x = u(rng);
    const auto r1 = e1.step(a), r2 = e2.step(a);
    CHECK(r1.reward == r2.reward);
    CHECK(flatten(r1.obs, true) == flatten(r2.obs, true));
  }
}

TEST_CASE("noise knobs quantize and perturb the applied deltas") {
  EnvConfig c = EnvConfig::env1();
  c.noise = NoiseConfig{0.04, 0.0};
  ReachEnv env(arm(), c);
  env.reset();
  env.step(std::array<double, 6>{0.5, 0.1, 0, 0, 0, 0});  // 0.05 -> 0.04, 0.01 -> 0
  CHECK(env.current().obs.theta[0] == doctest::Approx(c.initial_angles[0] + 0.04));
  CHECK(env.current().obs.theta[1] == doctest::Approx(c.initial_angles[1]));

  c.noise = NoiseConfig{0.0, 0.01};
  ReachEnv noisy(arm(), c), noisy2(arm(), c);
  noisy.reset();
  noisy2.reset();
  noisy.step(kZero);
  noisy2.step(kZero);
  CHECK(noisy.current().obs.theta != c.initial_angles);
  CHECK(noisy.current().obs.theta == noisy2.current().obs.theta);
}

TEST_CASE("env config from file") {
  const Config cfg = Config::parse(
      "schema_version = 1\n[env]\nid = Env2\ntermination_eps = 0.001\naction_noise_std = 0.002\n");
  const EnvConfig c = EnvConfig::from_config(cfg);
  CHECK(c.goal_mode == GoalMode::Random);
  CHECK(c.termination_eps == 0.001);
  REQUIRE(c.noise.has_value());
  CHECK(c.noise->action_noise_std == 0.002);
  CHECK_THROWS_AS(EnvConfig::from_config(Config::parse("schema_version = 1\n[env]\nid = Env9\n")), ConfigError);
}

TEST_CASE("step records serialize as JSON lines") {
  StepRecord r;
  r.t = 3;
  r.reward = -0.25;
  r.distance = 0.5;
  r.goal = {0.1, 0.2, 0.3};
  const auto j = nlohmann::json::parse(to_json_line(r));
  CHECK(j.at("t") == 3);
  CHECK(j.at("theta").size() == 6);
  CHECK(j.at("goal")[2] == 0.3);
  CHECK(j.at("reward") == -0.25);
  CHECK(j.at("done") == false);
  for (const char* k : {"ee", "action", "distance"}) CHECK(j.contains(k));
}

TEST_CASE("episode_return") {
  EpisodeLog log;
  log.rewards.assign(100, -0.01);
  CHECK(episode_return(log) == -1.0);
  EpisodeLog one;
  one.rewards = {0.0};
  CHECK(episode_return(one) == 0.0);
  CHECK_THROWS_AS(episode_return(EpisodeLog{}), UsageError);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.2, -1e-4);
  for (int trial = 0; trial < 200; ++trial) {
    EpisodeLog l;
    for (int i = 0; i < 100; ++i) l.rewards.push_back(u(rng));
    std::vector<double> shuffled = l.rewards;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(episode_return(l) == oracle::quad_sum(shuffled));
  }
}

#include "reach/train.hpp"

#include <chrono>

#include "reach/errors.hpp"

namespace reach {

namespace {

enum SeedStream : std::uint64_t { kAgentStream = 1, kEnvStream = 2, kHerStream = 3, kWarmupStream = 4 };

using Clock = std::chrono::steady_clock;

void train_random(RandomAgent& agent, ReachEnv& env, long long total, TrainResult& out,
                  const EpisodeCallback& cb) {
  auto obs = env.reset();
  double ret = 0.0;
  for (long long t = 0; t < total; ++t) {
    const auto a = agent.act(flatten(obs, env.config().goal_conditioned), ActMode::Explore);
    const auto r = env.step(a);
    ret += r.reward;
    obs = r.obs;
    out.timesteps = t + 1;
    if (r.done) {
      out.curve.push_back({t + 1, ret});
      ret = 0.0;
      obs = env.reset();
      if (cb && !cb(out.curve.back())) {
        out.stopped_early = true;
        return;
      }
    }
  }
}

template <typename OffPolicy>
void train_off_policy(OffPolicy& agent, ReachEnv& env, long long total, std::uint64_t seed,
                      TrainResult& out, const EpisodeCallback& cb) {
  const HyperParams& h = agent.spec().hyper;
  const bool goal_obs = env.config().goal_conditioned;
  ReplayBuffer buffer(h.buffer_capacity, env.obs_dim(), env.config().termination_eps);
  const HerConfig her = agent.spec().her.value_or(HerConfig{HerStrategy::Future, 0});
  Rng her_rng(derive_seed(seed, kHerStream));
  Rng warmup_rng(derive_seed(seed, kWarmupStream));
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);

  std::vector<Transition> episode;
  episode.reserve(static_cast<std::size_t>(env.config().episode_len));
  auto obs = env.reset();
  std::vector<double> flat = flatten(obs, goal_obs);
  double ret = 0.0;
  for (long long t = 0; t < total; ++t) {
    Action a;
    if (t < h.learning_starts) {
      for (double& x : a) x = uniform(warmup_rng);
    } else {
      a = agent.act(flat, ActMode::Explore);
    }
    const auto r = env.step(a);
    Transition tr;
    tr.obs = flat;
    tr.action = env.last_action();
    tr.reward = r.reward;
    tr.next_obs = flatten(r.obs, goal_obs);
    tr.done = r.terminated;
    tr.achieved_goal = obs.achieved_goal;
    tr.desired_goal = obs.desired_goal;
    tr.next_achieved_goal = r.obs.achieved_goal;
    flat = tr.next_obs;
    episode.push_back(std::move(tr));
    obs = r.obs;
    ret += r.reward;
    out.timesteps = t + 1;

    if (r.done) {
      buffer.push_episode(episode, her, her_rng);
      episode.clear();
      out.curve.push_back({t + 1, ret});
      ret = 0.0;
      obs = env.reset();
      flat = flatten(obs, goal_obs);
      if (cb && !cb(out.curve.back())) {
        out.stopped_early = true;
        return;
      }
    }
    if (t + 1 >= h.learning_starts && (t + 1) % h.train_freq == 0 &&
        buffer.size() >= static_cast<std::size_t>(h.batch)) {
      out.last_losses = agent.update(buffer);
    }
  }
}

void train_on_policy(GaussianAgent& agent, const ArmModel& model, const EnvConfig& base,
                     long long total, std::uint64_t seed, TrainResult& out,
                     const EpisodeCallback& cb) {
  const HyperParams& h = agent.spec().hyper;
  const bool goal_obs = base.goal_conditioned;
  std::vector<ReachEnv> envs;
  std::vector<std::vector<double>> obs;
  std::vector<double> returns(static_cast<std::size_t>(h.n_envs), 0.0);
  for (int e = 0; e < h.n_envs; ++e) {
    EnvConfig c = base;
    c.seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(e));
    envs.emplace_back(model, c);
    obs.push_back(flatten(envs.back().reset(), goal_obs));
  }
  RolloutBuffer rollout(h.n_steps, h.n_envs, base.obs_dim());
  long long t = 0;
  while (t < total) {
    for (int step = 0; step < h.n_steps; ++step) {
      for (int e = 0; e < h.n_envs; ++e) {
        const auto ps = agent.policy_step(obs[e], ActMode::Explore);
        const auto r = envs[e].step(ps.env_action);
        auto next = flatten(r.obs, goal_obs);
        // Time-limit cuts bootstrap from the value of the final observation.
        const double trunc_value = r.truncated ? agent.value(next) : 0.0;
        rollout.add(step, e, obs[e], ps.action, r.reward, ps.value, ps.log_prob, r.terminated,
                    r.truncated, trunc_value);
        returns[e] += r.reward;
        ++t;
        if (r.done) {
          out.curve.push_back({t, returns[e]});
          returns[e] = 0.0;
          next = flatten(envs[e].reset(), goal_obs);
          if (cb && !cb(out.curve.back())) {
            out.timesteps = t;
            out.stopped_early = true;
            return;
          }
        }
        obs[e] = std::move(next);
      }
    }
    std::vector<double> last_values(static_cast<std::size_t>(h.n_envs));
    for (int e = 0; e < h.n_envs; ++e) last_values[e] = agent.value(obs[e]);
    rollout.compute_advantages(last_values, h.gamma, h.gae_lambda);
    out.last_losses = agent.update(rollout);
    out.timesteps = t;
  }
}

}  // namespace

EnvConfig env_for(const AgentSpec& spec, EnvConfig env) {
  if (spec.her) env.goal_conditioned = true;
  return env;
}

TrainResult train(const AgentSpec& spec, const ArmModel& model, const EnvConfig& env_config,
                  long long total_timesteps, std::uint64_t seed, const EpisodeCallback& on_episode) {
  spec.validate();
  if (total_timesteps < 0) throw UsageError("total_timesteps must be >= 0");
  EnvConfig cfg = env_for(spec, env_config);
  cfg.seed = derive_seed(seed, kEnvStream);
  cfg.validate(model);

  TrainResult out;
  out.agent = make_agent(spec, cfg.obs_dim(), derive_seed(seed, kAgentStream));
  if (total_timesteps == 0) return out;

  const auto start = Clock::now();
  try {
    switch (spec.algo) {
      case Algo::Random: {
        ReachEnv env(model, cfg);
        train_random(static_cast<RandomAgent&>(*out.agent), env, total_timesteps, out, on_episode);
        break;
      }
      case Algo::TD3:
      case Algo::DDPG: {
        ReachEnv env(model, cfg);
        train_off_policy(static_cast<DeterministicAgent&>(*out.agent), env, total_timesteps, seed,
                         out, on_episode);
        break;
      }
      case Algo::SAC: {
        ReachEnv env(model, cfg);
        train_off_policy(static_cast<SacAgent&>(*out.agent), env, total_timesteps, seed, out,
                         on_episode);
        break;
      }
      case Algo::A2C:
      case Algo::PPO:
        train_on_policy(static_cast<GaussianAgent&>(*out.agent), model, cfg, total_timesteps, seed,
                        out, on_episode);
        break;
    }
  } catch (const TrainingError& e) {
    out.failure = e.what();
  }
  out.walltime_s = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

}  // namespace reach

#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "reach/agents.hpp"
#include "reach/errors.hpp"
#include "reach/train.hpp"

using namespace reach;

namespace {

AgentSpec small(Algo algo) {
  AgentSpec s;
  s.algo = algo;
  s.hyper = HyperParams::defaults(algo);
  s.hyper.hidden_width = 16;
  s.hyper.batch = 32;
  s.hyper.learning_starts = 100;
  s.hyper.n_steps = 32;
  s.hyper.n_envs = 2;
  s.hyper.n_epochs = 2;
  return s;
}

std::vector<double> obs_of(std::uint64_t seed, int dim) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<double> o(dim);
  for (double& x : o) x = u(rng);
  return o;
}

TransitionBatch random_batch(int n, int obs_dim, std::uint64_t seed, double done_prob = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5), c(0.0, 1.0);
  TransitionBatch b;
  b.obs = Matrix(obs_dim, n);
  b.next_obs = Matrix(obs_dim, n);
  b.action = Matrix(kActionDim, n);
  b.reward = Eigen::RowVectorXd(n);
  b.done = Eigen::RowVectorXd(n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < obs_dim; ++i) {
      b.obs(i, j) = u(rng);
      b.next_obs(i, j) = u(rng);
    }
    for (int i = 0; i < kActionDim; ++i) b.action(i, j) = 2 * u(rng);
    b.reward[j] = -c(rng) * 0.2;
    b.done[j] = c(rng) < done_prob ? 1.0 : 0.0;
  }
  return b;
}

void constant_output(Mlp& net, double value) {
  auto p = net.params();
  std::fill(p.begin(), p.end(), 0.0);
  p[p.size() - 1] = value;
}

}  // namespace

TEST_CASE("algorithm names and families") {
  for (Algo a : {Algo::A2C, Algo::PPO, Algo::DDPG, Algo::TD3, Algo::SAC, Algo::Random}) {
    CHECK(parse_algo(to_string(a)) == a);
  }
  CHECK(is_off_policy(Algo::SAC));
  CHECK(is_on_policy(Algo::PPO));
  CHECK_FALSE(is_off_policy(Algo::Random));
  CHECK_THROWS_AS(parse_algo("DQN"), ConfigError);
  const AgentSpec s = AgentSpec::from_label("TD3+HER");
  CHECK(s.algo == Algo::TD3);
  REQUIRE(s.her.has_value());
  CHECK(s.label() == "TD3+HER");
  CHECK_THROWS_AS(AgentSpec::from_label("PPO+HER"), ConfigError);
  CHECK_THROWS_AS(AgentSpec::from_label("Random+HER"), ConfigError);
  CHECK_THROWS_AS(AgentSpec::from_label("SAC+PER"), ConfigError);
}

TEST_CASE("hyperparameter validation") {
  AgentSpec s = AgentSpec::from_label("SAC");
  s.hyper.gamma = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = AgentSpec::from_label("SAC");
  s.hyper.tau = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = AgentSpec::from_label("PPO");
  s.hyper.gae_lambda = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  HyperParams h;
  CHECK_THROWS_AS(h.set("learning_rate", "0.1"), ConfigError);
  CHECK_THROWS_AS(h.set("batch", "many"), ConfigError);
  h.set("batch", "128");
  CHECK(h.batch == 128);
}

TEST_CASE("defaults follow the reference implementations") {
  const HyperParams ppo = HyperParams::defaults(Algo::PPO), a2c = HyperParams::defaults(Algo::A2C);
  CHECK(ppo.n_steps == 2048);
  CHECK(a2c.n_steps == 8);
  CHECK(a2c.entropy_coef == 0.01);
  CHECK(ppo.entropy_coef == 0.0);
  const HyperParams td3 = HyperParams::defaults(Algo::TD3);
  CHECK(td3.gamma == 0.98);
  CHECK(td3.batch == 256);
  CHECK(td3.td3_policy_delay == 2);
}

TEST_CASE("derive_seed separates streams deterministically") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

TEST_CASE("random agent is uniform on the action box") {
  RandomAgent agent(AgentSpec::from_label("Random"), kPlainObsDim, 3);
  const auto o = obs_of(1, kPlainObsDim);
  double sum = 0.0, lo = 1.0, hi = -1.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    for (double a : agent.act(o, ActMode::Explore)) {
      sum += a;
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
  }
  CHECK(std::abs(sum / (n * kActionDim)) < 0.01);
  CHECK(lo >= -1.0);
  CHECK(hi <= 1.0);
  CHECK(hi - lo > 1.99);
}

TEST_CASE("observation width is checked") {
  for (Algo a : {Algo::TD3, Algo::SAC, Algo::PPO, Algo::Random}) {
    auto agent = make_agent(small(a), kPlainObsDim, 1);
    CHECK_THROWS_AS(agent->act(obs_of(1, kGoalObsDim), ActMode::Exploit), UsageError);
  }
}

TEST_CASE("exploit actions are deterministic, explore actions stay in range") {
  for (Algo a : {Algo::DDPG, Algo::TD3, Algo::SAC, Algo::A2C, Algo::PPO}) {
    CAPTURE(to_string(a));
    auto agent = make_agent(small(a), kGoalObsDim, 5);
    const auto o = obs_of(2, kGoalObsDim);
    CHECK(agent->act(o, ActMode::Exploit) == agent->act(o, ActMode::Exploit));
    bool differs = false;
    const Action base = agent->act(o, ActMode::Explore);
    for (int i = 0; i < 50; ++i) {
      const Action x = agent->act(o, ActMode::Explore);
      for (double v : x) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
      differs = differs || x != base;
    }
    CHECK(differs);
  }
}

TEST_CASE("critic targets") {
  SUBCASE("gamma 0 leaves the scaled reward") {
    for (Algo a : {Algo::DDPG, Algo::TD3, Algo::SAC}) {
      AgentSpec s = small(a);
      s.hyper.gamma = 0.0;
      const TransitionBatch b = random_batch(16, kPlainObsDim, 4);
      Eigen::RowVectorXd y;
      if (a == Algo::SAC) {
        SacAgent agent(s, kPlainObsDim, 1);
        y = agent.td_targets(b);
      } else {
        DeterministicAgent agent(s, kPlainObsDim, 1);
        y = agent.td_targets(b);
      }
      for (int j = 0; j < 16; ++j) CHECK(y[j] == s.hyper.reward_scale * b.reward[j]);
    }
  }
  SUBCASE("terminal transitions do not bootstrap") {
    AgentSpec s = small(Algo::TD3);
    DeterministicAgent agent(s, kPlainObsDim, 1);
    constant_output(agent.mutable_critic_target(0), 7.0);
    constant_output(agent.mutable_critic_target(1), 7.0);
    const TransitionBatch b = random_batch(64, kPlainObsDim, 5, 0.5);
    const auto y = agent.td_targets(b);
    for (int j = 0; j < 64; ++j) {
      const double expect = s.hyper.reward_scale * b.reward[j] + (b.done[j] > 0 ? 0.0 : s.hyper.gamma * 7.0);
      CHECK(y[j] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
  SUBCASE("twin minimum") {
    AgentSpec s = small(Algo::TD3);
    s.hyper.gamma = 0.9;
    s.hyper.reward_scale = 1.0;
    DeterministicAgent agent(s, kPlainObsDim, 1);
    constant_output(agent.mutable_critic_target(0), 2.0);
    constant_output(agent.mutable_critic_target(1), 5.0);
    TransitionBatch b = random_batch(4, kPlainObsDim, 6);
    b.reward.setOnes();
    b.done.setZero();
    const auto y = agent.td_targets(b);
    for (int j = 0; j < 4; ++j) CHECK(y[j] == doctest::Approx(2.8).epsilon(1e-15));
  }
}

TEST_CASE("critic fits a fixed batch") {
  for (Algo a : {Algo::TD3, Algo::SAC}) {
    CAPTURE(to_string(a));
    AgentSpec s = small(a);
    s.hyper.lr_critic = 1e-3;
    s.hyper.gamma = 0.5;
    const TransitionBatch b = random_batch(32, kPlainObsDim, 7);
    double before = 0.0, after = 0.0;
    if (a == Algo::SAC) {
      SacAgent agent(s, kPlainObsDim, 2);
      before = agent.critic_loss(b);
      for (int i = 0; i < 300; ++i) agent.update_on_batch(b);
      after = agent.critic_loss(b);
      CHECK(agent.alpha() > 0.0);
    } else {
      DeterministicAgent agent(s, kPlainObsDim, 2);
      before = agent.critic_loss(b);
      for (int i = 0; i < 300; ++i) agent.update_on_batch(b);
      after = agent.critic_loss(b);
    }
    CHECK(after <= 0.5 * before);
  }
}

TEST_CASE("SAC temperature stays positive and tracks the entropy target") {
  AgentSpec s = small(Algo::SAC);
  SacAgent agent(s, kPlainObsDim, 3);
  CHECK(agent.target_entropy() == -6.0);
  const TransitionBatch b = random_batch(32, kPlainObsDim, 8);
  for (int i = 0; i < 200; ++i) {
    const auto d = agent.update_on_batch(b);
    CHECK(d.alpha > 0.0);
    CHECK(std::isfinite(d.critic_loss));
    CHECK(std::isfinite(d.actor_loss));
  }
}

TEST_CASE("generalized advantage estimation") {
  const std::vector<double> r{1.0, -0.5, 0.25, 2.0};
  const std::vector<double> v{0.3, 0.1, -0.2, 0.5};
  const std::vector<double> nv{0.1, -0.2, 0.5, 0.7};
  const std::vector<unsigned char> none(4, 0);
  const double g = 0.9;
  SUBCASE("lambda 0 is the one-step TD error") {
    const auto adv = gae(r, v, nv, none, g, 0.0);
    for (int t = 0; t < 4; ++t) CHECK(adv[t] == doctest::Approx(r[t] + g * nv[t] - v[t]).epsilon(1e-15));
  }
  SUBCASE("lambda 1 is the discounted return minus the value") {
    const auto adv = gae(r, v, nv, none, g, 1.0);
    for (int t = 0; t < 4; ++t) {
      double ret = 0.0, disc = 1.0;
      for (int k = t; k < 4; ++k, disc *= g) ret += disc * r[k];
      ret += disc / g * g * nv[3];
      CHECK(adv[t] == doctest::Approx(ret - v[t]).epsilon(1e-12));
    }
  }
  SUBCASE("a boundary cuts the trace") {
    std::vector<unsigned char> cut{0, 1, 0, 0};
    const auto a = gae(r, v, nv, cut, g, 0.95);
    const auto tail = gae(std::span(r).subspan(2), std::span(v).subspan(2), std::span(nv).subspan(2),
                          std::span(none).subspan(2), g, 0.95);
    CHECK(a[2] == tail[0]);
    CHECK(a[1] == doctest::Approx(r[1] + g * nv[1] - v[1]).epsilon(1e-15));
  }
}

TEST_CASE("rollout buffer advantages") {
  RolloutBuffer buf(4, 2, kPlainObsDim);
  const auto o = obs_of(3, kPlainObsDim);
  for (int t = 0; t < 4; ++t)
    for (int e = 0; e < 2; ++e) buf.add(t, e, o, Action{}, 0.0, 0.0, 0.0, false, false, 0.0);
  buf.compute_advantages(std::vector<double>{0.0, 0.0}, 0.99, 0.95);
  for (Eigen::Index i = 0; i < buf.advantages.size(); ++i) CHECK(buf.advantages[i] == 0.0);

  RolloutBuffer term(2, 1, kPlainObsDim);
  term.add(0, 0, o, Action{}, 1.0, 0.5, 0.0, true, false, 0.0);
  term.add(1, 0, o, Action{}, 2.0, 0.25, 0.0, false, true, 4.0);
  term.compute_advantages(std::vector<double>{100.0}, 0.9, 0.0);
  CHECK(term.advantages[0] == doctest::Approx(1.0 - 0.5));
  CHECK(term.advantages[1] == doctest::Approx(2.0 + 0.9 * 4.0 - 0.25));
  CHECK(term.returns[1] == doctest::Approx(term.advantages[1] + 0.25));
}

TEST_CASE("PPO clipped surrogate") {
  const auto one = ppo_surrogate(1.0, 0.7, 0.2);
  CHECK(one.unclipped == 0.7);
  CHECK(one.clipped == 0.7);
  const auto high = ppo_surrogate(1.5, 2.0, 0.2);
  CHECK(high.unclipped == 3.0);
  CHECK(high.clipped == doctest::Approx(2.4));
  const auto low = ppo_surrogate(0.5, -1.0, 0.2);
  CHECK(low.unclipped == -0.5);
  CHECK(low.clipped == doctest::Approx(-0.8));
}

TEST_CASE("training loop") {
  const ArmModel model = ArmModel::default_model();
  SUBCASE("zero timesteps") {
    const auto res = train(small(Algo::TD3), model, EnvConfig::env1(), 0, 1);
    CHECK(res.curve.empty());
    CHECK(res.timesteps == 0);
    CHECK(res.agent != nullptr);
    CHECK_THROWS_AS(train(small(Algo::TD3), model, EnvConfig::env1(), -1, 1), UsageError);
  }
  SUBCASE("HER on an on-policy agent") {
    AgentSpec s = small(Algo::PPO);
    s.her = HerConfig{};
    CHECK_THROWS_AS(train(s, model, EnvConfig::env2(), 100, 1), ConfigError);
  }
  SUBCASE("random policy returns on the fixed goal") {
    const auto res = train(AgentSpec::from_label("Random"), model, EnvConfig::env1(), 10000, 1);
    REQUIRE(res.curve.size() == 100);
    double sum = 0.0;
    for (const auto& p : res.curve) sum += p.episode_return;
    const double mean = sum / 100.0;
    CHECK(mean >= -4.5);
    CHECK(mean <= -1.5);
    CHECK(res.curve.back().timestep == 10000);
  }
  SUBCASE("the episode callback can stop training") {
    int seen = 0;
    const auto res = train(AgentSpec::from_label("Random"), model, EnvConfig::env1(), 10000, 1,
                           [&](const CurvePoint&) { return ++seen < 3; });
    CHECK(res.curve.size() == 3);
    CHECK(res.stopped_early);
  }
}

TEST_CASE("training is a deterministic function of the seed") {
  const ArmModel model = ArmModel::default_model();
  for (const char* label : {"TD3", "SAC+HER", "PPO", "A2C", "DDPG"}) {
    const std::string name = label;
    CAPTURE(name);
    AgentSpec s = AgentSpec::from_label(label);
    const AgentSpec sm = small(s.algo);
    s.hyper = sm.hyper;
    const EnvConfig env = std::string(label).find("HER") != std::string::npos ? EnvConfig::env2() : EnvConfig::env1();
    const auto a = train(s, model, env, 600, 11);
    const auto b = train(s, model, env, 600, 11);
    const auto c = train(s, model, env, 600, 12);
    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      CHECK(a.curve[i].timestep == b.curve[i].timestep);
      CHECK(a.curve[i].episode_return == b.curve[i].episode_return);
    }
    const auto o = obs_of(4, a.agent->obs_dim());
    CHECK(a.agent->act(o, ActMode::Exploit) == b.agent->act(o, ActMode::Exploit));
    CHECK(a.agent->act(o, ActMode::Exploit) != c.agent->act(o, ActMode::Exploit));
  }
}

TEST_CASE("agents save and reload") {
  const auto dir = std::filesystem::temp_directory_path() / "reach_agent_ckpt";
  for (Algo a : {Algo::TD3, Algo::SAC, Algo::PPO}) {
    CAPTURE(to_string(a));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto src = make_agent(small(a), kPlainObsDim, 1);
    auto dst = make_agent(small(a), kPlainObsDim, 2);
    const auto files = src->save(dir);
    CHECK_FALSE(files.empty());
    for (const auto& f : files) CHECK(std::filesystem::exists(dir / f));
    dst->load(dir);
    const auto o = obs_of(9, kPlainObsDim);
    CHECK(src->act(o, ActMode::Exploit) == dst->act(o, ActMode::Exploit));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("observation normalizer") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(3, 4000);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    x(0, c) = 0.2 + 0.05 * n(rng);
    x(1, c) = -3.0 + 2.0 * n(rng);
    x(2, c) = 0.7;  // constant feature: std floored, no division by zero
  }
  ObsNormalizer norm(3, true);
  CHECK(norm.apply(x) == x.cwiseMax(-5.0).cwiseMin(5.0));  // no data yet: identity up to clipping
  norm.update(x.leftCols(1000));
  norm.update(x.rightCols(3000));
  CHECK(norm.mean()[0] == doctest::Approx(0.2).epsilon(0.01));
  CHECK(norm.stddev()[0] == doctest::Approx(0.05).epsilon(0.05));
  CHECK(norm.stddev()[1] == doctest::Approx(2.0).epsilon(0.05));
  CHECK(norm.stddev()[2] == 0.01);
  const Matrix z = norm.apply(x);
  CHECK(z.row(0).mean() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(z.row(2).cwiseAbs().maxCoeff() < 1e-9);
  Matrix far(3, 1);
  far << 10.0, 100.0, 0.7;
  CHECK(norm.apply(far)(0, 0) == 5.0);
  CHECK(norm.apply(far)(1, 0) == 5.0);

  ObsNormalizer off(3, false);
  off.update(x);
  CHECK(off.apply(x) == x);

  const auto path = std::filesystem::temp_directory_path() / "reach_obs_norm.bin";
  norm.save(path);
  ObsNormalizer back(3, true);
  back.load(path);
  CHECK(back.apply(x) == z);
  ObsNormalizer wrong(4, true);
  CHECK_THROWS_AS(wrong.load(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("normalized agents train deterministically and reload their statistics") {
  const ArmModel model = ArmModel::default_model();
  const auto dir = std::filesystem::temp_directory_path() / "reach_agent_norm_ckpt";
  for (const char* label : {"TD3+HER", "SAC+HER"}) {
    CAPTURE(std::string(label));
    AgentSpec s = AgentSpec::from_label(label);
    s.hyper = small(s.algo).hyper;
    s.hyper.obs_norm = 1;
    const auto a = train(s, model, EnvConfig::env2(), 600, 5);
    const auto b = train(s, model, EnvConfig::env2(), 600, 5);
    const auto o = obs_of(4, a.agent->obs_dim());
    CHECK(a.agent->act(o, ActMode::Exploit) == b.agent->act(o, ActMode::Exploit));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto files = a.agent->save(dir);
    CHECK(std::find(files.begin(), files.end(), "obs_norm.bin") != files.end());
    auto fresh = make_agent(s, a.agent->obs_dim(), 99);
    fresh->load(dir);
    CHECK(fresh->act(o, ActMode::Exploit) == a.agent->act(o, ActMode::Exploit));
  }
  std::filesystem::remove_all(dir);
}

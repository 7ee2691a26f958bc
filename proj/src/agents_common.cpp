#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "reach/agents.hpp"
#include "reach/config.hpp"
#include "reach/errors.hpp"

namespace reach {

const char* to_string(Algo a) {
  switch (a) {
    case Algo::A2C:
      return "A2C";
    case Algo::PPO:
      return "PPO";
    case Algo::DDPG:
      return "DDPG";
    case Algo::TD3:
      return "TD3";
    case Algo::SAC:
      return "SAC";
    case Algo::Random:
      return "Random";
  }
  return "?";
}

Algo parse_algo(const std::string& s) {
  for (Algo a : {Algo::A2C, Algo::PPO, Algo::DDPG, Algo::TD3, Algo::SAC, Algo::Random}) {
    if (s == to_string(a)) return a;
  }
  throw ConfigError("unknown algorithm '" + s + "'");
}

bool is_off_policy(Algo a) { return a == Algo::DDPG || a == Algo::TD3 || a == Algo::SAC; }
bool is_on_policy(Algo a) { return a == Algo::A2C || a == Algo::PPO; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix to_matrix(std::span<const double> obs) {
  Matrix m(static_cast<Eigen::Index>(obs.size()), 1);
  std::copy(obs.begin(), obs.end(), m.data());
  return m;
}

// ---------------------------------------------------------------------------
// Hyperparameters

namespace {

struct Field {
  std::function<void(HyperParams&, const std::string&)> set;
  std::function<std::string(const HyperParams&)> get;
};

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("hyperparameter '" + key + "': expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw ConfigError("hyperparameter '" + key + "': expected an integer");
  return static_cast<long long>(d);
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

#define REACH_DOUBLE(name)                                                                  \
  {#name, Field{[](HyperParams& h, const std::string& v) { h.name = to_double(#name, v); }, \
                [](const HyperParams& h) { return fmt_double(h.name); }}}
#define REACH_INT(name)                                                                    \
  {#name, Field{[](HyperParams& h, const std::string& v) {                                 \
                  h.name = static_cast<decltype(h.name)>(to_int(#name, v));               \
                },                                                                         \
                [](const HyperParams& h) { return std::to_string(h.name); }}}

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = {
      REACH_DOUBLE(lr_actor),
      REACH_DOUBLE(lr_critic),
      REACH_DOUBLE(gamma),
      REACH_DOUBLE(tau),
      REACH_INT(batch),
      REACH_INT(buffer_capacity),
      REACH_INT(train_freq),
      REACH_INT(gradient_steps),
      REACH_INT(learning_starts),
      REACH_DOUBLE(reward_scale),
      REACH_DOUBLE(exploration_noise_std),
      REACH_DOUBLE(action_l2),
      REACH_DOUBLE(td3_policy_noise),
      REACH_DOUBLE(td3_noise_clip),
      REACH_INT(td3_policy_delay),
      {"sac_alpha", Field{[](HyperParams& h, const std::string& v) {
                            // "auto", "auto_0.1" (auto with initial value) or a fixed weight.
                            if (v.rfind("auto", 0) == 0) {
                              h.sac_alpha_auto = true;
                              h.sac_alpha = v.size() > 5 ? to_double("sac_alpha", v.substr(5)) : 1.0;
                            } else {
                              h.sac_alpha_auto = false;
                              h.sac_alpha = to_double("sac_alpha", v);
                            }
                          },
                          [](const HyperParams& h) {
                            return h.sac_alpha_auto ? "auto_" + fmt_double(h.sac_alpha)
                                                    : fmt_double(h.sac_alpha);
                          }}},
      REACH_INT(n_steps),
      REACH_DOUBLE(gae_lambda),
      REACH_DOUBLE(clip_range),
      REACH_DOUBLE(entropy_coef),
      REACH_DOUBLE(value_coef),
      REACH_INT(n_envs),
      REACH_INT(n_epochs),
      REACH_DOUBLE(max_grad_norm),
      REACH_INT(hidden_width),
      REACH_INT(hidden_layers),
      REACH_INT(obs_norm),
  };
  return table;
}

#undef REACH_DOUBLE
#undef REACH_INT

}  // namespace

HyperParams HyperParams::defaults(Algo algo) {
  HyperParams h;
  if (algo == Algo::PPO) {
    h.n_steps = 2048;
    h.entropy_coef = 0.0;
    h.batch = 256;
  } else if (algo == Algo::A2C) {
    h.n_steps = 8;
    h.entropy_coef = 0.01;
  }
  h.n_envs = is_on_policy(algo) ? 8 : 1;
  if (is_off_policy(algo)) h.reward_scale = 100.0;
  return h;
}

void HyperParams::set(const std::string& key, const std::string& value) {
  for (const auto& [name, field] : field_table()) {
    if (name == key) {
      field.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown hyperparameter '" + key + "'");
}

void HyperParams::apply(const Config& cfg, const std::string& section) {
  for (const auto& [name, field] : field_table()) {
    const std::string key = section + "." + name;
    if (cfg.has(key)) field.set(*this, cfg.get_string(key, ""));
  }
}

std::vector<std::pair<std::string, std::string>> HyperParams::fields() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, field] : field_table()) out.emplace_back(name, field.get(*this));
  return out;
}

std::string AgentSpec::label() const {
  std::string s = to_string(algo);
  if (her) s += "+HER";
  return s;
}

AgentSpec AgentSpec::from_label(const std::string& label) {
  AgentSpec spec;
  std::string base = label;
  const auto plus = label.find('+');
  if (plus != std::string::npos) {
    if (label.substr(plus + 1) != "HER") throw ConfigError("unknown agent label '" + label + "'");
    base = label.substr(0, plus);
    spec.her = HerConfig{};
  }
  spec.algo = parse_algo(base);
  spec.hyper = HyperParams::defaults(spec.algo);
  spec.validate();
  return spec;
}

void AgentSpec::validate() const {
  if (her && !is_off_policy(algo)) {
    throw ConfigError(std::string("HER can only be attached to off-policy agents, not ") +
                      to_string(algo));
  }
  if (her && her->k < 0) throw ConfigError("HER k must be >= 0");
  const HyperParams& h = hyper;
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid hyperparameter: ") + what);
  };
  require(h.lr_actor > 0 && h.lr_critic > 0, "learning rates must be positive");
  require(h.gamma > 0 && h.gamma < 1, "gamma must lie in (0, 1)");
  require(h.tau > 0 && h.tau <= 1, "tau must lie in (0, 1]");
  require(h.batch > 0, "batch must be positive");
  require(h.buffer_capacity > 0, "buffer_capacity must be positive");
  require(h.train_freq > 0 && h.gradient_steps > 0, "train_freq and gradient_steps must be positive");
  require(h.learning_starts >= 0, "learning_starts must be >= 0");
  require(h.reward_scale > 0, "reward_scale must be positive");
  require(h.action_l2 >= 0, "action_l2 must be >= 0");
  require(h.exploration_noise_std >= 0, "exploration_noise_std must be >= 0");
  require(h.td3_policy_noise >= 0 && h.td3_noise_clip >= 0, "TD3 smoothing noise must be >= 0");
  require(h.td3_policy_delay > 0, "td3_policy_delay must be positive");
  require(h.sac_alpha > 0 || (!h.sac_alpha_auto && h.sac_alpha == 0), "sac_alpha must be positive");
  require(h.n_steps > 0 && h.n_envs > 0 && h.n_epochs > 0, "rollout sizes must be positive");
  require(h.gae_lambda >= 0 && h.gae_lambda <= 1, "gae_lambda must lie in [0, 1]");
  require(h.clip_range > 0, "clip_range must be positive");
  require(h.entropy_coef >= 0 && h.value_coef >= 0, "loss coefficients must be >= 0");
  require(h.hidden_width > 0 && h.hidden_layers > 0, "network size must be positive");
  require(h.obs_norm == 0 || h.obs_norm == 1, "obs_norm must be 0 or 1");
}

// ---------------------------------------------------------------------------

void Agent::check_obs(std::span<const double> obs) const {
  if (static_cast<int>(obs.size()) != obs_dim_) {
    throw UsageError(spec_.label() + ": expected observation of width " + std::to_string(obs_dim_) +
                     ", got " + std::to_string(obs.size()));
  }
}

RandomAgent::RandomAgent(AgentSpec spec, int obs_dim, std::uint64_t seed)
    : Agent(std::move(spec), obs_dim), rng_(seed) {}

Action RandomAgent::act(std::span<const double> obs, ActMode) {
  check_obs(obs);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Action a;
  for (double& x : a) x = u(rng_);
  return a;
}

std::unique_ptr<Agent> make_agent(const AgentSpec& spec, int obs_dim, std::uint64_t seed) {
  spec.validate();
  switch (spec.algo) {
    case Algo::Random:
      return std::make_unique<RandomAgent>(spec, obs_dim, seed);
    case Algo::TD3:
    case Algo::DDPG:
      return std::make_unique<DeterministicAgent>(spec, obs_dim, seed);
    case Algo::SAC:
      return std::make_unique<SacAgent>(spec, obs_dim, seed);
    case Algo::A2C:
    case Algo::PPO:
      return std::make_unique<GaussianAgent>(spec, obs_dim, seed);
  }
  throw UsageError("make_agent: unknown algorithm");
}

// ---------------------------------------------------------------------------
// Rollouts and advantage estimation

RolloutBuffer::RolloutBuffer(int n_steps, int n_envs, int obs_dim)
    : n_steps_(n_steps), n_envs_(n_envs), obs_dim_(obs_dim) {
  const auto n = static_cast<Eigen::Index>(size());
  obs.setZero(obs_dim, n);
  actions.setZero(kActionDim, n);
  rewards.setZero(n);
  values.setZero(n);
  log_probs.setZero(n);
  advantages.setZero(n);
  returns.setZero(n);
  truncation_values.setZero(n);
  terminated.assign(size(), 0);
  truncated.assign(size(), 0);
}

void RolloutBuffer::add(int step, int env, std::span<const double> o, const Action& action,
                        double reward, double value, double log_prob, bool term, bool trunc,
                        double truncation_value) {
  if (step < 0 || step >= n_steps_ || env < 0 || env >= n_envs_) {
    throw UsageError("RolloutBuffer::add: slot out of range");
  }
  if (static_cast<int>(o.size()) != obs_dim_) throw UsageError("RolloutBuffer::add: obs width mismatch");
  const auto i = static_cast<Eigen::Index>(index(step, env));
  std::copy(o.begin(), o.end(), obs.col(i).data());
  std::copy(action.begin(), action.end(), actions.col(i).data());
  rewards[i] = reward;
  values[i] = value;
  log_probs[i] = log_prob;
  terminated[i] = term ? 1 : 0;
  truncated[i] = trunc ? 1 : 0;
  truncation_values[i] = truncation_value;
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        std::span<const double> next_values, std::span<const unsigned char> boundary,
                        double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || boundary.size() != n) {
    throw UsageError("gae: sequence length mismatch");
  }
  std::vector<double> adv(n, 0.0);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double delta = rewards[t] + gamma * next_values[t] - values[t];
    const double carry = boundary[t] ? 0.0 : running;
    running = delta + gamma * lambda * carry;
    if (!std::isfinite(running)) throw TrainingError("non-finite advantage");
    adv[t] = running;
  }
  return adv;
}

void RolloutBuffer::compute_advantages(std::span<const double> last_values, double gamma,
                                       double lambda) {
  if (static_cast<int>(last_values.size()) != n_envs_) {
    throw UsageError("compute_advantages: need one bootstrap value per environment");
  }
  std::vector<double> r(n_steps_), v(n_steps_), nv(n_steps_);
  std::vector<unsigned char> cut(n_steps_);
  for (int e = 0; e < n_envs_; ++e) {
    for (int t = 0; t < n_steps_; ++t) {
      const auto i = static_cast<Eigen::Index>(index(t, e));
      r[t] = rewards[i];
      v[t] = values[i];
      cut[t] = terminated[i] || truncated[i];
      if (terminated[i]) {
        nv[t] = 0.0;
      } else if (truncated[i]) {
        nv[t] = truncation_values[i];
      } else if (t + 1 < n_steps_) {
        nv[t] = values[static_cast<Eigen::Index>(index(t + 1, e))];
      } else {
        nv[t] = last_values[e];
      }
    }
    const auto adv = gae(r, v, nv, cut, gamma, lambda);
    for (int t = 0; t < n_steps_; ++t) {
      const auto i = static_cast<Eigen::Index>(index(t, e));
      advantages[i] = adv[t];
      returns[i] = adv[t] + values[i];
    }
  }
}

SurrogatePair ppo_surrogate(double ratio, double advantage, double clip_range) {
  const double clipped_ratio = std::clamp(ratio, 1.0 - clip_range, 1.0 + clip_range);
  return {ratio * advantage, std::min(ratio * advantage, clipped_ratio * advantage)};
}

}  // namespace reach

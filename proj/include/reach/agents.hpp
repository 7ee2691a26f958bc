#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reach/env.hpp"
#include "reach/net.hpp"
#include "reach/replay.hpp"

namespace reach {

class Config;

enum class Algo { A2C, PPO, DDPG, TD3, SAC, Random };
enum class ActMode { Explore, Exploit };

const char* to_string(Algo a);
Algo parse_algo(const std::string& s);
bool is_off_policy(Algo a);
bool is_on_policy(Algo a);

struct HyperParams {
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double gamma = 0.98;
  double tau = 0.005;
  int batch = 256;
  std::size_t buffer_capacity = 1'000'000;
  int train_freq = 1;
  int gradient_steps = 1;
  int learning_starts = 1000;
  double reward_scale = 1.0;  // off-policy critics regress on scaled rewards
  double exploration_noise_std = 0.1;
  double action_l2 = 0.0;  // deterministic actors: penalty on mean squared action
  double td3_policy_noise = 0.2;
  double td3_noise_clip = 0.5;
  int td3_policy_delay = 2;
  bool sac_alpha_auto = true;
  double sac_alpha = 1.0;  // initial value when auto, fixed weight otherwise
  int n_steps = 2048;      // per environment, on-policy rollouts
  double gae_lambda = 0.95;
  double clip_range = 0.2;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  int n_envs = 8;
  int n_epochs = 10;
  double max_grad_norm = 0.5;
  int hidden_width = 64;
  int hidden_layers = 2;
  int obs_norm = 0;  // off-policy agents: 1 standardizes inputs with running statistics

  static HyperParams defaults(Algo algo);

  /// Sets one field by name from its text form. Throws ConfigError on an
  /// unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  /// Reads every known key present in `section` of the config.
  void apply(const Config& cfg, const std::string& section);
  /// key=value pairs for manifests, in declaration order.
  std::vector<std::pair<std::string, std::string>> fields() const;
};

struct AgentSpec {
  Algo algo = Algo::TD3;
  HyperParams hyper;
  std::optional<HerConfig> her;

  /// "TD3", "SAC+HER", ...
  std::string label() const;
  /// Parses a roster label and fills in the algorithm defaults.
  static AgentSpec from_label(const std::string& label);
  /// Throws ConfigError when HER is attached to an on-policy or random agent,
  /// or a hyperparameter is out of range.
  void validate() const;
};

/// Loss and schedule diagnostics of one update call.
struct LossDiagnostics {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
  double policy_gradient_norm = 0.0;
  double clip_fraction = 0.0;
  int updates = 0;
};

class Agent {
 public:
  Agent(AgentSpec spec, int obs_dim) : spec_(std::move(spec)), obs_dim_(obs_dim) {}
  virtual ~Agent() = default;

  Algo algo() const { return spec_.algo; }
  const AgentSpec& spec() const { return spec_; }
  int obs_dim() const { return obs_dim_; }

  /// Action in [-1, 1]^6. Throws UsageError on an observation width mismatch.
  virtual Action act(std::span<const double> obs, ActMode mode) = 0;

  /// Writes network checkpoints (and small extra state) into `dir`; returns
  /// the written file names.
  virtual std::vector<std::string> save(const std::filesystem::path& dir) const = 0;
  virtual void load(const std::filesystem::path& dir) = 0;

 protected:
  void check_obs(std::span<const double> obs) const;

  AgentSpec spec_;
  int obs_dim_;
};

class RandomAgent final : public Agent {
 public:
  RandomAgent(AgentSpec spec, int obs_dim, std::uint64_t seed);
  Action act(std::span<const double> obs, ActMode mode) override;
  std::vector<std::string> save(const std::filesystem::path&) const override { return {}; }
  void load(const std::filesystem::path&) override {}

 private:
  Rng rng_;
};

/// Running per-feature mean and standard deviation of observations. Inputs
/// are standardized and clipped to +/-5; a disabled normalizer passes them
/// through unchanged.
class ObsNormalizer {
 public:
  ObsNormalizer() = default;
  ObsNormalizer(int dim, bool enabled);

  bool enabled() const { return enabled_; }
  /// Adds every column of `obs` to the statistics.
  void update(const Matrix& obs);
  Matrix apply(const Matrix& obs) const;
  Eigen::VectorXd mean() const;
  Eigen::VectorXd stddev() const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  bool enabled_ = false;
  Eigen::VectorXd sum_, sumsq_;
  double count_ = 0.0;
};

/// TD3 (twin critics, target smoothing, delayed actor) and DDPG (single
/// critic) share the deterministic actor-critic machinery.
class DeterministicAgent final : public Agent {
 public:
  DeterministicAgent(AgentSpec spec, int obs_dim, std::uint64_t seed);

  Action act(std::span<const double> obs, ActMode mode) override;
  LossDiagnostics update(const ReplayBuffer& buffer);
  std::vector<std::string> save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir) override;

  /// Critic regression loss on a fixed batch (no update).
  double critic_loss(const TransitionBatch& batch);
  LossDiagnostics update_on_batch(const TransitionBatch& batch);

  const Mlp& actor() const { return actor_; }
  const Mlp& actor_target() const { return actor_target_; }
  const Mlp& critic(int i) const { return i == 0 ? q1_ : q2_; }
  const Mlp& critic_target(int i) const { return i == 0 ? q1_target_ : q2_target_; }
  Mlp& mutable_critic(int i) { return i == 0 ? q1_ : q2_; }
  Mlp& mutable_critic_target(int i) { return i == 0 ? q1_target_ : q2_target_; }

  /// Bootstrapped regression targets for a batch.
  Eigen::RowVectorXd td_targets(const TransitionBatch& batch);

 private:
  bool twin() const { return spec_.algo == Algo::TD3; }
  Eigen::RowVectorXd targets(const TransitionBatch& normalized);

  Rng rng_;
  ObsNormalizer norm_;
  Mlp actor_, actor_target_, q1_, q2_, q1_target_, q2_target_;
  AdamState actor_opt_, q1_opt_, q2_opt_;
  long long n_updates_ = 0;
};

/// Soft actor-critic with a tanh-squashed Gaussian policy and twin critics.
class SacAgent final : public Agent {
 public:
  SacAgent(AgentSpec spec, int obs_dim, std::uint64_t seed);

  Action act(std::span<const double> obs, ActMode mode) override;
  LossDiagnostics update(const ReplayBuffer& buffer);
  LossDiagnostics update_on_batch(const TransitionBatch& batch);
  double critic_loss(const TransitionBatch& batch);
  std::vector<std::string> save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir) override;

  double alpha() const;
  double target_entropy() const { return -static_cast<double>(kActionDim); }
  Eigen::RowVectorXd td_targets(const TransitionBatch& batch);

  const Mlp& actor() const { return actor_; }
  const Mlp& critic(int i) const { return i == 0 ? q1_ : q2_; }
  const Mlp& critic_target(int i) const { return i == 0 ? q1_target_ : q2_target_; }

  /// Reparameterised sample: actions, per-sample log-probabilities, and the
  /// pieces needed to differentiate through the squashing.
  struct PolicySample {
    Matrix mean, log_std, noise, action;
    Eigen::RowVectorXd log_prob;
    Mlp::Cache cache;
    Matrix raw;  // unclamped actor output
  };
  PolicySample sample_policy(const Matrix& obs, bool deterministic);

 private:
  Eigen::RowVectorXd targets(const TransitionBatch& normalized);

  Rng rng_;
  ObsNormalizer norm_;
  Mlp actor_, q1_, q2_, q1_target_, q2_target_;
  AdamState actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
  double log_alpha_ = 0.0;
};

/// Rollout storage for on-policy agents, laid out step-major then env.
class RolloutBuffer {
 public:
  RolloutBuffer(int n_steps, int n_envs, int obs_dim);

  void add(int step, int env, std::span<const double> obs, const Action& action, double reward,
           double value, double log_prob, bool terminated, bool truncated, double truncation_value);

  /// Generalized advantage estimation. Terminal steps do not bootstrap;
  /// truncated steps bootstrap from the value of their final observation;
  /// the last step of the rollout bootstraps from `last_values`.
  void compute_advantages(std::span<const double> last_values, double gamma, double lambda);

  int n_steps() const { return n_steps_; }
  int n_envs() const { return n_envs_; }
  std::size_t size() const { return static_cast<std::size_t>(n_steps_) * n_envs_; }
  std::size_t index(int step, int env) const { return static_cast<std::size_t>(step) * n_envs_ + env; }

  Matrix obs;
  Matrix actions;
  Eigen::RowVectorXd rewards, values, log_probs, advantages, returns;
  std::vector<unsigned char> terminated, truncated;
  Eigen::RowVectorXd truncation_values;

 private:
  int n_steps_, n_envs_, obs_dim_;
};

/// Single-sequence GAE. next_values[t] is the bootstrap value for step t
/// (already zero for terminal steps); boundary[t] cuts the trace after t.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        std::span<const double> next_values, std::span<const unsigned char> boundary,
                        double gamma, double lambda);

struct SurrogatePair {
  double unclipped;
  double clipped;  // min(r*A, clip(r)*A)
};
SurrogatePair ppo_surrogate(double ratio, double advantage, double clip_range);

/// A2C and PPO: Gaussian policy with a state-independent learnable log-std
/// and a separate value network.
class GaussianAgent final : public Agent {
 public:
  struct PolicyStep {
    Action action{};      // unclipped sample (what log_prob refers to)
    Action env_action{};  // clipped to [-1, 1]
    double log_prob = 0.0;
    double value = 0.0;
  };

  GaussianAgent(AgentSpec spec, int obs_dim, std::uint64_t seed);

  Action act(std::span<const double> obs, ActMode mode) override;
  PolicyStep policy_step(std::span<const double> obs, ActMode mode);
  double value(std::span<const double> obs) const;
  /// Expects advantages already computed.
  LossDiagnostics update(RolloutBuffer& rollout);
  std::vector<std::string> save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir) override;

  const Mlp& actor() const { return actor_; }
  Mlp& mutable_value_net() { return value_; }
  const Mlp& value_net() const { return value_; }
  std::span<const double> log_std() const { return log_std_; }

  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

 private:
  LossDiagnostics gradient_pass(const RolloutBuffer& rollout, std::span<const std::size_t> idx,
                                bool clipped_objective, bool normalize_advantages);

  Rng rng_;
  Mlp actor_, value_;
  std::vector<double> log_std_;
  AdamState actor_opt_, log_std_opt_, value_opt_;
};

std::unique_ptr<Agent> make_agent(const AgentSpec& spec, int obs_dim, std::uint64_t seed);

/// splitmix64 step, used to derive independent seed streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Packs observations into a column-major batch.
Matrix to_matrix(std::span<const double> obs);

}  // namespace reach

#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "reach/agents.hpp"
#include "reach/errors.hpp"

namespace reach {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * M_PI);

Mlp build_tanh_net(int in, int out, const HyperParams& h, Activation output, Rng& rng) {
  std::vector<int> dims{in};
  for (int i = 0; i < h.hidden_layers; ++i) dims.push_back(h.hidden_width);
  dims.push_back(out);
  Mlp net = Mlp::make(std::move(dims), Activation::Tanh, output);
  net.init_glorot(rng);
  return net;
}

}  // namespace

GaussianAgent::GaussianAgent(AgentSpec spec, int obs_dim, std::uint64_t seed)
    : Agent(std::move(spec), obs_dim), rng_(seed) {
  const HyperParams& h = spec_.hyper;
  actor_ = build_tanh_net(obs_dim, kActionDim, h, Activation::Tanh, rng_);
  value_ = build_tanh_net(obs_dim, 1, h, Activation::Identity, rng_);
  log_std_.assign(kActionDim, 0.0);
  actor_opt_ = AdamState(actor_.param_count(), h.lr_actor);
  log_std_opt_ = AdamState(kActionDim, h.lr_actor);
  value_opt_ = AdamState(value_.param_count(), h.lr_critic);
}

GaussianAgent::PolicyStep GaussianAgent::policy_step(std::span<const double> obs, ActMode mode) {
  check_obs(obs);
  const auto mean = actor_.forward(obs);
  PolicyStep step;
  std::normal_distribution<double> n(0.0, 1.0);
  double lp = 0.0;
  for (int j = 0; j < kActionDim; ++j) {
    const double s = std::exp(log_std_[j]);
    const double eps = mode == ActMode::Explore ? n(rng_) : 0.0;
    step.action[j] = mean[j] + s * eps;
    step.env_action[j] = std::clamp(step.action[j], -1.0, 1.0);
    lp += -0.5 * eps * eps - log_std_[j] - kHalfLog2Pi;
  }
  step.log_prob = lp;
  step.value = value_.forward(obs)[0];
  return step;
}

Action GaussianAgent::act(std::span<const double> obs, ActMode mode) {
  return policy_step(obs, mode).env_action;
}

double GaussianAgent::value(std::span<const double> obs) const {
  check_obs(obs);
  return value_.forward(obs)[0];
}

LossDiagnostics GaussianAgent::gradient_pass(const RolloutBuffer& rollout,
                                             std::span<const std::size_t> idx, bool clipped_objective,
                                             bool normalize_advantages) {
  const HyperParams& h = spec_.hyper;
  const auto n = static_cast<Eigen::Index>(idx.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix obs(obs_dim_, n), actions(kActionDim, n);
  Eigen::RowVectorXd adv(n), ret(n), old_lp(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto i = static_cast<Eigen::Index>(idx[c]);
    obs.col(c) = rollout.obs.col(i);
    actions.col(c) = rollout.actions.col(i);
    adv[c] = rollout.advantages[i];
    ret[c] = rollout.returns[i];
    old_lp[c] = rollout.log_probs[i];
  }
  if (!adv.allFinite()) throw TrainingError("non-finite advantage");
  if (normalize_advantages && n > 1) {
    const double mu = adv.mean();
    const double var = (adv.array() - mu).square().sum() / static_cast<double>(n - 1);
    adv = (adv.array() - mu) / (std::sqrt(var) + 1e-8);
  }

  Mlp::Cache actor_cache;
  const Matrix mean = actor_.forward(obs, actor_cache);
  Matrix up_mean(kActionDim, n);
  std::vector<double> g_log_std(kActionDim, 0.0);
  LossDiagnostics d;
  double policy_loss = 0.0;
  int clipped = 0;
  for (Eigen::Index c = 0; c < n; ++c) {
    double lp = 0.0;
    for (int j = 0; j < kActionDim; ++j) {
      const double s = std::exp(log_std_[j]);
      const double z = (actions(j, c) - mean(j, c)) / s;
      lp += -0.5 * z * z - log_std_[j] - kHalfLog2Pi;
    }
    double g = 0.0;  // dLoss / dlog_prob for this sample
    if (clipped_objective) {
      const double ratio = std::exp(lp - old_lp[c]);
      const auto sur = ppo_surrogate(ratio, adv[c], h.clip_range);
      if (sur.unclipped <= sur.clipped) {
        g = -adv[c] * ratio * inv_n;
      } else {
        ++clipped;
      }
      policy_loss -= sur.clipped * inv_n;
    } else {
      g = -adv[c] * inv_n;
      policy_loss -= adv[c] * lp * inv_n;
    }
    for (int j = 0; j < kActionDim; ++j) {
      const double var = std::exp(2.0 * log_std_[j]);
      const double diff = actions(j, c) - mean(j, c);
      up_mean(j, c) = g * diff / var;
      g_log_std[j] += g * (diff * diff / var - 1.0);
    }
  }
  std::vector<double> g_actor(actor_.param_count(), 0.0);
  actor_.backward(actor_cache, up_mean, g_actor);

  double pg_sq = 0.0;
  for (double g : g_actor) pg_sq += g * g;
  for (double g : g_log_std) pg_sq += g * g;
  d.policy_gradient_norm = std::sqrt(pg_sq);

  double entropy = 0.0;
  for (int j = 0; j < kActionDim; ++j) {
    entropy += log_std_[j] + 0.5 + kHalfLog2Pi;
    g_log_std[j] -= h.entropy_coef;
  }

  Mlp::Cache value_cache;
  const Matrix v = value_.forward(obs, value_cache);
  const Eigen::RowVectorXd v_err = v.row(0) - ret;
  const double value_loss = v_err.squaredNorm() * inv_n;
  std::vector<double> g_value(value_.param_count(), 0.0);
  value_.backward(value_cache, (h.value_coef * 2.0 * inv_n) * v_err, g_value);

  d.actor_loss = policy_loss - h.entropy_coef * entropy;
  d.critic_loss = value_loss;
  d.entropy = entropy;
  d.clip_fraction = static_cast<double>(clipped) * inv_n;
  if (!std::isfinite(d.actor_loss) || !std::isfinite(d.critic_loss)) {
    throw TrainingError("non-finite on-policy loss");
  }

  if (h.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (const auto* vec : {&g_actor, &g_log_std, &g_value}) {
      for (double g : *vec) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > h.max_grad_norm) {
      const double scale = h.max_grad_norm / (norm + 1e-6);
      for (auto* vec : {&g_actor, &g_log_std, &g_value}) {
        for (double& g : *vec) g *= scale;
      }
    }
  }
  adam_step(actor_opt_, actor_.params(), g_actor);
  adam_step(log_std_opt_, log_std_, g_log_std);
  adam_step(value_opt_, value_.params(), g_value);
  for (double& l : log_std_) l = std::clamp(l, kLogStdMin, kLogStdMax);
  d.updates = 1;
  return d;
}

LossDiagnostics GaussianAgent::update(RolloutBuffer& rollout) {
  const HyperParams& h = spec_.hyper;
  std::vector<std::size_t> idx(rollout.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (spec_.algo == Algo::A2C) return gradient_pass(rollout, idx, false, false);

  LossDiagnostics last;
  int updates = 0;
  double clip_sum = 0.0;
  const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(h.batch), idx.size());
  for (int epoch = 0; epoch < h.n_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng_);
    for (std::size_t start = 0; start < idx.size(); start += mb) {
      const std::size_t len = std::min(mb, idx.size() - start);
      last = gradient_pass(rollout, std::span(idx).subspan(start, len), true, true);
      clip_sum += last.clip_fraction;
      ++updates;
    }
  }
  last.updates = updates;
  last.clip_fraction = updates ? clip_sum / updates : 0.0;
  return last;
}

std::vector<std::string> GaussianAgent::save(const std::filesystem::path& dir) const {
  save_checkpoint(dir / "actor.bin", actor_);
  save_checkpoint(dir / "value.bin", value_);
  nlohmann::json extra;
  extra["log_std"] = log_std_;
  std::ofstream out(dir / "extra.json");
  out << extra.dump() << "\n";
  if (!out) throw DataError("cannot write extra.json");
  return {"actor.bin", "value.bin", "extra.json"};
}

void GaussianAgent::load(const std::filesystem::path& dir) {
  Mlp actor = load_checkpoint(dir / "actor.bin");
  if (actor.layer_dims() != actor_.layer_dims()) throw DataError("actor checkpoint shape mismatch");
  actor_ = std::move(actor);
  if (std::filesystem::exists(dir / "value.bin")) value_ = load_checkpoint(dir / "value.bin");
  std::ifstream in(dir / "extra.json");
  if (in) {
    const auto extra = nlohmann::json::parse(in);
    log_std_ = extra.at("log_std").get<std::vector<double>>();
    if (log_std_.size() != kActionDim) throw DataError("extra.json: bad log_std");
  }
}

}  // namespace reach

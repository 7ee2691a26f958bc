#include <cmath>
#include <fstream>

#include "reach/agents.hpp"
#include "reach/errors.hpp"

namespace reach {

namespace {

Mlp build_net(int in, int out, const HyperParams& h, Activation hidden, Activation output, Rng& rng) {
  std::vector<int> dims{in};
  for (int i = 0; i < h.hidden_layers; ++i) dims.push_back(h.hidden_width);
  dims.push_back(out);
  Mlp net = Mlp::make(std::move(dims), hidden, output);
  net.init_glorot(rng);
  return net;
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double std_dev, Rng& rng) {
  std::normal_distribution<double> n(0.0, std_dev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Regresses `net` onto y and takes one optimizer step; returns the MSE.
double regress(Mlp& net, AdamState& opt, const Matrix& input, const Eigen::RowVectorXd& y) {
  Mlp::Cache cache;
  const Matrix q = net.forward(input, cache);
  const Eigen::RowVectorXd diff = q.row(0) - y;
  const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
  if (!std::isfinite(loss)) throw TrainingError("non-finite critic loss");
  const Matrix upstream = (2.0 / static_cast<double>(diff.size())) * diff;
  std::vector<double> grads(net.param_count(), 0.0);
  net.backward(cache, upstream, grads);
  adam_step(opt, net.params(), grads);
  return loss;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void write_extra(const std::filesystem::path& path, const std::vector<std::pair<std::string, double>>& kv) {
  std::ofstream out(path);
  out.precision(17);
  out << "{";
  for (std::size_t i = 0; i < kv.size(); ++i) {
    out << (i ? "," : "") << "\"" << kv[i].first << "\":" << kv[i].second;
  }
  out << "}\n";
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<double> to_vector(const Matrix& column) { return {column.data(), column.data() + column.size()}; }

TransitionBatch normalized(const ObsNormalizer& norm, const TransitionBatch& batch) {
  TransitionBatch b = batch;
  if (norm.enabled()) {
    b.obs = norm.apply(batch.obs);
    b.next_obs = norm.apply(batch.next_obs);
  }
  return b;
}

constexpr double kNormClip = 5.0;
constexpr double kNormMinStd = 1e-2;

}  // namespace

ObsNormalizer::ObsNormalizer(int dim, bool enabled)
    : enabled_(enabled), sum_(Eigen::VectorXd::Zero(dim)), sumsq_(Eigen::VectorXd::Zero(dim)) {}

void ObsNormalizer::update(const Matrix& obs) {
  if (!enabled_) return;
  for (Eigen::Index c = 0; c < obs.cols(); ++c) {
    for (Eigen::Index r = 0; r < obs.rows(); ++r) {
      const double v = obs(r, c);
      sum_[r] += v;
      sumsq_[r] += v * v;
    }
  }
  count_ += static_cast<double>(obs.cols());
}

Eigen::VectorXd ObsNormalizer::mean() const {
  if (count_ == 0.0) return Eigen::VectorXd::Zero(sum_.size());
  return sum_ / count_;
}

Eigen::VectorXd ObsNormalizer::stddev() const {
  if (count_ == 0.0) return Eigen::VectorXd::Ones(sum_.size());
  const Eigen::VectorXd m = mean();
  Eigen::VectorXd sd(sum_.size());
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    sd[i] = std::max(kNormMinStd, std::sqrt(std::max(0.0, sumsq_[i] / count_ - m[i] * m[i])));
  }
  return sd;
}

Matrix ObsNormalizer::apply(const Matrix& obs) const {
  if (!enabled_) return obs;
  const Eigen::VectorXd m = mean(), sd = stddev();
  Matrix out(obs.rows(), obs.cols());
  for (Eigen::Index c = 0; c < obs.cols(); ++c) {
    for (Eigen::Index r = 0; r < obs.rows(); ++r) {
      out(r, c) = std::clamp((obs(r, c) - m[r]) / sd[r], -kNormClip, kNormClip);
    }
  }
  return out;
}

void ObsNormalizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  const auto dim = static_cast<std::uint64_t>(sum_.size());
  out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  out.write(reinterpret_cast<const char*>(&count_), sizeof(count_));
  out.write(reinterpret_cast<const char*>(sum_.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  out.write(reinterpret_cast<const char*>(sumsq_.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  if (!out) throw DataError("cannot write " + path.string());
}

void ObsNormalizer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t dim = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  if (!in || dim != static_cast<std::uint64_t>(sum_.size())) throw DataError("bad normalizer file " + path.string());
  in.read(reinterpret_cast<char*>(&count_), sizeof(count_));
  in.read(reinterpret_cast<char*>(sum_.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  in.read(reinterpret_cast<char*>(sumsq_.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  if (!in) throw DataError("truncated normalizer file " + path.string());
}

// ---------------------------------------------------------------------------
// TD3 / DDPG

DeterministicAgent::DeterministicAgent(AgentSpec spec, int obs_dim, std::uint64_t seed)
    : Agent(std::move(spec), obs_dim), rng_(seed), norm_(obs_dim, spec_.hyper.obs_norm != 0) {
  const HyperParams& h = spec_.hyper;
  actor_ = build_net(obs_dim, kActionDim, h, Activation::Relu, Activation::Tanh, rng_);
  q1_ = build_net(obs_dim + kActionDim, 1, h, Activation::Relu, Activation::Identity, rng_);
  q2_ = build_net(obs_dim + kActionDim, 1, h, Activation::Relu, Activation::Identity, rng_);
  actor_target_ = actor_;
  q1_target_ = q1_;
  q2_target_ = q2_;
  actor_opt_ = AdamState(actor_.param_count(), h.lr_actor);
  q1_opt_ = AdamState(q1_.param_count(), h.lr_critic);
  q2_opt_ = AdamState(q2_.param_count(), h.lr_critic);
}

Action DeterministicAgent::act(std::span<const double> obs, ActMode mode) {
  check_obs(obs);
  const std::vector<double> mean =
      norm_.enabled() ? to_vector(actor_.forward(norm_.apply(to_matrix(obs)))) : actor_.forward(obs);
  Action a;
  std::normal_distribution<double> noise(0.0, spec_.hyper.exploration_noise_std);
  for (int i = 0; i < kActionDim; ++i) {
    double v = mean[i];
    if (mode == ActMode::Explore && spec_.hyper.exploration_noise_std > 0.0) v += noise(rng_);
    a[i] = std::clamp(v, -1.0, 1.0);
  }
  return a;
}

Eigen::RowVectorXd DeterministicAgent::td_targets(const TransitionBatch& batch) {
  return targets(normalized(norm_, batch));
}

Eigen::RowVectorXd DeterministicAgent::targets(const TransitionBatch& batch) {
  const HyperParams& h = spec_.hyper;
  Matrix next_action = actor_target_.forward(batch.next_obs);
  if (twin() && h.td3_policy_noise > 0.0) {
    const Matrix eps = gaussian(next_action.rows(), next_action.cols(), h.td3_policy_noise, rng_)
                           .cwiseMax(-h.td3_noise_clip)
                           .cwiseMin(h.td3_noise_clip);
    next_action = (next_action + eps).cwiseMax(-1.0).cwiseMin(1.0);
  }
  const Matrix in = stack(batch.next_obs, next_action);
  Eigen::RowVectorXd q_next = q1_target_.forward(in).row(0);
  if (twin()) q_next = q_next.cwiseMin(q2_target_.forward(in).row(0));
  return h.reward_scale * batch.reward.array() + h.gamma * (1.0 - batch.done.array()) * q_next.array();
}

double DeterministicAgent::critic_loss(const TransitionBatch& raw) {
  const TransitionBatch batch = normalized(norm_, raw);
  const Eigen::RowVectorXd y = targets(batch);
  const Matrix in = stack(batch.obs, batch.action);
  double loss = (q1_.forward(in).row(0) - y).squaredNorm() / static_cast<double>(y.size());
  if (twin()) loss += (q2_.forward(in).row(0) - y).squaredNorm() / static_cast<double>(y.size());
  return loss;
}

LossDiagnostics DeterministicAgent::update_on_batch(const TransitionBatch& raw) {
  const HyperParams& h = spec_.hyper;
  const TransitionBatch batch = normalized(norm_, raw);
  LossDiagnostics d;
  const Eigen::RowVectorXd y = targets(batch);
  const Matrix in = stack(batch.obs, batch.action);
  d.critic_loss = regress(q1_, q1_opt_, in, y);
  if (twin()) d.critic_loss += regress(q2_, q2_opt_, in, y);
  ++n_updates_;

  if (!twin() || n_updates_ % h.td3_policy_delay == 0) {
    const auto n = static_cast<double>(batch.obs.cols());
    Mlp::Cache actor_cache;
    const Matrix action = actor_.forward(batch.obs, actor_cache);
    Mlp::Cache q_cache;
    const Matrix q = q1_.forward(stack(batch.obs, action), q_cache);
    const double l2_weight = h.action_l2 / (n * kActionDim);
    d.actor_loss = -q.mean() + l2_weight * action.squaredNorm();
    if (!std::isfinite(d.actor_loss)) throw TrainingError("non-finite actor loss");
    std::vector<double> scratch(q1_.param_count(), 0.0);
    const Matrix dq_din = q1_.backward(q_cache, Matrix::Constant(1, q.cols(), -1.0 / n), scratch);
    const Matrix upstream = dq_din.bottomRows(kActionDim) + (2.0 * l2_weight) * action;
    std::vector<double> grads(actor_.param_count(), 0.0);
    actor_.backward(actor_cache, upstream, grads);
    adam_step(actor_opt_, actor_.params(), grads);

    soft_update(actor_target_.params(), actor_.params(), h.tau);
    soft_update(q1_target_.params(), q1_.params(), h.tau);
    if (twin()) soft_update(q2_target_.params(), q2_.params(), h.tau);
  }
  d.updates = 1;
  return d;
}

LossDiagnostics DeterministicAgent::update(const ReplayBuffer& buffer) {
  LossDiagnostics total;
  for (int g = 0; g < spec_.hyper.gradient_steps; ++g) {
    const auto idx = buffer.sample_indices(static_cast<std::size_t>(spec_.hyper.batch), rng_);
    const TransitionBatch batch = buffer.gather(idx);
    norm_.update(batch.obs);
    const auto d = update_on_batch(batch);
    total.critic_loss = d.critic_loss;
    total.actor_loss = d.actor_loss;
    total.updates += 1;
  }
  return total;
}

std::vector<std::string> DeterministicAgent::save(const std::filesystem::path& dir) const {
  save_checkpoint(dir / "actor.bin", actor_);
  save_checkpoint(dir / "critic1.bin", q1_);
  std::vector<std::string> files{"actor.bin", "critic1.bin"};
  if (twin()) {
    save_checkpoint(dir / "critic2.bin", q2_);
    files.push_back("critic2.bin");
  }
  if (norm_.enabled()) {
    norm_.save(dir / "obs_norm.bin");
    files.push_back("obs_norm.bin");
  }
  return files;
}

void DeterministicAgent::load(const std::filesystem::path& dir) {
  Mlp actor = load_checkpoint(dir / "actor.bin");
  if (actor.layer_dims() != actor_.layer_dims()) throw DataError("actor checkpoint shape mismatch");
  actor_ = std::move(actor);
  actor_target_ = actor_;
  if (std::filesystem::exists(dir / "critic1.bin")) q1_target_ = q1_ = load_checkpoint(dir / "critic1.bin");
  if (std::filesystem::exists(dir / "critic2.bin")) q2_target_ = q2_ = load_checkpoint(dir / "critic2.bin");
  if (norm_.enabled()) norm_.load(dir / "obs_norm.bin");
}

// ---------------------------------------------------------------------------
// SAC

namespace {
constexpr double kSacLogStdMin = -5.0;
constexpr double kSacLogStdMax = 2.0;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * M_PI);
}  // namespace

SacAgent::SacAgent(AgentSpec spec, int obs_dim, std::uint64_t seed)
    : Agent(std::move(spec), obs_dim), rng_(seed), norm_(obs_dim, spec_.hyper.obs_norm != 0) {
  const HyperParams& h = spec_.hyper;
  actor_ = build_net(obs_dim, 2 * kActionDim, h, Activation::Relu, Activation::Identity, rng_);
  q1_ = build_net(obs_dim + kActionDim, 1, h, Activation::Relu, Activation::Identity, rng_);
  q2_ = build_net(obs_dim + kActionDim, 1, h, Activation::Relu, Activation::Identity, rng_);
  q1_target_ = q1_;
  q2_target_ = q2_;
  actor_opt_ = AdamState(actor_.param_count(), h.lr_actor);
  q1_opt_ = AdamState(q1_.param_count(), h.lr_critic);
  q2_opt_ = AdamState(q2_.param_count(), h.lr_critic);
  alpha_opt_ = AdamState(1, h.lr_actor);
  log_alpha_ = h.sac_alpha > 0.0 ? std::log(h.sac_alpha) : -std::numeric_limits<double>::infinity();
}

double SacAgent::alpha() const { return std::exp(log_alpha_); }

SacAgent::PolicySample SacAgent::sample_policy(const Matrix& obs, bool deterministic) {
  PolicySample s;
  s.raw = actor_.forward(obs, s.cache);
  s.mean = s.raw.topRows(kActionDim);
  s.log_std = s.raw.bottomRows(kActionDim).cwiseMax(kSacLogStdMin).cwiseMin(kSacLogStdMax);
  s.noise = deterministic ? Matrix::Zero(kActionDim, obs.cols())
                          : gaussian(kActionDim, obs.cols(), 1.0, rng_);
  const Matrix u = s.mean + (s.log_std.array().exp() * s.noise.array()).matrix();
  s.action = u.array().tanh();
  s.log_prob.resize(obs.cols());
  for (Eigen::Index c = 0; c < obs.cols(); ++c) {
    double lp = 0.0;
    for (int j = 0; j < kActionDim; ++j) {
      const double e = s.noise(j, c);
      const double uj = u(j, c);
      // log(1 - tanh(u)^2) written to stay finite for large |u|.
      const double log_jac = 2.0 * (std::log(2.0) - uj - softplus(-2.0 * uj));
      lp += -0.5 * e * e - s.log_std(j, c) - kHalfLog2Pi - log_jac;
    }
    s.log_prob[c] = lp;
  }
  return s;
}

Action SacAgent::act(std::span<const double> obs, ActMode mode) {
  check_obs(obs);
  const auto s = sample_policy(norm_.apply(to_matrix(obs)), mode == ActMode::Exploit);
  Action a;
  for (int i = 0; i < kActionDim; ++i) a[i] = std::clamp(s.action(i, 0), -1.0, 1.0);
  return a;
}

Eigen::RowVectorXd SacAgent::td_targets(const TransitionBatch& batch) {
  return targets(normalized(norm_, batch));
}

Eigen::RowVectorXd SacAgent::targets(const TransitionBatch& batch) {
  const auto next = sample_policy(batch.next_obs, false);
  const Matrix in = stack(batch.next_obs, next.action);
  const Eigen::RowVectorXd q_next =
      q1_target_.forward(in).row(0).cwiseMin(q2_target_.forward(in).row(0));
  const Eigen::RowVectorXd soft = q_next.array() - alpha() * next.log_prob.array();
  return spec_.hyper.reward_scale * batch.reward.array() + spec_.hyper.gamma * (1.0 - batch.done.array()) * soft.array();
}

double SacAgent::critic_loss(const TransitionBatch& raw) {
  const TransitionBatch batch = normalized(norm_, raw);
  const Eigen::RowVectorXd y = targets(batch);
  const Matrix in = stack(batch.obs, batch.action);
  const double n = static_cast<double>(y.size());
  return (q1_.forward(in).row(0) - y).squaredNorm() / n + (q2_.forward(in).row(0) - y).squaredNorm() / n;
}

LossDiagnostics SacAgent::update_on_batch(const TransitionBatch& raw) {
  const HyperParams& h = spec_.hyper;
  const TransitionBatch batch = normalized(norm_, raw);
  LossDiagnostics d;
  const Eigen::RowVectorXd y = targets(batch);
  const Matrix in = stack(batch.obs, batch.action);
  d.critic_loss = regress(q1_, q1_opt_, in, y) + regress(q2_, q2_opt_, in, y);

  // Actor: minimise mean(alpha * log_pi - min_k Q_k(s, a)) through the reparameterised sample.
  const double alpha_now = alpha();
  const auto n = static_cast<double>(batch.obs.cols());
  auto s = sample_policy(batch.obs, false);
  const Matrix qin = stack(batch.obs, s.action);
  Mlp::Cache c1, c2;
  const Matrix q1 = q1_.forward(qin, c1);
  const Matrix q2 = q2_.forward(qin, c2);
  Matrix up1 = Matrix::Zero(1, q1.cols());
  Matrix up2 = Matrix::Zero(1, q1.cols());
  double q_sum = 0.0;
  for (Eigen::Index c = 0; c < q1.cols(); ++c) {
    if (q1(0, c) <= q2(0, c)) {
      up1(0, c) = -1.0 / n;
      q_sum += q1(0, c);
    } else {
      up2(0, c) = -1.0 / n;
      q_sum += q2(0, c);
    }
  }
  d.actor_loss = (alpha_now * s.log_prob.sum() - q_sum) / n;
  if (!std::isfinite(d.actor_loss)) throw TrainingError("non-finite actor loss");
  std::vector<double> scratch(q1_.param_count(), 0.0);
  Matrix grad_a = q1_.backward(c1, up1, scratch).bottomRows(kActionDim);
  grad_a += q2_.backward(c2, up2, scratch).bottomRows(kActionDim);

  Matrix upstream(2 * kActionDim, batch.obs.cols());
  for (Eigen::Index c = 0; c < batch.obs.cols(); ++c) {
    for (int j = 0; j < kActionDim; ++j) {
      const double a = s.action(j, c);
      const double du = grad_a(j, c) * (1.0 - a * a) + alpha_now * 2.0 * a / n;
      upstream(j, c) = du;
      const double raw_ls = s.raw(kActionDim + j, c);
      const bool clamped = raw_ls < kSacLogStdMin || raw_ls > kSacLogStdMax;
      upstream(kActionDim + j, c) =
          clamped ? 0.0 : du * std::exp(s.log_std(j, c)) * s.noise(j, c) - alpha_now / n;
    }
  }
  std::vector<double> grads(actor_.param_count(), 0.0);
  actor_.backward(s.cache, upstream, grads);
  adam_step(actor_opt_, actor_.params(), grads);

  d.entropy = -s.log_prob.mean();
  if (h.sac_alpha_auto) {
    // d/d(log alpha) of -log_alpha * mean(log_pi + target_entropy).
    const double g = -(s.log_prob.mean() + target_entropy());
    const double grad[1] = {g};
    double la[1] = {log_alpha_};
    adam_step(alpha_opt_, la, grad);
    log_alpha_ = la[0];
  }
  d.alpha = alpha();

  soft_update(q1_target_.params(), q1_.params(), h.tau);
  soft_update(q2_target_.params(), q2_.params(), h.tau);
  d.updates = 1;
  return d;
}

LossDiagnostics SacAgent::update(const ReplayBuffer& buffer) {
  LossDiagnostics total;
  for (int g = 0; g < spec_.hyper.gradient_steps; ++g) {
    const auto idx = buffer.sample_indices(static_cast<std::size_t>(spec_.hyper.batch), rng_);
    const TransitionBatch batch = buffer.gather(idx);
    norm_.update(batch.obs);
    const auto d = update_on_batch(batch);
    total = d;
    total.updates = g + 1;
  }
  return total;
}

std::vector<std::string> SacAgent::save(const std::filesystem::path& dir) const {
  save_checkpoint(dir / "actor.bin", actor_);
  save_checkpoint(dir / "critic1.bin", q1_);
  save_checkpoint(dir / "critic2.bin", q2_);
  write_extra(dir / "extra.json", {{"log_alpha", log_alpha_}});
  std::vector<std::string> files{"actor.bin", "critic1.bin", "critic2.bin", "extra.json"};
  if (norm_.enabled()) {
    norm_.save(dir / "obs_norm.bin");
    files.push_back("obs_norm.bin");
  }
  return files;
}

void SacAgent::load(const std::filesystem::path& dir) {
  Mlp actor = load_checkpoint(dir / "actor.bin");
  if (actor.layer_dims() != actor_.layer_dims()) throw DataError("actor checkpoint shape mismatch");
  actor_ = std::move(actor);
  if (std::filesystem::exists(dir / "critic1.bin")) q1_target_ = q1_ = load_checkpoint(dir / "critic1.bin");
  if (std::filesystem::exists(dir / "critic2.bin")) q2_target_ = q2_ = load_checkpoint(dir / "critic2.bin");
  if (norm_.enabled()) norm_.load(dir / "obs_norm.bin");
}

}  // namespace reach

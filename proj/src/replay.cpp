#include "reach/replay.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "reach/errors.hpp"

namespace reach {

namespace {

constexpr int kGoalSlots = 9;

void write_goal_slots(std::vector<double>& obs, const Pose3& goal) {
  if (obs.size() != static_cast<std::size_t>(kGoalObsDim)) return;
  obs[12] = goal.x;
  obs[13] = goal.y;
  obs[14] = goal.z;
}

}  // namespace

const char* to_string(HerStrategy s) {
  switch (s) {
    case HerStrategy::Future:
      return "future";
    case HerStrategy::Final:
      return "final";
    case HerStrategy::Episode:
      return "episode";
  }
  return "?";
}

HerStrategy parse_her_strategy(const std::string& s) {
  if (s == "future") return HerStrategy::Future;
  if (s == "final") return HerStrategy::Final;
  if (s == "episode") return HerStrategy::Episode;
  throw ConfigError("unknown HER strategy '" + s + "'");
}

Transition relabel(const Transition& tr, const Pose3& new_goal, double termination_eps) {
  Transition out = tr;
  out.desired_goal = new_goal;
  out.reward = -squared_distance(tr.next_achieved_goal, new_goal);
  out.done = distance(tr.next_achieved_goal, new_goal) < termination_eps;
  write_goal_slots(out.obs, new_goal);
  write_goal_slots(out.next_obs, new_goal);
  return out;
}

bool reward_consistent(const Transition& tr, double tol) {
  return std::abs(tr.reward + squared_distance(tr.next_achieved_goal, tr.desired_goal)) <= tol;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int obs_dim, double termination_eps)
    : capacity_(capacity), obs_dim_(obs_dim), termination_eps_(termination_eps) {
  if (capacity == 0) throw UsageError("ReplayBuffer: capacity must be positive");
  if (obs_dim <= 0) throw UsageError("ReplayBuffer: obs_dim must be positive");
}

void ReplayBuffer::push(const Transition& tr) {
  if (tr.obs.size() != static_cast<std::size_t>(obs_dim_) ||
      tr.next_obs.size() != static_cast<std::size_t>(obs_dim_)) {
    throw UsageError("ReplayBuffer::push: observation width mismatch");
  }
  const double goals[kGoalSlots] = {tr.achieved_goal.x,      tr.achieved_goal.y,      tr.achieved_goal.z,
                                    tr.desired_goal.x,       tr.desired_goal.y,       tr.desired_goal.z,
                                    tr.next_achieved_goal.x, tr.next_achieved_goal.y, tr.next_achieved_goal.z};
  if (size_ < capacity_) {
    obs_.insert(obs_.end(), tr.obs.begin(), tr.obs.end());
    next_obs_.insert(next_obs_.end(), tr.next_obs.begin(), tr.next_obs.end());
    action_.insert(action_.end(), tr.action.begin(), tr.action.end());
    reward_.push_back(tr.reward);
    done_.push_back(tr.done ? 1 : 0);
    goals_.insert(goals_.end(), goals, goals + kGoalSlots);
    ++size_;
    head_ = size_ % capacity_;
    return;
  }
  const std::size_t i = head_;
  std::copy(tr.obs.begin(), tr.obs.end(), obs_.begin() + i * obs_dim_);
  std::copy(tr.next_obs.begin(), tr.next_obs.end(), next_obs_.begin() + i * obs_dim_);
  std::copy(tr.action.begin(), tr.action.end(), action_.begin() + i * kActionDim);
  reward_[i] = tr.reward;
  done_[i] = tr.done ? 1 : 0;
  std::copy(goals, goals + kGoalSlots, goals_.begin() + i * kGoalSlots);
  head_ = (head_ + 1) % capacity_;
}

std::size_t ReplayBuffer::push_episode(std::span<const Transition> episode, const HerConfig& her,
                                       Rng& rng) {
  if (her.k < 0) throw UsageError("HER k must be non-negative");
  for (std::size_t t = 0; t < episode.size(); ++t) {
    if (!reward_consistent(episode[t])) {
      throw DataError("transition " + std::to_string(t) + " has a reward inconsistent with its goals");
    }
    if (t + 1 < episode.size() && episode[t].next_obs != episode[t + 1].obs) {
      throw DataError("episode is not a consecutive chain at step " + std::to_string(t));
    }
  }
  std::size_t stored = 0;
  const std::size_t len = episode.size();
  for (std::size_t t = 0; t < len; ++t) {
    push(episode[t]);
    ++stored;
    for (int j = 0; j < her.k; ++j) {
      std::size_t src = len - 1;
      switch (her.strategy) {
        case HerStrategy::Future: {
          std::uniform_int_distribution<std::size_t> u(t, len - 1);
          src = u(rng);
          break;
        }
        case HerStrategy::Episode: {
          std::uniform_int_distribution<std::size_t> u(0, len - 1);
          src = u(rng);
          break;
        }
        case HerStrategy::Final:
          break;
      }
      push(relabel(episode[t], episode[src].next_achieved_goal, termination_eps_));
      ++stored;
    }
  }
  return stored;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (batch > size_) {
    throw UsageError("ReplayBuffer::sample: batch " + std::to_string(batch) + " exceeds size " +
                     std::to_string(size_));
  }
  std::uniform_int_distribution<std::size_t> u(0, size_ - 1);
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = u(rng);
  return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  std::vector<Transition> out;
  out.reserve(batch);
  for (std::size_t i : sample_indices(batch, rng)) out.push_back(at(i));
  return out;
}

TransitionBatch ReplayBuffer::gather(std::span<const std::size_t> indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  TransitionBatch b;
  b.obs.resize(obs_dim_, n);
  b.next_obs.resize(obs_dim_, n);
  b.action.resize(kActionDim, n);
  b.reward.resize(n);
  b.done.resize(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const std::size_t i = indices[c];
    if (i >= size_) throw UsageError("ReplayBuffer::gather: index out of range");
    std::copy_n(obs_.data() + i * obs_dim_, obs_dim_, b.obs.col(c).data());
    std::copy_n(next_obs_.data() + i * obs_dim_, obs_dim_, b.next_obs.col(c).data());
    std::copy_n(action_.data() + i * kActionDim, kActionDim, b.action.col(c).data());
    b.reward[c] = reward_[i];
    b.done[c] = done_[i];
  }
  return b;
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw UsageError("ReplayBuffer::at: index out of range");
  Transition tr;
  tr.obs.assign(obs_.begin() + i * obs_dim_, obs_.begin() + (i + 1) * obs_dim_);
  tr.next_obs.assign(next_obs_.begin() + i * obs_dim_, next_obs_.begin() + (i + 1) * obs_dim_);
  std::copy_n(action_.begin() + i * kActionDim, kActionDim, tr.action.begin());
  tr.reward = reward_[i];
  tr.done = done_[i] != 0;
  const double* g = goals_.data() + i * kGoalSlots;
  tr.achieved_goal = {g[0], g[1], g[2]};
  tr.desired_goal = {g[3], g[4], g[5]};
  tr.next_achieved_goal = {g[6], g[7], g[8]};
  return tr;
}

void ReplayBuffer::write_jsonl(std::ostream& out) const {
  char buf[64];
  auto arr = [&](const double* v, int n) {
    out << '[';
    for (int i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
      out << (i ? "," : "") << buf;
    }
    out << ']';
  };
  for (std::size_t i = 0; i < size_; ++i) {
    out << "{\"obs\":";
    arr(obs_.data() + i * obs_dim_, obs_dim_);
    out << ",\"action\":";
    arr(action_.data() + i * kActionDim, kActionDim);
    std::snprintf(buf, sizeof(buf), "%.17g", reward_[i]);
    out << ",\"reward\":" << buf << ",\"next_obs\":";
    arr(next_obs_.data() + i * obs_dim_, obs_dim_);
    out << ",\"done\":" << (done_[i] ? "true" : "false") << ",\"goals\":";
    arr(goals_.data() + i * kGoalSlots, kGoalSlots);
    out << "}\n";
  }
}

}  // namespace reach

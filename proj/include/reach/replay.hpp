#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "reach/env.hpp"
#include "reach/net.hpp"

namespace reach {

struct Transition {
  std::vector<double> obs;
  Action action{};
  double reward = 0.0;
  std::vector<double> next_obs;
  bool done = false;  // terminal for bootstrapping; time-limit cuts are not terminal
  Pose3 achieved_goal;
  Pose3 desired_goal;
  Pose3 next_achieved_goal;
};

enum class HerStrategy { Future, Final, Episode };

struct HerConfig {
  HerStrategy strategy = HerStrategy::Future;
  int k = 4;  // relabeled copies per real transition
};

const char* to_string(HerStrategy s);
HerStrategy parse_her_strategy(const std::string& s);

/// Substitutes the desired goal and recomputes reward and done from the
/// squared-distance reward and the termination radius. Goal slots of a
/// goal-conditioned observation are rewritten as well.
Transition relabel(const Transition& tr, const Pose3& new_goal, double termination_eps = 0.0005);

/// reward == -|next_achieved_goal - desired_goal|^2 within tol.
bool reward_consistent(const Transition& tr, double tol = 1e-12);

/// Column-major batch ready for network consumption.
struct TransitionBatch {
  Matrix obs;       // obs_dim x B
  Matrix action;    // 6 x B
  Matrix next_obs;  // obs_dim x B
  Eigen::RowVectorXd reward;
  Eigen::RowVectorXd done;
};

/// Fixed-capacity ring of transitions; the oldest entries are evicted first.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int obs_dim, double termination_eps = 0.0005);

  void push(const Transition& tr);

  /// Stores every real transition plus her.k relabeled copies of each.
  /// Returns the number of stored transitions. Throws DataError when the
  /// episode is not a consecutive chain or a reward is inconsistent.
  std::size_t push_episode(std::span<const Transition> episode, const HerConfig& her, Rng& rng);

  /// Uniform with replacement. Throws UsageError if batch > size().
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;
  std::vector<Transition> sample(std::size_t batch, Rng& rng) const;
  TransitionBatch gather(std::span<const std::size_t> indices) const;

  Transition at(std::size_t i) const;
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  int obs_dim() const { return obs_dim_; }

  /// Diagnostic dump, one JSON object per transition.
  void write_jsonl(std::ostream& out) const;

 private:
  std::size_t capacity_;
  int obs_dim_;
  double termination_eps_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  std::vector<double> obs_;
  std::vector<double> next_obs_;
  std::vector<double> action_;
  std::vector<double> reward_;
  std::vector<unsigned char> done_;
  std::vector<double> goals_;  // achieved, desired, next_achieved per slot
};

}  // namespace reach

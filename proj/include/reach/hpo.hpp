#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "reach/agents.hpp"
#include "reach/env.hpp"

namespace reach {

class Config;

struct Distribution {
  enum class Kind { LogUniform, Uniform, Categorical };
  Kind kind = Kind::Uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::string> values;

  static Distribution log_uniform(double lo, double hi);
  static Distribution uniform(double lo, double hi);
  static Distribution categorical(std::vector<std::string> values);

  /// "loguniform 1e-5 1e-2", "uniform 0.9 0.999", "categorical 64 128 256".
  static Distribution parse(const std::string& text);
  std::string to_string() const;

  void validate(const std::string& name) const;
};

using ParamSet = std::vector<std::pair<std::string, std::string>>;

class SearchSpace {
 public:
  void add(std::string name, Distribution d);
  const std::vector<std::pair<std::string, Distribution>>& params() const { return params_; }
  bool empty() const { return params_.empty(); }

  /// One value per parameter, in declaration order. Continuous values are
  /// printed with round-trip precision so the trial table is exact.
  ParamSet sample(Rng& rng) const;

  /// Every key of `section` is one parameter.
  static SearchSpace from_config(const Config& cfg, const std::string& section);

  /// Ranges used when no search space is configured.
  static SearchSpace defaults(Algo algo);

 private:
  std::vector<std::pair<std::string, Distribution>> params_;
};

enum class TrialStatus { Running, Pruned, Complete, Failed };
const char* to_string(TrialStatus s);

struct Trial {
  int id = 0;
  ParamSet params;
  std::vector<double> windows;  // mean return of each evaluation window
  TrialStatus status = TrialStatus::Running;
  std::optional<double> final_score;
  std::string error;
};

enum class PruneDecision { Keep, Prune };

struct PrunerConfig {
  int warmup_windows = 2;
  int min_peers = 3;
};

/// Median rule: prune iff `score` is strictly below the median of the peer
/// scores at the same window. Windows before the warmup and windows with
/// fewer than `min_peers` peers always keep.
PruneDecision median_prune_decision(double score, std::span<const double> peer_scores,
                                    int window_index, const PrunerConfig& cfg = {});

/// Same rule with peers taken from `history` (every trial other than
/// `trial` that has reported `window_index`).
PruneDecision median_prune_decision(const Trial& trial, std::span<const Trial> history,
                                    int window_index, const PrunerConfig& cfg = {});

/// Handed to the objective; returns false once the trial has been pruned and
/// the objective should stop.
using Reporter = std::function<bool(double window_score)>;

/// Returns the final score of a trial that ran to the end. Throwing
/// TrainingError marks the trial failed.
using Objective = std::function<double(const ParamSet& params, std::uint64_t trial_seed,
                                       const Reporter& report)>;

struct SearchConfig {
  int n_trials = 100;
  int max_windows = 10;
  std::uint64_t seed = 0;
  PrunerConfig pruner;
};

struct SearchResult {
  std::vector<Trial> trials;
  int best_trial = -1;
  ParamSet best_params() const { return trials.at(static_cast<std::size_t>(best_trial)).params; }
};

class SearchError : public std::runtime_error {
 public:
  SearchError(const std::string& what, std::vector<Trial> trials)
      : std::runtime_error(what), trials(std::move(trials)) {}
  std::vector<Trial> trials;
};

/// Sequential random search. Trials never prune at their last window, so a
/// pruned trial always holds fewer windows than `max_windows`. Throws
/// SearchError when no trial completes.
SearchResult run_search(const SearchSpace& space, const Objective& objective,
                        const SearchConfig& cfg);

/// Trains `base` on the environment for `episodes` episodes per trial and
/// reports the mean return of every `window` consecutive episodes; the
/// final score is the last window's mean. A parameter named "lr" sets both
/// learning rates.
Objective rl_objective(AgentSpec base, ArmModel model, EnvConfig env, int episodes, int window = 10);

/// Applies sampled values onto hyperparameters.
HyperParams apply_params(HyperParams h, const ParamSet& params);

/// trial_id, params..., window_1..window_n, status, final_score
void write_trials_csv(std::ostream& out, const std::vector<Trial>& trials, int max_windows);

}  // namespace reach

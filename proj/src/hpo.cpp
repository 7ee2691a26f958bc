#include "reach/hpo.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "reach/config.hpp"
#include "reach/errors.hpp"
#include "reach/train.hpp"

namespace reach {

namespace {

std::string round_trip(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_number(const std::string& name, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("search space '" + name + "': bad number '" + s + "'");
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Distribution Distribution::log_uniform(double lo, double hi) {
  Distribution d;
  d.kind = Kind::LogUniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

Distribution Distribution::uniform(double lo, double hi) {
  Distribution d;
  d.kind = Kind::Uniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

Distribution Distribution::categorical(std::vector<std::string> values) {
  Distribution d;
  d.kind = Kind::Categorical;
  d.values = std::move(values);
  return d;
}

Distribution Distribution::parse(const std::string& text) {
  auto tokens = split_list(text, ' ');
  if (tokens.empty()) throw ConfigError("empty distribution");
  const std::string kind = tokens.front();
  tokens.erase(tokens.begin());
  Distribution d;
  if (kind == "categorical") {
    d = categorical(tokens);
  } else if (kind == "loguniform" || kind == "uniform") {
    if (tokens.size() != 2) throw ConfigError("'" + text + "': expected two bounds");
    const double lo = parse_number(kind, tokens[0]);
    const double hi = parse_number(kind, tokens[1]);
    d = kind == "loguniform" ? log_uniform(lo, hi) : uniform(lo, hi);
  } else {
    throw ConfigError("unknown distribution '" + kind + "'");
  }
  d.validate(text);
  return d;
}

std::string Distribution::to_string() const {
  std::string s;
  switch (kind) {
    case Kind::LogUniform:
      return "loguniform " + round_trip(lo) + " " + round_trip(hi);
    case Kind::Uniform:
      return "uniform " + round_trip(lo) + " " + round_trip(hi);
    case Kind::Categorical:
      s = "categorical";
      for (const auto& v : values) s += " " + v;
      return s;
  }
  return s;
}

void Distribution::validate(const std::string& name) const {
  if (kind == Kind::Categorical) {
    if (values.empty()) throw ConfigError("search space '" + name + "': no categories");
    return;
  }
  if (!(lo < hi)) throw ConfigError("search space '" + name + "': need lo < hi");
  if (kind == Kind::LogUniform && lo <= 0.0) {
    throw ConfigError("search space '" + name + "': log-uniform bounds must be positive");
  }
}

void SearchSpace::add(std::string name, Distribution d) {
  d.validate(name);
  for (const auto& [n, _] : params_) {
    if (n == name) throw ConfigError("search space: duplicate parameter '" + name + "'");
  }
  params_.emplace_back(std::move(name), std::move(d));
}

ParamSet SearchSpace::sample(Rng& rng) const {
  ParamSet out;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (const auto& [name, d] : params_) {
    switch (d.kind) {
      case Distribution::Kind::LogUniform: {
        const double a = std::log(d.lo), b = std::log(d.hi);
        out.emplace_back(name, round_trip(std::exp(a + (b - a) * u01(rng))));
        break;
      }
      case Distribution::Kind::Uniform:
        out.emplace_back(name, round_trip(d.lo + (d.hi - d.lo) * u01(rng)));
        break;
      case Distribution::Kind::Categorical: {
        std::uniform_int_distribution<std::size_t> pick(0, d.values.size() - 1);
        out.emplace_back(name, d.values[pick(rng)]);
        break;
      }
    }
  }
  return out;
}

SearchSpace SearchSpace::from_config(const Config& cfg, const std::string& section) {
  SearchSpace space;
  for (const auto& key : cfg.keys(section)) {
    space.add(key, Distribution::parse(cfg.get_string(section + "." + key, "")));
  }
  return space;
}

SearchSpace SearchSpace::defaults(Algo algo) {
  SearchSpace s;
  if (algo == Algo::Random) return s;
  s.add("lr", Distribution::log_uniform(1e-5, 1e-2));
  s.add("gamma", Distribution::uniform(0.9, 0.999));
  if (is_off_policy(algo)) {
    s.add("tau", Distribution::log_uniform(1e-3, 2e-2));
    s.add("batch", Distribution::categorical({"64", "128", "256"}));
  } else {
    s.add("gae_lambda", Distribution::uniform(0.8, 0.99));
    s.add("entropy_coef", Distribution::categorical({"0", "0.001", "0.01"}));
  }
  return s;
}

const char* to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::Running:
      return "running";
    case TrialStatus::Pruned:
      return "pruned";
    case TrialStatus::Complete:
      return "complete";
    case TrialStatus::Failed:
      return "failed";
  }
  return "?";
}

PruneDecision median_prune_decision(double score, std::span<const double> peer_scores,
                                    int window_index, const PrunerConfig& cfg) {
  if (window_index < cfg.warmup_windows) return PruneDecision::Keep;
  if (peer_scores.empty() || static_cast<int>(peer_scores.size()) < cfg.min_peers) {
    return PruneDecision::Keep;
  }
  const double m = median({peer_scores.begin(), peer_scores.end()});
  return score < m ? PruneDecision::Prune : PruneDecision::Keep;
}

PruneDecision median_prune_decision(const Trial& trial, std::span<const Trial> history,
                                    int window_index, const PrunerConfig& cfg) {
  if (window_index < 0 || static_cast<std::size_t>(window_index) >= trial.windows.size()) {
    throw UsageError("trial has not reported window " + std::to_string(window_index));
  }
  std::vector<double> peers;
  for (const Trial& t : history) {
    if (t.id == trial.id) continue;
    if (static_cast<std::size_t>(window_index) < t.windows.size()) peers.push_back(t.windows[window_index]);
  }
  return median_prune_decision(trial.windows[window_index], peers, window_index, cfg);
}

SearchResult run_search(const SearchSpace& space, const Objective& objective,
                        const SearchConfig& cfg) {
  if (cfg.n_trials < 1) throw ConfigError("n_trials must be >= 1");
  if (cfg.max_windows < 1) throw ConfigError("max_windows must be >= 1");
  SearchResult result;
  Rng sampler(derive_seed(cfg.seed, 7));
  for (int id = 0; id < cfg.n_trials; ++id) {
    Trial trial;
    trial.id = id;
    trial.params = space.sample(sampler);
    result.trials.push_back(trial);
    Trial& current = result.trials.back();

    Reporter report = [&](double score) {
      if (current.status != TrialStatus::Running) return false;
      if (static_cast<int>(current.windows.size()) >= cfg.max_windows) {
        throw UsageError("objective reported more than max_windows windows");
      }
      current.windows.push_back(score);
      const int w = static_cast<int>(current.windows.size()) - 1;
      if (w + 1 < cfg.max_windows &&
          median_prune_decision(current, result.trials, w, cfg.pruner) == PruneDecision::Prune) {
        current.status = TrialStatus::Pruned;
        return false;
      }
      return true;
    };

    try {
      const double final_score = objective(current.params, derive_seed(cfg.seed, 1000 + id), report);
      if (current.status == TrialStatus::Running) {
        if (!std::isfinite(final_score)) throw TrainingError("non-finite final score");
        current.status = TrialStatus::Complete;
        current.final_score = final_score;
      }
    } catch (const TrainingError& e) {
      current.status = TrialStatus::Failed;
      current.error = e.what();
    }
  }

  for (std::size_t i = 0; i < result.trials.size(); ++i) {
    const Trial& t = result.trials[i];
    if (t.status != TrialStatus::Complete) continue;
    if (result.best_trial < 0 || *t.final_score > *result.trials[result.best_trial].final_score) {
      result.best_trial = static_cast<int>(i);
    }
  }
  if (result.best_trial < 0) throw SearchError("no trial completed", result.trials);
  return result;
}

HyperParams apply_params(HyperParams h, const ParamSet& params) {
  for (const auto& [name, value] : params) {
    if (name == "lr") {
      h.set("lr_actor", value);
      h.set("lr_critic", value);
    } else {
      h.set(name, value);
    }
  }
  return h;
}

Objective rl_objective(AgentSpec base, ArmModel model, EnvConfig env, int episodes, int window) {
  if (episodes < 1 || window < 1) throw ConfigError("episodes and window must be >= 1");
  return [base = std::move(base), model = std::move(model), env = std::move(env), episodes, window](
             const ParamSet& params, std::uint64_t trial_seed, const Reporter& report) -> double {
    AgentSpec spec = base;
    spec.hyper = apply_params(spec.hyper, params);
    spec.validate();
    std::vector<double> returns;
    double last = 0.0;
    const auto res = train(spec, model, env, static_cast<long long>(episodes) * env.episode_len,
                           trial_seed, [&](const CurvePoint& p) {
                             returns.push_back(p.episode_return);
                             if (returns.size() % static_cast<std::size_t>(window) == 0) {
                               last = exact_sum(std::span(returns).last(window)) / window;
                               if (!report(last)) return false;
                             }
                             return static_cast<int>(returns.size()) < episodes;
                           });
    if (res.failure) throw TrainingError(*res.failure);
    return last;
  };
}

void write_trials_csv(std::ostream& out, const std::vector<Trial>& trials, int max_windows) {
  out << "trial_id";
  std::vector<std::string> names;
  if (!trials.empty()) {
    for (const auto& [name, _] : trials.front().params) names.push_back(name);
  }
  for (const auto& n : names) out << "," << n;
  for (int w = 1; w <= max_windows; ++w) out << ",window_" << w;
  out << ",status,final_score\n";
  for (const Trial& t : trials) {
    out << t.id;
    for (const auto& [_, v] : t.params) out << "," << v;
    for (int w = 0; w < max_windows; ++w) {
      out << ",";
      if (static_cast<std::size_t>(w) < t.windows.size()) out << round_trip(t.windows[w]);
    }
    out << "," << to_string(t.status) << ",";
    if (t.final_score) out << round_trip(*t.final_score);
    out << "\n";
  }
}

}  // namespace reach

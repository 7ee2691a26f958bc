#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "reach/config.hpp"
#include "reach/errors.hpp"
#include "reach/hpo.hpp"

using namespace reach;

namespace {

double value_of(const ParamSet& p, const std::string& name) {
  for (const auto& [k, v] : p)
    if (k == name) return std::stod(v);
  throw std::out_of_range(name);
}

SearchSpace synthetic_space() {
  SearchSpace s;
  s.add("x", Distribution::uniform(-5.0, 5.0));
  s.add("y", Distribution::uniform(-5.0, 5.0));
  s.add("width", Distribution::categorical({"32", "64", "128"}));
  return s;
}

// Known optimum at x = 1, y = -2, width = 64. Every window shifts all trials
// by the same amount, so window rankings equal the final ranking.
double true_score(const ParamSet& p) {
  const double x = value_of(p, "x"), y = value_of(p, "y");
  return -((x - 1) * (x - 1) + (y + 2) * (y + 2)) - (value_of(p, "width") == 64 ? 0.0 : 3.0);
}

Objective synthetic_objective(int windows) {
  return [windows](const ParamSet& p, std::uint64_t, const Reporter& report) {
    const double f = true_score(p);
    for (int w = 0; w < windows; ++w) {
      if (!report(f - 10.0 / (w + 1))) return 0.0;
    }
    return f;
  };
}

std::string table(const SearchResult& r, int max_windows) {
  std::ostringstream os;
  write_trials_csv(os, r.trials, max_windows);
  return os.str();
}

}  // namespace

TEST_CASE("median rule") {
  const std::vector<double> peers{-1.0, -2.0, -3.0};
  CHECK(median_prune_decision(-4.0, peers, 5) == PruneDecision::Prune);
  CHECK(median_prune_decision(-2.0, peers, 5) == PruneDecision::Keep);
  CHECK(median_prune_decision(-1.5, peers, 5) == PruneDecision::Keep);
  SUBCASE("warmup windows always keep") {
    CHECK(median_prune_decision(-100.0, peers, 0) == PruneDecision::Keep);
    CHECK(median_prune_decision(-100.0, peers, 1) == PruneDecision::Keep);
    CHECK(median_prune_decision(-100.0, peers, 2) == PruneDecision::Prune);
  }
  SUBCASE("too few peers keep") {
    const std::vector<double> two{-1.0, -2.0};
    CHECK(median_prune_decision(-100.0, two, 5) == PruneDecision::Keep);
    CHECK(median_prune_decision(-100.0, std::span<const double>{}, 5, {0, 0}) == PruneDecision::Keep);
    CHECK(median_prune_decision(-1.6, two, 5, {0, 2}) == PruneDecision::Prune);  // median of two is -1.5
    CHECK(median_prune_decision(-1.5, two, 5, {0, 2}) == PruneDecision::Keep);
  }
  SUBCASE("peer order does not matter") {
    std::vector<double> p{-0.3, -7.0, 2.0, -1.0, 4.5, -2.2};
    const auto ref = median_prune_decision(-0.9, p, 3);
    std::sort(p.begin(), p.end());
    do {
      CHECK(median_prune_decision(-0.9, p, 3) == ref);
    } while (std::next_permutation(p.begin(), p.end()));
  }
}

TEST_CASE("median rule over a trial history") {
  std::vector<Trial> history(4);
  for (int i = 0; i < 4; ++i) history[i].id = i;
  history[0].windows = {-1, -1, -1};
  history[1].windows = {-2, -2, -2};
  history[2].windows = {-3, -3};  // has not reached window 2
  history[3].windows = {-4, -4, -4};
  CHECK(median_prune_decision(history[3], history, 2, {0, 2}) == PruneDecision::Prune);
  CHECK(median_prune_decision(history[3], history, 2, {0, 3}) == PruneDecision::Keep);
  CHECK(median_prune_decision(history[1], history, 2, {0, 2}) == PruneDecision::Keep);
  CHECK_THROWS_AS(median_prune_decision(history[2], history, 2), UsageError);
}

TEST_CASE("a single trial is never pruned") {
  SearchConfig cfg;
  cfg.n_trials = 1;
  cfg.max_windows = 5;
  cfg.pruner = {0, 0};
  const auto r = run_search(synthetic_space(), synthetic_objective(5), cfg);
  REQUIRE(r.trials.size() == 1);
  CHECK(r.trials[0].status == TrialStatus::Complete);
  CHECK(r.best_trial == 0);
  CHECK(r.best_params() == r.trials[0].params);
}

TEST_CASE("a dominated second trial is pruned at its first eligible window") {
  SearchSpace space;
  space.add("unused", Distribution::uniform(0.0, 1.0));
  int call = 0;
  const Objective obj = [&](const ParamSet&, std::uint64_t, const Reporter& report) {
    const double offset = call++ == 0 ? 0.0 : -1.0;
    for (int w = 0; w < 6; ++w) {
      if (!report(-1.0 - w + offset)) return 0.0;
    }
    return -6.0 + offset;
  };
  SearchConfig cfg;
  cfg.n_trials = 2;
  cfg.max_windows = 6;
  cfg.pruner = {2, 1};
  const auto r = run_search(space, obj, cfg);
  CHECK(r.trials[0].status == TrialStatus::Complete);
  CHECK(r.trials[1].status == TrialStatus::Pruned);
  CHECK(r.trials[1].windows.size() == 3);
  CHECK_FALSE(r.trials[1].final_score.has_value());
  CHECK(r.best_trial == 0);
}

TEST_CASE("search recovers the known optimum of a synthetic objective") {
  SearchConfig cfg;
  cfg.n_trials = 100;
  cfg.max_windows = 10;
  cfg.seed = 2024;
  const SearchSpace space = synthetic_space();
  const auto r = run_search(space, synthetic_objective(10), cfg);
  REQUIRE(r.trials.size() == 100);

  // The best trial is the best sampled configuration under the true score.
  int argmax = 0;
  for (int i = 1; i < 100; ++i)
    if (true_score(r.trials[i].params) > true_score(r.trials[argmax].params)) argmax = i;
  CHECK(r.best_trial == argmax);
  const auto best = r.best_params();
  CHECK(std::abs(value_of(best, "x") - 1.0) < 1.0);
  CHECK(std::abs(value_of(best, "y") + 2.0) < 1.0);
  CHECK(value_of(best, "width") == 64);

  int pruned = 0;
  for (const Trial& t : r.trials) {
    if (t.status != TrialStatus::Pruned) continue;
    ++pruned;
    CHECK(t.windows.size() < 10u);
    // pruned at a window where it sat below the median of the trials before it
    const int w = static_cast<int>(t.windows.size()) - 1;
    std::vector<double> peers;
    for (const Trial& o : r.trials) {
      if (o.id < t.id && static_cast<int>(o.windows.size()) > w) peers.push_back(o.windows[w]);
    }
    CHECK(median_prune_decision(t.windows[w], peers, w, cfg.pruner) == PruneDecision::Prune);
    CHECK(true_score(t.params) < true_score(r.trials[r.best_trial].params));
  }
  CHECK(pruned >= 20);

  SUBCASE("seeded reruns reproduce the trial table") {
    const auto again = run_search(space, synthetic_objective(10), cfg);
    CHECK(table(again, 10) == table(r, 10));
    cfg.seed = 2025;
    CHECK(table(run_search(space, synthetic_objective(10), cfg), 10) != table(r, 10));
  }
}

TEST_CASE("trial seeds are distinct and stable") {
  std::vector<std::uint64_t> seeds;
  const Objective obj = [&](const ParamSet&, std::uint64_t s, const Reporter&) {
    seeds.push_back(s);
    return 0.0;
  };
  SearchConfig cfg;
  cfg.n_trials = 5;
  cfg.seed = 3;
  run_search(synthetic_space(), obj, cfg);
  run_search(synthetic_space(), obj, cfg);
  REQUIRE(seeds.size() == 10);
  CHECK(std::equal(seeds.begin(), seeds.begin() + 5, seeds.begin() + 5));
  std::sort(seeds.begin(), seeds.begin() + 5);
  CHECK(std::adjacent_find(seeds.begin(), seeds.begin() + 5) == seeds.begin() + 5);
}

TEST_CASE("failed trials and a search with no completed trial") {
  SearchConfig cfg;
  cfg.n_trials = 3;
  const Objective fail = [](const ParamSet&, std::uint64_t, const Reporter&) -> double {
    throw TrainingError("diverged");
  };
  try {
    run_search(synthetic_space(), fail, cfg);
    FAIL("expected SearchError");
  } catch (const SearchError& e) {
    REQUIRE(e.trials.size() == 3);
    for (const Trial& t : e.trials) {
      CHECK(t.status == TrialStatus::Failed);
      CHECK(t.error == "diverged");
    }
  }
  int n = 0;
  const Objective some = [&](const ParamSet&, std::uint64_t, const Reporter&) -> double {
    if (n++ == 1) throw TrainingError("nan");
    return static_cast<double>(n);
  };
  const auto r = run_search(synthetic_space(), some, cfg);
  CHECK(r.trials[1].status == TrialStatus::Failed);
  CHECK(r.best_trial == 2);
  CHECK_THROWS_AS(run_search(synthetic_space(), some, SearchConfig{0, 10, 0, {}}), ConfigError);
}

TEST_CASE("distributions") {
  CHECK(Distribution::parse("loguniform 1e-5 1e-2").kind == Distribution::Kind::LogUniform);
  const Distribution c = Distribution::parse("categorical 64 128 256");
  CHECK(c.values == std::vector<std::string>{"64", "128", "256"});
  for (const char* text : {"uniform 0.9 0.999", "loguniform 1e-05 0.01", "categorical 0 0.001 0.01"}) {
    const Distribution d = Distribution::parse(text);
    CHECK(Distribution::parse(d.to_string()).to_string() == d.to_string());
  }
  CHECK_THROWS_AS(Distribution::parse("normal 0 1"), ConfigError);
  CHECK_THROWS_AS(Distribution::parse("uniform 1"), ConfigError);
  CHECK_THROWS_AS(Distribution::parse("uniform 2 1").validate("p"), ConfigError);
  CHECK_THROWS_AS(Distribution::parse("loguniform 0 1").validate("p"), ConfigError);
  CHECK_THROWS_AS(Distribution::parse("uniform a b"), ConfigError);

  SearchSpace s;
  s.add("lr", Distribution::log_uniform(1e-5, 1e-2));
  CHECK_THROWS_AS(s.add("lr", Distribution::uniform(0, 1)), ConfigError);
  Rng rng(1);
  std::vector<double> draws;
  for (int i = 0; i < 4000; ++i) draws.push_back(value_of(s.sample(rng), "lr"));
  for (double v : draws) {
    CHECK(v >= 1e-5);
    CHECK(v <= 1e-2);
  }
  std::nth_element(draws.begin(), draws.begin() + 2000, draws.end());
  CHECK(std::abs(std::log10(draws[2000]) + 3.5) < 0.1);  // log-uniform median
}

TEST_CASE("search space from a config section and defaults") {
  const Config cfg = Config::parse(
      "schema_version = 1\n[hpo_space]\nlr = loguniform 1e-5 1e-2\nbatch = categorical 64 128 256\n");
  const SearchSpace s = SearchSpace::from_config(cfg, "hpo_space");
  REQUIRE(s.params().size() == 2);
  CHECK(s.params()[1].second.values.size() == 3);
  std::map<std::string, int> names;
  const SearchSpace td3 = SearchSpace::defaults(Algo::TD3);
  for (const auto& [n, _] : td3.params()) ++names[n];
  CHECK(names.count("lr"));
  CHECK(names.count("gamma"));
  CHECK(names.count("tau"));
  CHECK(names.count("batch"));
  CHECK(SearchSpace::defaults(Algo::PPO).params().size() >= 3);
}

TEST_CASE("apply_params") {
  const HyperParams h = apply_params(HyperParams::defaults(Algo::SAC), {{"lr", "0.001"}, {"batch", "64"}});
  CHECK(h.lr_actor == 0.001);
  CHECK(h.lr_critic == 0.001);
  CHECK(h.batch == 64);
  CHECK_THROWS_AS(apply_params(h, {{"nonsense", "1"}}), ConfigError);
}

TEST_CASE("trial table layout") {
  std::vector<Trial> trials(2);
  trials[0] = {0, {{"lr", "0.001"}}, {-1.5, -1.25}, TrialStatus::Complete, -1.25, ""};
  trials[1] = {1, {{"lr", "0.01"}}, {-3.0}, TrialStatus::Pruned, std::nullopt, ""};
  std::ostringstream os;
  write_trials_csv(os, trials, 2);
  CHECK(os.str() ==
        "trial_id,lr,window_1,window_2,status,final_score\n"
        "0,0.001,-1.5,-1.25,complete,-1.25\n"
        "1,0.01,-3,,pruned,\n");
}

TEST_CASE("reinforcement-learning objective reports windowed returns") {
  AgentSpec base = AgentSpec::from_label("TD3");
  base.hyper.hidden_width = 16;
  base.hyper.learning_starts = 200;
  base.hyper.batch = 32;
  const Objective obj = rl_objective(base, ArmModel::default_model(), EnvConfig::env1(), 6, 3);
  SearchSpace space;
  space.add("lr", Distribution::log_uniform(1e-4, 1e-3));
  SearchConfig cfg;
  cfg.n_trials = 2;
  cfg.max_windows = 2;
  const auto r = run_search(space, obj, cfg);
  for (const Trial& t : r.trials) {
    CHECK(t.status == TrialStatus::Complete);
    REQUIRE(t.windows.size() == 2);
    CHECK(*t.final_score == t.windows[1]);
    CHECK(t.windows[0] < 0.0);
  }
  CHECK(table(run_search(space, obj, cfg), 2) == table(r, 2));
}

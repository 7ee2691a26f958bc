#include "reach/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "reach/bench.hpp"
#include "reach/errors.hpp"
#include "reach/hpo.hpp"
#include "reach/report.hpp"

namespace reach {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::optional<int> seeds;
  std::optional<int> episodes;
  std::string out;
  std::string from;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

void write_manifest(const fs::path& path, ordered_json m, const std::vector<std::string>& files) {
  std::vector<std::string> all = files;
  all.emplace_back("manifest.json");
  m["files"] = all;
  write_text(path, m.dump(2) + "\n");
}

// Adds files to an existing manifest.json written by a library routine.
void extend_manifest(const fs::path& path, const std::vector<std::string>& extra) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  ordered_json m = ordered_json::parse(in);
  in.close();
  for (const auto& f : extra) m["files"].push_back(f);
  write_text(path, m.dump(2) + "\n");
}

std::string agent_label(const Config& cfg) { return cfg.get_string("agent.algo", "TD3"); }

ArmModel arm_from(const Config& cfg) {
  const std::string file = cfg.get_string("arm.file", "");
  return file.empty() ? ArmModel::default_model() : ArmModel::load(file);
}

int cmd_train(const Options& o, std::ostream& out) {
  Config cfg = layered_config(o.config, o.sets);
  if (o.seed) cfg.set("train.seed", std::to_string(*o.seed));
  const ArmModel model = arm_from(cfg);
  const EnvConfig env = EnvConfig::from_config(cfg);
  const AgentSpec spec = agent_from_config(cfg, agent_label(cfg));
  env_for(spec, env).validate(model);
  const long long steps = cfg.get_int("train.total_timesteps", 200000);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
  const int episodes = static_cast<int>(cfg.get_int("train.eval_episodes", 0));
  if (steps < 0 || episodes < 0) throw ConfigError("train.total_timesteps and train.eval_episodes must be >= 0");
  const fs::path dir = default_output("train", o.out);

  fs::create_directories(dir);
  write_text(dir / "config.ini", cfg.to_ini());
  const RunArtifacts run =
      run_single(spec, model, env, steps, seed, episodes, kDefaultThresholds, dir, cfg.hash_hex());
  extend_manifest(dir / "manifest.json", {"config.ini"});
  out << ordered_json{{"command", "train"}, {"output", dir.string()}, {"timesteps", steps},
                      {"episodes", run.curve.size()}, {"status", run.failure ? "failed" : "ok"}}
             .dump()
      << "\n";
  if (run.failure) throw TrainingError(*run.failure);
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  if (o.from.empty()) throw ConfigError("evaluate needs --from <run directory>");
  const fs::path from = o.from;
  const fs::path config_path = o.config.empty() ? from / "config.ini" : fs::path(o.config);
  Config cfg = layered_config(config_path, o.sets);
  if (o.seed) cfg.set("eval.seed", std::to_string(*o.seed));
  if (o.episodes) cfg.set("eval.episodes", std::to_string(*o.episodes));
  const ArmModel model = arm_from(cfg);
  const EnvConfig env = EnvConfig::from_config(cfg);
  const AgentSpec spec = agent_from_config(cfg, agent_label(cfg));
  const int episodes = static_cast<int>(cfg.get_int("eval.episodes", 100));
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("eval.seed", 0));
  const auto thresholds = cfg.get_doubles("eval.thresholds", kDefaultThresholds);
  if (episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  compute_report({}, thresholds);  // validates the thresholds
  const fs::path dir = default_output("evaluate", o.out);

  auto agent = make_agent(spec, env_for(spec, env).obs_dim(), seed);
  agent->load(from);
  fs::create_directories(dir);
  const Evaluation ev = evaluate(*agent, model, env, episodes, thresholds, seed);
  std::string lines;
  for (std::size_t i = 0; i < ev.logs.size(); ++i) {
    lines += ordered_json{{"episode", i},
                          {"return", episode_return(ev.logs[i])},
                          {"length", ev.logs[i].length()},
                          {"final_distance", ev.logs[i].distances.back()},
                          {"rewards", ev.logs[i].rewards},
                          {"distances", ev.logs[i].distances}}
                 .dump() +
             "\n";
  }
  write_text(dir / "eval.jsonl", lines);
  BenchRow row{env.id(), spec.label(), ev.report, 0.0, 1, {}};
  const Table table = render_table({row}, thresholds);
  write_text(dir / "report.csv", table.csv);
  write_text(dir / "config.ini", cfg.to_ini());
  write_manifest(dir / "manifest.json",
                 {{"command", "evaluate"}, {"config_hash", cfg.hash_hex()}, {"seed", seed},
                  {"checkpoint", fs::absolute(from).string()}, {"episodes", episodes}},
                 {"eval.jsonl", "report.csv", "config.ini"});
  out << table.text;
  return kExitOk;
}

int cmd_hpo(const Options& o, std::ostream& out) {
  Config cfg = layered_config(o.config, o.sets);
  if (o.seed) cfg.set("hpo.seed", std::to_string(*o.seed));
  const ArmModel model = arm_from(cfg);
  const EnvConfig env = EnvConfig::from_config(cfg);
  const AgentSpec spec = agent_from_config(cfg, agent_label(cfg));
  env_for(spec, env).validate(model);
  const SearchSpace space = cfg.keys("hpo_space").empty() ? SearchSpace::defaults(spec.algo)
                                                         : SearchSpace::from_config(cfg, "hpo_space");
  SearchConfig sc;
  sc.n_trials = static_cast<int>(cfg.get_int("hpo.n_trials", 100));
  sc.seed = static_cast<std::uint64_t>(cfg.get_int("hpo.seed", 0));
  sc.pruner.warmup_windows = static_cast<int>(cfg.get_int("hpo.warmup_windows", 2));
  sc.pruner.min_peers = static_cast<int>(cfg.get_int("hpo.min_peers", 3));
  const int episodes = static_cast<int>(cfg.get_int("hpo.episodes_per_trial", 100));
  const int window = static_cast<int>(cfg.get_int("hpo.window", 10));
  if (window < 1 || episodes < window) throw ConfigError("hpo: need 1 <= window <= episodes_per_trial");
  sc.max_windows = episodes / window;
  const auto objective = rl_objective(spec, model, env, episodes, window);
  const fs::path dir = default_output("hpo", o.out);
  fs::create_directories(dir);

  std::vector<Trial> trials;
  std::optional<SearchResult> result;
  std::string failure;
  try {
    result = run_search(space, objective, sc);
    trials = result->trials;
  } catch (const SearchError& e) {
    trials = e.trials;
    failure = e.what();
  }
  std::ostringstream csv;
  write_trials_csv(csv, trials, sc.max_windows);
  write_text(dir / "trials.csv", csv.str());
  std::vector<std::string> files{"trials.csv"};
  ordered_json m{{"command", "hpo"}, {"config_hash", cfg.hash_hex()}, {"seed", sc.seed}, {"algo", spec.label()}};
  if (result) {
    Config best = cfg;
    for (const auto& [k, v] : result->best_params()) {
      if (k == "lr") {
        best.set("agent.lr_actor", v);
        best.set("agent.lr_critic", v);
      } else {
        best.set("agent." + k, v);
      }
    }
    write_text(dir / "best.ini", best.to_ini());
    files.emplace_back("best.ini");
    m["best_trial"] = result->best_trial;
    m["best_score"] = *result->trials[result->best_trial].final_score;
  } else {
    m["error"] = failure;
  }
  write_manifest(dir / "manifest.json", m, files);
  out << ordered_json{{"command", "hpo"}, {"output", dir.string()}, {"trials", trials.size()},
                      {"best_trial", result ? result->best_trial : -1}}
             .dump()
      << "\n";
  if (!result) throw SearchError(failure, trials);
  return kExitOk;
}

int cmd_bench(const Options& o, std::ostream& out) {
  Config cfg = layered_config(o.config, o.sets);
  if (o.seeds) cfg.set("bench.n_seeds", std::to_string(*o.seeds));
  if (o.seed) cfg.set("bench.seed", std::to_string(*o.seed));
  const fs::path dir = default_output("bench", o.out);
  cfg.set("bench.output_dir", dir.string());
  ExperimentConfig ec = ExperimentConfig::from_config(cfg);
  const ArmModel model = ec.arm_file.empty() ? ArmModel::default_model() : ArmModel::load(ec.arm_file);
  for (const auto& env : ec.envs) {
    for (const auto& a : ec.agents) env_for(a, env).validate(model);
  }
  fs::create_directories(dir);
  write_text(dir / "config.ini", cfg.to_ini());
  const BenchmarkResult res = run_benchmark(ec, cfg.hash_hex());
  extend_manifest(dir / "manifest.json", {"config.ini"});
  out << render_table(res.rows, ec.thresholds).text;
  for (const auto& row : res.rows) {
    for (const auto& w : row.warnings) out << "warning: " << row.env << " " << row.algo << ": " << w << "\n";
  }
  return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.from.empty()) throw ConfigError("report needs --from <benchmark directory>");
  const fs::path from = o.from;
  if (!fs::exists(from / "benchmark.csv")) throw ConfigError("no benchmark.csv under " + from.string());
  const fs::path dir = o.out.empty() ? from / "report" : fs::path(o.out);
  const auto files = regenerate_report(from, dir);
  write_manifest(dir / "manifest.json", {{"command", "report"}, {"from", fs::absolute(from).string()}}, files);
  std::ifstream table(dir / "benchmark.txt");
  out << table.rdbuf();
  return kExitOk;
}

void error_line(std::ostream& err, const std::string& kind, const std::string& message) {
  err << ordered_json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

Config layered_config(const fs::path& path, const std::vector<std::string>& overrides) {
  if (path.empty()) throw ConfigError("--config is required");
  Config cfg = Config::load(path);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

fs::path default_output(const std::string& subcommand, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* root = std::getenv(kOutputRootVar); root && *root) return fs::path(root) / subcommand;
  return fs::path("runs") / subcommand;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Benchmark of RL agents on a 6-joint reaching task", "reachbench"};
  app.require_subcommand(1);
  Options o;
  long long seed = 0;
  int seeds = 0;
  int episodes = 0;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "INI config file");
    if (config_required) c->required();
    sub->add_option("--set", o.sets, "override, section.key=value (repeatable)");
    sub->add_option("--seed", seed, "seed");
    sub->add_option("--out", o.out, std::string("output directory (default $") + kOutputRootVar + "/<command>)");
  };
  auto* train = app.add_subcommand("train", "train one agent and checkpoint it");
  add_common(train, true);
  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(eval, false);
  eval->add_option("--from", o.from, "run directory holding the checkpoint")->required();
  eval->add_option("--episodes", episodes, "evaluation episodes");
  auto* hpo = app.add_subcommand("hpo", "median-pruned random hyperparameter search");
  add_common(hpo, true);
  auto* bench = app.add_subcommand("bench", "multi-seed benchmark with tables and figures");
  add_common(bench, true);
  bench->add_option("--seeds", seeds, "number of seeds")->check(CLI::PositiveNumber);
  auto* report = app.add_subcommand("report", "regenerate tables and figures from a benchmark");
  report->add_option("--from", o.from, "benchmark directory")->required();
  report->add_option("--out", o.out, "output directory (default <from>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  auto given = [sub](const char* name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--seed")) o.seed = seed;
  if (given("--seeds")) o.seeds = seeds;
  if (given("--episodes")) o.episodes = episodes;

  try {
    if (sub == train) return cmd_train(o, out);
    if (sub == eval) return cmd_evaluate(o, out);
    if (sub == hpo) return cmd_hpo(o, out);
    if (sub == bench) return cmd_bench(o, out);
    return cmd_report(o, out);
  } catch (const ConfigError& e) {
    error_line(err, "config", e.what());
    return kExitUsage;
  } catch (const UsageError& e) {
    error_line(err, "usage", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    error_line(err, "runtime", e.what());
    return kExitRuntime;
  }
}

}  // namespace reach

#include "reach/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "reach/config.hpp"
#include "reach/errors.hpp"
#include "reach/report.hpp"

namespace reach {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kEvalStream = 5;

std::string round_trip(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

ordered_json env_json(const EnvConfig& c) {
  ordered_json j;
  j["id"] = c.id();
  j["fixed_goal"] = {c.fixed_goal.x, c.fixed_goal.y, c.fixed_goal.z};
  j["episode_len"] = c.episode_len;
  j["termination_eps"] = c.termination_eps;
  j["delta_max"] = c.delta_max;
  j["initial_angles"] = c.initial_angles;
  j["goal_conditioned"] = c.goal_conditioned;
  j["actuator_resolution"] = c.noise ? c.noise->actuator_resolution : 0.0;
  j["action_noise_std"] = c.noise ? c.noise->action_noise_std : 0.0;
  const auto& r = c.region;
  j["region"] = {{"lo", {r.box_lo.x(), r.box_lo.y(), r.box_lo.z()}},
                 {"hi", {r.box_hi.x(), r.box_hi.y(), r.box_hi.z()}},
                 {"radius", {r.min_radius, r.max_radius}}};
  return j;
}

ordered_json report_json(const EvalReport& r) {
  ordered_json j;
  j["average_return"] = r.average_return;
  j["train_walltime_s"] = r.train_walltime_s;
  j["episodes"] = r.episodes;
  j["thresholds"] = r.thresholds;
  j["success_ratio"] = r.success_ratio;
  ordered_json rt = ordered_json::array();
  for (const auto& t : r.reach_time) rt.push_back(t ? ordered_json(*t) : ordered_json(nullptr));
  j["reach_time"] = rt;
  return j;
}

EvalReport report_from_json(const ordered_json& j) {
  EvalReport r;
  r.average_return = j.at("average_return").get<double>();
  r.train_walltime_s = j.at("train_walltime_s").get<double>();
  r.episodes = j.at("episodes").get<int>();
  r.thresholds = j.at("thresholds").get<std::vector<double>>();
  r.success_ratio = j.at("success_ratio").get<std::vector<double>>();
  for (const auto& t : j.at("reach_time")) {
    r.reach_time.push_back(t.is_null() ? std::nullopt : std::optional<double>(t.get<double>()));
  }
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

void check_thresholds(const std::vector<double>& th) {
  if (th.empty()) throw ConfigError("at least one threshold is required");
  for (std::size_t i = 0; i < th.size(); ++i) {
    if (!(th[i] > 0.0)) throw ConfigError("thresholds must be positive");
    if (i > 0 && !(th[i] < th[i - 1])) throw ConfigError("thresholds must be strictly decreasing");
  }
}

double mean_of(const std::vector<double>& v) { return exact_sum(v) / static_cast<double>(v.size()); }

double population_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  std::vector<double> sq;
  sq.reserve(v.size());
  for (double x : v) sq.push_back((x - m) * (x - m));
  return std::sqrt(exact_sum(sq) / static_cast<double>(v.size()));
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string safe_label(std::string s) {
  std::replace(s.begin(), s.end(), '+', '_');
  return s;
}

}  // namespace

EvalReport compute_report(const std::vector<EpisodeLog>& logs, const std::vector<double>& thresholds) {
  check_thresholds(thresholds);
  EvalReport r;
  r.thresholds = thresholds;
  r.episodes = static_cast<int>(logs.size());
  if (logs.empty()) {
    r.success_ratio.assign(thresholds.size(), 0.0);
    r.reach_time.assign(thresholds.size(), std::nullopt);
    return r;
  }
  std::vector<double> returns;
  for (const auto& log : logs) returns.push_back(episode_return(log));
  r.average_return = mean_of(returns);
  const auto n = static_cast<double>(logs.size());
  for (double x : thresholds) {
    int hits = 0;
    long long first_sum = 0;
    for (const auto& log : logs) {
      if (log.distances.empty() || !(log.distances.back() < x)) continue;
      ++hits;
      const auto it = std::find_if(log.distances.begin(), log.distances.end(), [x](double d) { return d < x; });
      first_sum += (it - log.distances.begin()) + 1;
    }
    r.success_ratio.push_back(hits / n);
    r.reach_time.push_back(hits ? std::optional<double>(static_cast<double>(first_sum) / hits) : std::nullopt);
  }
  return r;
}

Evaluation evaluate(Agent& agent, const ArmModel& model, const EnvConfig& env, int episodes,
                    const std::vector<double>& thresholds, std::uint64_t seed) {
  if (episodes < 0) throw UsageError("episodes must be >= 0");
  EnvConfig cfg = env_for(agent.spec(), env);
  cfg.seed = derive_seed(seed, kEvalStream);
  ReachEnv e(model, cfg);
  Evaluation out;
  for (int ep = 0; ep < episodes; ++ep) {
    EpisodeLog log;
    auto obs = e.reset();
    while (!e.finished()) {
      const auto r = e.step(agent.act(flatten(obs, cfg.goal_conditioned), ActMode::Exploit));
      log.rewards.push_back(r.reward);
      log.distances.push_back(r.distance);
      obs = r.obs;
    }
    out.logs.push_back(std::move(log));
  }
  out.report = compute_report(out.logs, thresholds);
  return out;
}

std::vector<double> smooth_curve(const std::vector<double>& series, int window) {
  if (window < 1) throw UsageError("smoothing window must be >= 1");
  std::vector<double> out;
  out.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
    out.push_back(exact_sum(std::span(series).subspan(lo, i + 1 - lo)) / static_cast<double>(i + 1 - lo));
  }
  return out;
}

std::vector<CurveBucket> aggregate_curves(const std::vector<LearningCurve>& per_seed, long long bucket) {
  if (bucket < 1) throw UsageError("bucket width must be >= 1");
  // bucket index -> per-seed bucket means
  std::map<long long, std::vector<double>> cells;
  for (const auto& curve : per_seed) {
    std::map<long long, std::vector<double>> mine;
    for (const auto& p : curve) {
      const long long b = p.timestep <= 0 ? 0 : (p.timestep - 1) / bucket;
      mine[b].push_back(p.episode_return);
    }
    for (const auto& [b, values] : mine) cells[b].push_back(mean_of(values));
  }
  std::vector<CurveBucket> out;
  for (const auto& [b, values] : cells) {
    out.push_back({(b + 1) * bucket, mean_of(values), population_std(values), static_cast<int>(values.size())});
  }
  return out;
}

AgentSpec agent_from_config(const Config& cfg, const std::string& label) {
  AgentSpec spec = AgentSpec::from_label(label);
  spec.hyper.apply(cfg, "agent");
  spec.hyper.apply(cfg, std::string("agent_") + to_string(spec.algo));
  if (spec.her) spec.hyper.apply(cfg, "agent_" + label);
  if (spec.her) {
    for (const std::string& section : {std::string("agent"), "agent_" + label}) {
      if (cfg.has(section + ".her_strategy")) {
        spec.her->strategy = parse_her_strategy(cfg.get_string(section + ".her_strategy", ""));
      }
      if (cfg.has(section + ".her_k")) spec.her->k = static_cast<int>(cfg.get_int(section + ".her_k", 4));
    }
  }
  spec.validate();
  return spec;
}

ExperimentConfig ExperimentConfig::from_config(const Config& cfg) {
  ExperimentConfig e;
  const auto env_ids = cfg.get_strings("bench.envs", {cfg.get_string("env.id", "Env1")});
  e.envs.clear();
  for (const auto& id : env_ids) {
    Config c = cfg;
    c.set("env.id", id);
    e.envs.push_back(EnvConfig::from_config(c));
  }
  for (const auto& label : cfg.get_strings("bench.agents", {"TD3"})) {
    e.agents.push_back(agent_from_config(cfg, label));
  }
  e.arm_file = cfg.get_string("arm.file", "");
  e.total_timesteps = cfg.get_int("bench.total_timesteps", e.total_timesteps);
  e.n_seeds = static_cast<int>(cfg.get_int("bench.n_seeds", e.n_seeds));
  e.base_seed = static_cast<std::uint64_t>(cfg.get_int("bench.seed", 0));
  e.eval_episodes = static_cast<int>(cfg.get_int("bench.eval_episodes", e.eval_episodes));
  e.thresholds = cfg.get_doubles("bench.thresholds", e.thresholds);
  e.smoothing_window = static_cast<int>(cfg.get_int("bench.smoothing_window", e.smoothing_window));
  e.bucket = cfg.get_int("bench.bucket", e.bucket);
  e.output_dir = cfg.get_string("bench.output_dir", e.output_dir.string());
  e.resume = cfg.get_bool("bench.resume", false);
  e.validate();
  return e;
}

void ExperimentConfig::validate() const {
  if (envs.empty()) throw ConfigError("bench: no environments");
  if (agents.empty()) throw ConfigError("bench: no agents");
  if (total_timesteps < 1) throw ConfigError("bench.total_timesteps must be >= 1");
  if (n_seeds < 1) throw ConfigError("bench.n_seeds must be >= 1");
  if (eval_episodes < 1) throw ConfigError("bench.eval_episodes must be >= 1");
  if (smoothing_window < 1) throw ConfigError("bench.smoothing_window must be >= 1");
  if (bucket < 1) throw ConfigError("bench.bucket must be >= 1");
  check_thresholds(thresholds);
  for (const auto& a : agents) a.validate();
}

RunArtifacts run_single(const AgentSpec& spec, const ArmModel& model, const EnvConfig& env,
                        long long total_timesteps, std::uint64_t seed, int eval_episodes,
                        const std::vector<double>& thresholds, const fs::path& dir,
                        const std::string& config_hash) {
  fs::create_directories(dir);
  RunArtifacts run;
  run.dir = dir;
  TrainResult res = train(spec, model, env, total_timesteps, seed);
  run.curve = res.curve;
  run.failure = res.failure;

  std::ostringstream curve_csv;
  curve_csv << "timestep,episode_return\n";
  for (const auto& p : res.curve) curve_csv << p.timestep << "," << round_trip(p.episode_return) << "\n";
  write_text(dir / "curve.csv", curve_csv.str());
  run.files.push_back("curve.csv");

  if (!res.failure) {
    for (const auto& f : res.agent->save(dir)) run.files.push_back(f);
  }
  if (!res.failure && eval_episodes > 0) {
    Evaluation ev = evaluate(*res.agent, model, env, eval_episodes, thresholds, seed);
    ev.report.train_walltime_s = res.walltime_s;
    run.report = ev.report;
    std::ostringstream lines;
    for (std::size_t i = 0; i < ev.logs.size(); ++i) {
      ordered_json j;
      j["episode"] = i;
      j["return"] = episode_return(ev.logs[i]);
      j["length"] = ev.logs[i].length();
      j["final_distance"] = ev.logs[i].distances.back();
      j["rewards"] = ev.logs[i].rewards;
      j["distances"] = ev.logs[i].distances;
      lines << j.dump() << "\n";
    }
    write_text(dir / "eval.jsonl", lines.str());
    write_text(dir / "report.json", report_json(run.report).dump(2) + "\n");
    run.files.push_back("eval.jsonl");
    run.files.push_back("report.json");
  }

  ordered_json m;
  m["algo"] = spec.label();
  ordered_json hyper;
  for (const auto& [k, v] : spec.hyper.fields()) hyper[k] = v;
  m["hyper"] = hyper;
  if (spec.her) m["her"] = {{"strategy", to_string(spec.her->strategy)}, {"k", spec.her->k}};
  const ordered_json ej = env_json(env_for(spec, env));
  m["env"] = ej;
  m["env_config_hash"] = hex64(fnv1a64(ej.dump()));
  if (!config_hash.empty()) m["config_hash"] = config_hash;
  m["seed"] = seed;
  m["timesteps"] = res.timesteps;
  m["train_walltime_s"] = res.walltime_s;
  m["status"] = res.failure ? "failed" : "ok";
  if (res.failure) m["failure"] = *res.failure;
  run.files.push_back("manifest.json");
  m["files"] = run.files;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  return run;
}

BenchRow aggregate_reports(const std::string& env, const std::string& algo,
                           const std::vector<EvalReport>& reports) {
  BenchRow row;
  row.env = env;
  row.algo = algo;
  row.seeds = static_cast<int>(reports.size());
  if (reports.empty()) {
    row.warnings.push_back("no surviving seeds");
    return row;
  }
  EvalReport& out = row.report;
  out.thresholds = reports.front().thresholds;
  std::vector<double> returns, walls;
  for (const auto& r : reports) {
    if (r.thresholds != out.thresholds) throw DataError("reports use different thresholds");
    returns.push_back(r.average_return);
    walls.push_back(r.train_walltime_s);
    out.episodes += r.episodes;
  }
  out.average_return = mean_of(returns);
  out.train_walltime_s = mean_of(walls);
  row.return_std = population_std(returns);
  for (std::size_t k = 0; k < out.thresholds.size(); ++k) {
    std::vector<double> succ, reach;
    for (const auto& r : reports) {
      succ.push_back(r.success_ratio[k]);
      if (r.reach_time[k]) reach.push_back(*r.reach_time[k]);
    }
    out.success_ratio.push_back(mean_of(succ));
    out.reach_time.push_back(reach.empty() ? std::nullopt : std::optional<double>(mean_of(reach)));
  }
  return row;
}

BenchmarkResult run_benchmark(const ExperimentConfig& cfg, const std::string& config_hash) {
  cfg.validate();
  const ArmModel model = cfg.arm_file.empty() ? ArmModel::default_model() : ArmModel::load(cfg.arm_file);
  const fs::path& root = cfg.output_dir;
  fs::create_directories(root);
  BenchmarkResult result;
  std::vector<CurveRecord> curves;

  for (const auto& env : cfg.envs) {
    for (const auto& spec : cfg.agents) {
      std::vector<EvalReport> reports;
      std::vector<LearningCurve> smoothed;
      std::vector<std::string> warnings;
      for (int s = 0; s < cfg.n_seeds; ++s) {
        const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(s);
        const fs::path rel = fs::path(env.id()) / safe_label(spec.label()) / seed_dir(seed);
        const fs::path dir = root / rel;
        RunArtifacts run;
        if (cfg.resume && fs::exists(dir / "report.json") && fs::exists(dir / "manifest.json")) {
          std::ifstream rin(dir / "report.json");
          run.report = report_from_json(ordered_json::parse(rin));
          std::ifstream min(dir / "manifest.json");
          const ordered_json manifest = ordered_json::parse(min);
          for (const auto& f : manifest.at("files")) run.files.push_back(f.get<std::string>());
          run.curve = read_curve_csv(dir / "curve.csv");
        } else {
          run = run_single(spec, model, env, cfg.total_timesteps, seed, cfg.eval_episodes, cfg.thresholds,
                           dir, config_hash);
        }
        for (const auto& f : run.files) result.files.push_back((rel / f).generic_string());
        if (run.failure) {
          warnings.push_back("seed " + std::to_string(seed) + " failed: " + *run.failure);
          continue;
        }
        reports.push_back(run.report);
        std::vector<double> values;
        for (const auto& p : run.curve) values.push_back(p.episode_return);
        values = smooth_curve(values, cfg.smoothing_window);
        LearningCurve sm = run.curve;
        for (std::size_t i = 0; i < sm.size(); ++i) sm[i].episode_return = values[i];
        smoothed.push_back(std::move(sm));
      }
      BenchRow row = aggregate_reports(env.id(), spec.label(), reports);
      row.warnings.insert(row.warnings.end(), warnings.begin(), warnings.end());
      result.rows.push_back(std::move(row));
      curves.push_back({env.id(), spec.label(), aggregate_curves(smoothed, cfg.bucket)});
    }
  }

  const Table table = render_table(result.rows, cfg.thresholds);
  write_text(root / "benchmark.csv", table.csv);
  write_text(root / "benchmark.txt", table.text);
  std::ostringstream curves_csv;
  write_curves_csv(curves_csv, curves);
  write_text(root / "curves.csv", curves_csv.str());

  ordered_json agg = ordered_json::array();
  for (const auto& row : result.rows) {
    ordered_json j = report_json(row.report);
    j = {{"env", row.env}, {"algo", row.algo}, {"seeds", row.seeds}, {"return_std", row.return_std},
         {"report", j}, {"warnings", row.warnings}};
    agg.push_back(j);
  }
  write_text(root / "aggregate.json", agg.dump(2) + "\n");
  for (const char* f : {"benchmark.csv", "benchmark.txt", "curves.csv", "aggregate.json"}) {
    result.files.emplace_back(f);
  }
  for (const auto& f : write_figures(curves, root, cfg.smoothing_window)) result.files.push_back(f);

  ordered_json m;
  if (!config_hash.empty()) m["config_hash"] = config_hash;
  m["base_seed"] = cfg.base_seed;
  m["n_seeds"] = cfg.n_seeds;
  m["total_timesteps"] = cfg.total_timesteps;
  m["eval_episodes"] = cfg.eval_episodes;
  m["smoothing_window"] = cfg.smoothing_window;
  m["thresholds"] = cfg.thresholds;
  result.files.emplace_back("manifest.json");
  m["files"] = result.files;
  write_text(root / "manifest.json", m.dump(2) + "\n");
  return result;
}

}  // namespace reach

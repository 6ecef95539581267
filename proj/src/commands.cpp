#include "acd/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "acd/eval.hpp"
#include "acd/graph.hpp"
#include "acd/policy.hpp"

namespace acd {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Reads keys from one JSON object and rejects anything it did not consume.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& target) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      target = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + where(key) + "' has the wrong type");
    }
  }

  void mark(const char* key) { seen_.insert(key); }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return Section(empty, where(key));
    return Section(*it, where(key));
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + where(item.key()) + "'");
    }
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

EstimatorConfig read_estimator(Section s) {
  EstimatorConfig e;
  std::string kind = to_string(e.kind);
  s.read("kind", kind);
  try {
    e.kind = estimator_kind_from_string(kind);
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  s.read("endpoint", e.endpoint);
  s.read("connections", e.connections);
  s.read("fallback_to_conjugate", e.fallback_to_conjugate);
  Section prior = s.child("prior");
  prior.read("mean", e.prior.mean);
  prior.read("precision", e.prior.precision);
  prior.read("shape", e.prior.shape);
  prior.read("rate", e.prior.rate);
  prior.finish();
  Section mlp = s.child("mlp");
  mlp.read("hidden_width", e.mlp.hidden_width);
  mlp.read("steps", e.mlp.steps);
  mlp.read("step_size", e.mlp.step_size);
  mlp.read("seed", e.mlp.seed);
  mlp.finish();
  s.finish();
  return e;
}

ordered_json write_estimator(const EstimatorConfig& e) {
  ordered_json j;
  j["kind"] = to_string(e.kind);
  j["endpoint"] = e.endpoint;
  j["connections"] = e.connections;
  j["fallback_to_conjugate"] = e.fallback_to_conjugate;
  j["prior"] = {{"mean", e.prior.mean}, {"precision", e.prior.precision}, {"shape", e.prior.shape},
                {"rate", e.prior.rate}};
  j["mlp"] = {{"hidden_width", e.mlp.hidden_width},
              {"steps", e.mlp.steps},
              {"step_size", e.mlp.step_size},
              {"seed", e.mlp.seed}};
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

fs::path prepare_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("output directory must not be empty");
  const fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory '" + cfg.out + "': " + ec.message());
  }
  return dir;
}

std::string echo_config(const fs::path& dir, const RunConfig& cfg, const std::string& command) {
  ordered_json j;
  j["command"] = command;
  j["config"] = config_to_json(cfg);
  const auto path = dir / "config.json";
  write_text(path, j.dump(2) + "\n");
  return path.string();
}

ScmSpec synthetic_scm(const RunConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x67726170ULL}));
  const auto graph = sample_er_graph(cfg.d, cfg.e, rng);
  ScmSpec scm = sample_scm(graph, cfg.mechanism, rng);
  scm.seed = seed;
  return scm;
}

Dataset synthetic_data(const RunConfig& cfg, const ScmSpec& scm, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x64617461ULL}));
  return generate_dataset(scm, cfg.n, rng);
}

DirectedGraph load_truth(const std::string& path, int d) {
  if (!fs::exists(path)) throw ConfigError("truth file '" + path + "' does not exist");
  DirectedGraph g = load_edge_list(path);
  if (g.size() != d) {
    throw ConfigError("truth file '" + path + "' has d=" + std::to_string(g.size()) + " but the data has " +
                      std::to_string(d) + " columns");
  }
  return g;
}

Dataset load_data(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("data file '" + path + "' does not exist");
  return load_csv(path);
}

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  Section root(j, "");
  root.read("seed", cfg.seed);
  root.read("jobs", cfg.jobs);
  root.read("out", cfg.out);

  Section scm = root.child("scm");
  scm.read("d", cfg.d);
  scm.read("e", cfg.e);
  scm.read("n", cfg.n);
  std::string mech = to_string(cfg.mechanism.kind);
  scm.read("mechanism", mech);
  try {
    cfg.mechanism.kind = mechanism_kind_from_string(mech);
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  scm.read("hidden_width", cfg.mechanism.hidden_width);
  scm.read("weight_scale", cfg.mechanism.weight_scale);
  scm.read("noise_min", cfg.mechanism.noise_min);
  scm.read("noise_max", cfg.mechanism.noise_max);
  scm.read("pilot_samples", cfg.mechanism.pilot_samples);
  scm.read("standardize", cfg.mechanism.standardize);
  scm.read("path", cfg.scm);
  scm.finish();

  Section score = root.child("score");
  if (score.has("lambda")) {
    double lambda = 0.0;
    score.read("lambda", lambda);
    cfg.score.lambda = lambda;
  } else {
    score.mark("lambda");
  }
  score.read("split_fraction", cfg.score.split_fraction);
  score.finish();

  cfg.score.estimator = read_estimator(root.child("estimator"));

  Section ppo = root.child("ppo");
  ppo.read("iterations", cfg.ppo.iterations);
  ppo.read("samples_per_iter", cfg.ppo.samples_per_iter);
  ppo.read("clip_epsilon", cfg.ppo.clip_epsilon);
  ppo.read("learning_rate", cfg.ppo.learning_rate);
  ppo.read("update_epochs", cfg.ppo.update_epochs);
  ppo.read("baseline_decay", cfg.ppo.baseline_decay);
  ppo.read("normalize_rewards", cfg.ppo.normalize_rewards);
  ppo.read("adaptive_steps", cfg.ppo.adaptive_steps);
  ppo.read("entropy_coef", cfg.ppo.entropy_coef);
  ppo.read("final_temperature", cfg.ppo.final_temperature);
  ppo.read("log_every", cfg.ppo.log_every);
  ppo.finish();

  Section data = root.child("data");
  data.read("path", cfg.data);
  data.read("truth", cfg.truth);
  data.finish();

  Section eval = root.child("eval");
  eval.read("n_per_replicate", cfg.n_per_replicate);
  eval.read("n_replicates", cfg.n_replicates);
  eval.read("n_heldout", cfg.n_heldout);
  if (eval.has("estimators")) {
    const json& list = eval.raw("estimators");
    if (!list.is_array()) throw ConfigError("config key 'eval.estimators' must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i].is_string()) {
        EstimatorConfig e = cfg.score.estimator;
        try {
          e.kind = estimator_kind_from_string(list[i].get<std::string>());
        } catch (const std::exception& ex) {
          throw ConfigError(ex.what());
        }
        cfg.eval_estimators.push_back(e);
      } else {
        cfg.eval_estimators.push_back(read_estimator(Section(list[i], "eval.estimators[" + std::to_string(i) + "]")));
      }
    }
  } else {
    eval.mark("estimators");
  }
  eval.finish();

  Section bench = root.child("benchmark");
  bench.read("n_tasks", cfg.n_tasks);
  bench.read("bootstrap_resamples", cfg.bootstrap_resamples);
  if (bench.has("tasks")) {
    const json& list = bench.raw("tasks");
    if (!list.is_array()) throw ConfigError("config key 'benchmark.tasks' must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Section t(list[i], "benchmark.tasks[" + std::to_string(i) + "]");
      TaskPaths p;
      t.read("data", p.data);
      t.read("truth", p.truth);
      t.finish();
      cfg.tasks.push_back(p);
    }
  } else {
    bench.mark("tasks");
  }
  bench.finish();

  root.finish();
  return cfg;
}

ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["jobs"] = cfg.jobs;
  j["out"] = cfg.out;
  j["scm"] = {{"d", cfg.d},
              {"e", cfg.e},
              {"n", cfg.n},
              {"mechanism", to_string(cfg.mechanism.kind)},
              {"hidden_width", cfg.mechanism.hidden_width},
              {"weight_scale", cfg.mechanism.weight_scale},
              {"noise_min", cfg.mechanism.noise_min},
              {"noise_max", cfg.mechanism.noise_max},
              {"pilot_samples", cfg.mechanism.pilot_samples},
              {"standardize", cfg.mechanism.standardize},
              {"path", cfg.scm}};
  ordered_json score;
  if (cfg.score.lambda) {
    score["lambda"] = *cfg.score.lambda;
  } else {
    score["lambda"] = nullptr;
  }
  score["split_fraction"] = cfg.score.split_fraction;
  j["score"] = score;
  j["estimator"] = write_estimator(cfg.score.estimator);
  j["ppo"] = {{"iterations", cfg.ppo.iterations},
              {"samples_per_iter", cfg.ppo.samples_per_iter},
              {"clip_epsilon", cfg.ppo.clip_epsilon},
              {"learning_rate", cfg.ppo.learning_rate},
              {"update_epochs", cfg.ppo.update_epochs},
              {"baseline_decay", cfg.ppo.baseline_decay},
              {"normalize_rewards", cfg.ppo.normalize_rewards},
              {"adaptive_steps", cfg.ppo.adaptive_steps},
              {"entropy_coef", cfg.ppo.entropy_coef},
              {"final_temperature", cfg.ppo.final_temperature},
              {"log_every", cfg.ppo.log_every}};
  j["data"] = {{"path", cfg.data}, {"truth", cfg.truth}};
  ordered_json ests = ordered_json::array();
  for (const auto& e : cfg.eval_estimators) ests.push_back(write_estimator(e));
  j["eval"] = {{"n_per_replicate", cfg.n_per_replicate},
               {"n_replicates", cfg.n_replicates},
               {"n_heldout", cfg.n_heldout},
               {"estimators", ests}};
  ordered_json tasks = ordered_json::array();
  for (const auto& t : cfg.tasks) tasks.push_back({{"data", t.data}, {"truth", t.truth}});
  j["benchmark"] = {{"n_tasks", cfg.n_tasks}, {"bootstrap_resamples", cfg.bootstrap_resamples}, {"tasks", tasks}};
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  // Accept both a bare config tree and the {"command", "config"} echo.
  if (j.is_object() && j.contains("config") && j.contains("command")) return config_from_json(j.at("config"));
  return config_from_json(j);
}

void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (cfg.d < 1 || cfg.d > kMaxNodes) fail("scm.d must lie in [1, " + std::to_string(kMaxNodes) + "]");
  const double max_edges = cfg.d * (cfg.d - 1) / 2.0;
  if (!(cfg.e >= 0.0) || cfg.e > max_edges) {
    std::ostringstream msg;
    msg << "scm.e=" << cfg.e << " is outside [0, " << max_edges << "] for d=" << cfg.d;
    fail(msg.str());
  }
  if (cfg.n < 2) fail("scm.n must be at least 2");
  if (cfg.mechanism.hidden_width < 1) fail("scm.hidden_width must be positive");
  if (!(cfg.mechanism.noise_min > 0.0) || cfg.mechanism.noise_max < cfg.mechanism.noise_min) {
    fail("scm noise range must satisfy 0 < noise_min <= noise_max");
  }
  if (cfg.score.lambda && !(std::isfinite(*cfg.score.lambda) && *cfg.score.lambda >= 0.0)) {
    fail("score.lambda must be a non-negative number");
  }
  if (!(cfg.score.split_fraction > 0.0 && cfg.score.split_fraction < 1.0)) {
    fail("score.split_fraction must lie in (0, 1)");
  }
  try {
    cfg.ppo.validate();
    cfg.score.estimator.prior.validate();
    cfg.score.estimator.mlp.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  } catch (const EstimatorError& e) {
    fail(e.what());
  }
  if (cfg.score.estimator.kind == EstimatorKind::External && cfg.score.estimator.endpoint.empty()) {
    fail("the external estimator needs an endpoint");
  }
  if (cfg.score.estimator.connections < 1) fail("estimator.connections must be at least 1");
  if (cfg.n_replicates < 1) fail("eval.n_replicates must be at least 1");
  if (cfg.n_per_replicate < 2) fail("eval.n_per_replicate must be at least 2");
  if (cfg.n_heldout < 1) fail("eval.n_heldout must be at least 1");
  if (cfg.n_tasks < 1) fail("benchmark.n_tasks must be at least 1");
  if (cfg.bootstrap_resamples < 1) fail("benchmark.bootstrap_resamples must be at least 1");
}

std::string report_stem(const std::string& kind, const std::string& estimator, int n, int d, std::uint64_t seed) {
  return kind + "_" + estimator + "_n" + std::to_string(n) + "_d" + std::to_string(d) + "_seed" +
         std::to_string(seed);
}

std::vector<std::string> cmd_generate(const RunConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  const auto dir = prepare_out(cfg);
  const ScmSpec scm = synthetic_scm(cfg, cfg.seed);
  const Dataset data = synthetic_data(cfg, scm, cfg.seed);

  std::vector<std::string> files;
  write_csv((dir / "data.csv").string(), data);
  files.push_back((dir / "data.csv").string());
  save_scm((dir / "scm.json").string(), scm);
  files.push_back((dir / "scm.json").string());
  save_edge_list((dir / "truth.txt").string(), scm.graph);
  files.push_back((dir / "truth.txt").string());
  files.push_back(echo_config(dir, cfg, "generate"));
  log << "generated d=" << cfg.d << " edges=" << scm.graph.edge_count() << " n=" << cfg.n << " into "
      << dir.string() << "\n";
  return files;
}

std::vector<std::string> cmd_discover(const RunConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  Dataset data;
  std::optional<DirectedGraph> truth;
  if (!cfg.data.empty()) {
    data = load_data(cfg.data);
    if (!cfg.truth.empty()) truth = load_truth(cfg.truth, data.cols());
  } else {
    const ScmSpec scm = synthetic_scm(cfg, cfg.seed);
    data = synthetic_data(cfg, scm, cfg.seed);
    truth = scm.graph;
  }
  const auto dir = prepare_out(cfg);
  std::vector<std::string> files;
  files.push_back(echo_config(dir, cfg, "discover"));

  Rng split_rng(derive_seed(cfg.seed, {0x73706c74ULL}));
  auto split = std::make_shared<DataSplit>(split_dataset(data, cfg.score.split_fraction, split_rng));
  Scorer scorer(split, cfg.score, cfg.jobs);
  PpoConfig ppo = cfg.ppo;
  ppo.seed = derive_seed(cfg.seed, {0x70706fULL});
  log << "discover: d=" << data.cols() << " n_train=" << split->train.rows() << " n_est=" << split->est.rows()
      << " lambda=" << scorer.lambda() << " estimator=" << scorer.estimator().describe() << "\n";
  const auto result = optimize(scorer, ppo, &log);
  const DirectedGraph graph = map_graph(result.params);

  auto emit = [&](const char* name, const std::string& text) {
    write_text(dir / name, text);
    files.push_back((dir / name).string());
  };
  emit("params.txt", params_to_text(result.params));
  emit("graph.txt", to_edge_list_string(graph));
  emit("run_log.csv", format_run_log(result.log));
  emit("run_timing.csv", format_run_timing(result.log));
  log << "estimated graph: " << (graph.edge_count() == 0 ? std::string("(empty)") : compact_edges(graph)) << "\n";
  if (truth) {
    const int shd = shd_cpdag(dag_to_cpdag(graph), dag_to_cpdag(*truth));
    log << "CPDAG SHD to truth: " << shd << "\n";
  }
  return files;
}

std::vector<std::string> cmd_eval_estimators(const RunConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  ScmSpec scm;
  if (!cfg.scm.empty()) {
    if (!fs::exists(cfg.scm)) throw ConfigError("SCM file '" + cfg.scm + "' does not exist");
    scm = load_scm(cfg.scm);
  } else {
    if (cfg.d > kDefaultEnumerationLimit) {
      throw ConfigError("eval-estimators enumerates every DAG and supports d <= " +
                        std::to_string(kDefaultEnumerationLimit) + ", got d=" + std::to_string(cfg.d));
    }
    scm = synthetic_scm(cfg, cfg.seed);
  }
  if (scm.size() > kDefaultEnumerationLimit) {
    throw ConfigError("eval-estimators supports d <= " + std::to_string(kDefaultEnumerationLimit) +
                      ", the SCM has d=" + std::to_string(scm.size()));
  }

  StudyConfig study;
  study.n_per_replicate = cfg.n_per_replicate;
  study.n_replicates = cfg.n_replicates;
  study.n_heldout = cfg.n_heldout;
  study.seed = cfg.seed;
  study.jobs = cfg.jobs;
  study.score = cfg.score;
  study.estimators = cfg.eval_estimators.empty() ? std::vector<EstimatorConfig>{cfg.score.estimator}
                                                 : cfg.eval_estimators;

  const auto dir = prepare_out(cfg);
  std::vector<std::string> files;
  files.push_back(echo_config(dir, cfg, "eval-estimators"));
  const auto reports = bootstrap_variance_study(scm, study);
  for (const auto& r : reports) {
    for (const auto& w : r.warnings) log << "warning (" << r.estimator << "): " << w << "\n";
    const std::string stem = report_stem("bootstrap", r.estimator, r.n_per_replicate, r.d, r.seed);
    write_text(dir / (stem + ".csv"), r.cells_csv());
    ordered_json j;
    j["aggregates"] = r.aggregates_json();
    j["config"] = config_to_json(cfg);
    write_text(dir / (stem + ".json"), j.dump(2) + "\n");
    files.push_back((dir / (stem + ".csv")).string());
    files.push_back((dir / (stem + ".json")).string());
    log << r.estimator << ": mean BV " << r.mean_bv << ", median BV " << r.median_bv << ", mean NLL "
        << r.mean_nll << ", mean incorrect structures " << r.mean_incorrect << "\n";
  }
  return files;
}

std::vector<std::string> cmd_benchmark(const RunConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  std::vector<BenchmarkTask> tasks;
  if (!cfg.tasks.empty()) {
    for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
      const auto& p = cfg.tasks[t];
      if (p.truth.empty()) throw ConfigError("benchmark task " + std::to_string(t) + " has no truth file");
      BenchmarkTask task;
      task.name = fs::path(p.data).stem().string() + "_" + std::to_string(t);
      task.data = load_data(p.data);
      task.truth = load_truth(p.truth, task.data.cols());
      tasks.push_back(std::move(task));
    }
  } else {
    for (int t = 0; t < cfg.n_tasks; ++t) {
      const std::uint64_t seed = derive_seed(cfg.seed, {0x7461736bULL, static_cast<std::uint64_t>(t)});
      const ScmSpec scm = synthetic_scm(cfg, seed);
      BenchmarkTask task;
      task.name = "er_" + std::to_string(t);
      task.data = synthetic_data(cfg, scm, seed);
      task.truth = scm.graph;
      tasks.push_back(std::move(task));
    }
  }

  BenchmarkConfig bench;
  bench.score = cfg.score;
  bench.ppo = cfg.ppo;
  bench.seed = cfg.seed;
  bench.jobs = cfg.jobs;
  bench.bootstrap_resamples = cfg.bootstrap_resamples;

  const auto dir = prepare_out(cfg);
  std::vector<std::string> files;
  files.push_back(echo_config(dir, cfg, "benchmark"));
  const auto report = benchmark_shd(tasks, bench);
  const int d = tasks.empty() ? 0 : tasks.front().data.cols();
  const int n = tasks.empty() ? 0 : tasks.front().data.rows();
  const std::string stem = report_stem("benchmark", to_string(cfg.score.estimator.kind), n, d, cfg.seed);
  write_text(dir / (stem + ".csv"), report.tasks_csv());
  ordered_json j;
  nlohmann::json agg = report.aggregates_json();
  agg["d"] = d;
  agg["n"] = n;
  if (cfg.tasks.empty()) agg["e"] = cfg.e;
  j["aggregates"] = agg;
  j["config"] = config_to_json(cfg);
  write_text(dir / (stem + ".json"), j.dump(2) + "\n");
  files.push_back((dir / (stem + ".csv")).string());
  files.push_back((dir / (stem + ".json")).string());
  for (const auto& o : report.outcomes) {
    if (o.failed) log << "task " << o.name << " failed: " << o.error << "\n";
  }
  log << "mean SHD " << report.mean_shd << " [" << report.ci.low << ", " << report.ci.high << "] over "
      << (report.outcomes.size() - static_cast<std::size_t>(report.excluded)) << " tasks\n";
  return files;
}

}  // namespace acd

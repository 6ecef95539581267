#ifndef ACD_COMMANDS_HPP_
#define ACD_COMMANDS_HPP_

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "acd/estimators.hpp"
#include "acd/ppo.hpp"
#include "acd/scm.hpp"
#include "acd/scorer.hpp"

namespace acd {

/// Invalid or inconsistent configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TaskPaths {
  std::string data;
  std::string truth;
};

/// Every command reads the sections it needs and ignores the rest. The whole
/// tree is echoed to config.json in each output directory.
struct RunConfig {
  std::uint64_t seed = 0;
  int jobs = 0;  // 0 = all cores
  std::string out = "out";

  // Synthetic SCM: d nodes, e expected edges, n rows.
  int d = 5;
  double e = 5.0;
  int n = 2000;
  MechanismConfig mechanism;

  ScoreConfig score;
  PpoConfig ppo;

  // discover: external data instead of a synthetic draw; truth is optional.
  std::string data;
  std::string truth;

  // eval-estimators
  int n_per_replicate = 500;
  int n_replicates = 30;
  int n_heldout = 10000;
  std::vector<EstimatorConfig> eval_estimators;  // empty = {score.estimator}
  std::string scm;                               // optional saved SCM to evaluate

  // benchmark
  int n_tasks = 10;
  std::vector<TaskPaths> tasks;  // if empty, n_tasks synthetic tasks
  int bootstrap_resamples = 10000;
};

/// Strict: unknown keys and wrong types raise ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

/// Checks ranges shared by all commands; throws ConfigError.
void validate_config(const RunConfig& cfg);

std::string report_stem(const std::string& kind, const std::string& estimator, int n, int d,
                        std::uint64_t seed);

/// Each command creates cfg.out if needed and returns the files it wrote.
std::vector<std::string> cmd_generate(const RunConfig& cfg, std::ostream& log);
std::vector<std::string> cmd_discover(const RunConfig& cfg, std::ostream& log);
std::vector<std::string> cmd_eval_estimators(const RunConfig& cfg, std::ostream& log);
std::vector<std::string> cmd_benchmark(const RunConfig& cfg, std::ostream& log);

}  // namespace acd

#endif  // ACD_COMMANDS_HPP_

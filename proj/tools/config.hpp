#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynsig/errors.hpp"
#include "dynsig/game.hpp"

namespace dynsig::cli {

// Bad config file, unknown key, wrong type or a game the command cannot run.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct SourceConfig {
  std::string kind = "uniform";  // uniform | gaussian | gridded | gauss_markov
  double low = 0.0, high = 1.0;
  double mean = 0.0, variance = 1.0;
  std::vector<double> grid, density;
  Matrix G, Sigma_M0;
  std::vector<Matrix> Sigma_V;
};

struct GameConfig {
  std::size_t horizon = 1;
  Vector bias = Vector::Zero(1);
  double lambda = 0.0;
  std::optional<double> discount;
  SourceConfig source;
  std::optional<std::vector<Matrix>> channel;  // Sigma_W per stage
};

struct SolverConfig {
  std::optional<std::size_t> bins;
  double tol = 1e-13;  // tight enough for 12-digit CSV output
  double certificate_tol = 1e-8;
  std::size_t max_iters = 200000;
  double damping = 0.5;
  std::string init = "informative";  // informative | babbling
  double power_cap = 1e6;
  double gradient_tol = 1e-10;
  std::string zeta_rule = "penalized";  // penalized | unit_budget
};

struct MonteCarloConfig {
  std::uint64_t samples = 100000;
  std::uint64_t seed = 1;
  std::size_t block_size = 4096;
  unsigned threads = 0;
  // babbling | revealing | quantized | nash | stackelberg | dp
  std::string policy = "babbling";
};

struct PolicyConfig {
  std::vector<double> boundaries;
  std::vector<double> actions;
};

struct OutputConfig {
  std::optional<std::string> csv;
};

struct RunConfig {
  GameConfig game;
  SolverConfig solver;
  MonteCarloConfig montecarlo;
  std::optional<PolicyConfig> policy;
  OutputConfig output;
};

// Strict parse: unknown keys, wrong types and missing required keys throw
// ConfigError.
RunConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

// Reads a JSON file (ConfigError when unreadable or malformed).
nlohmann::json read_json_file(const std::string& path);

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON
// when possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

GameSpec make_spec(const RunConfig& config);

}  // namespace dynsig::cli

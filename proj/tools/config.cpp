#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/core.h>

namespace dynsig::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ConfigError(fmt::format("{}: unknown key '{}'", where, item.key()));
}

const json& require(const json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(fmt::format("{}: missing key '{}'", where, key));
  return j.at(key);
}

double as_number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(fmt::format("{}: expected a number", what));
  return j.get<double>();
}

std::uint64_t as_count(const json& j, const std::string& what) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
    throw ConfigError(fmt::format("{}: expected a nonnegative integer", what));
  return j.get<std::uint64_t>();
}

std::string as_string(const json& j, const std::string& what) {
  if (!j.is_string()) throw ConfigError(fmt::format("{}: expected a string", what));
  return j.get<std::string>();
}

std::vector<double> as_numbers(const json& j, const std::string& what) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array()) throw ConfigError(fmt::format("{}: expected a number or an array", what));
  std::vector<double> out;
  for (const json& x : j) out.push_back(as_number(x, what));
  return out;
}

Vector as_vector(const json& j, const std::string& what) {
  const std::vector<double> v = as_numbers(j, what);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// A number is a 1x1 matrix; otherwise an array of equal-length rows.
Matrix as_matrix(const json& j, const std::string& what) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw ConfigError(fmt::format("{}: expected a number or an array of rows", what));
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError(fmt::format("{}: rows must have equal length", what));
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = as_number(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

std::vector<Matrix> as_matrices(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(fmt::format("{}: expected a list of per-stage matrices", what));
  std::vector<Matrix> out;
  for (const json& x : j) out.push_back(as_matrix(x, what));
  return out;
}

json matrix_json(const Matrix& m) {
  if (m.rows() == 1 && m.cols() == 1) return m(0, 0);
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json matrices_json(const std::vector<Matrix>& ms) {
  json out = json::array();
  for (const Matrix& m : ms) out.push_back(matrix_json(m));
  return out;
}

json vector_json(const Vector& v) {
  if (v.size() == 1) return v(0);
  return std::vector<double>(v.data(), v.data() + v.size());
}

SourceConfig parse_source(const json& j) {
  const std::string where = "game.source";
  SourceConfig s;
  s.kind = as_string(require(j, where, "kind"), where + ".kind");
  if (s.kind == "uniform") {
    check_keys(j, where, {"kind", "low", "high"});
    s.low = as_number(require(j, where, "low"), where + ".low");
    s.high = as_number(require(j, where, "high"), where + ".high");
  } else if (s.kind == "gaussian") {
    check_keys(j, where, {"kind", "mean", "variance"});
    s.mean = as_number(require(j, where, "mean"), where + ".mean");
    s.variance = as_number(require(j, where, "variance"), where + ".variance");
  } else if (s.kind == "gridded") {
    check_keys(j, where, {"kind", "grid", "density"});
    s.grid = as_numbers(require(j, where, "grid"), where + ".grid");
    s.density = as_numbers(require(j, where, "density"), where + ".density");
  } else if (s.kind == "gauss_markov") {
    check_keys(j, where, {"kind", "G", "Sigma_M0", "Sigma_V"});
    s.G = as_matrix(require(j, where, "G"), where + ".G");
    s.Sigma_M0 = as_matrix(require(j, where, "Sigma_M0"), where + ".Sigma_M0");
    s.Sigma_V = as_matrices(require(j, where, "Sigma_V"), where + ".Sigma_V");
  } else {
    throw ConfigError(fmt::format("{}.kind: unknown source kind '{}'", where, s.kind));
  }
  return s;
}

json source_json(const SourceConfig& s) {
  json j = {{"kind", s.kind}};
  if (s.kind == "uniform") {
    j["low"] = s.low;
    j["high"] = s.high;
  } else if (s.kind == "gaussian") {
    j["mean"] = s.mean;
    j["variance"] = s.variance;
  } else if (s.kind == "gridded") {
    j["grid"] = s.grid;
    j["density"] = s.density;
  } else {
    j["G"] = matrix_json(s.G);
    j["Sigma_M0"] = matrix_json(s.Sigma_M0);
    j["Sigma_V"] = matrices_json(s.Sigma_V);
  }
  return j;
}

}  // namespace

RunConfig parse_config(const json& j) {
  check_keys(j, "config", {"game", "solver", "montecarlo", "policy", "output"});
  RunConfig c;

  const json& game = require(j, "config", "game");
  check_keys(game, "game", {"horizon", "bias", "lambda", "discount", "source", "channel"});
  c.game.horizon = as_count(require(game, "game", "horizon"), "game.horizon");
  if (game.contains("bias")) c.game.bias = as_vector(game["bias"], "game.bias");
  if (game.contains("lambda")) c.game.lambda = as_number(game["lambda"], "game.lambda");
  if (game.contains("discount") && !game["discount"].is_null())
    c.game.discount = as_number(game["discount"], "game.discount");
  c.game.source = parse_source(require(game, "game", "source"));
  if (game.contains("channel") && !game["channel"].is_null()) {
    const json& ch = game["channel"];
    check_keys(ch, "game.channel", {"Sigma_W"});
    c.game.channel = as_matrices(require(ch, "game.channel", "Sigma_W"), "game.channel.Sigma_W");
  }

  if (j.contains("solver")) {
    const json& s = j["solver"];
    check_keys(s, "solver", {"bins", "tol", "certificate_tol", "max_iters", "damping", "init",
                             "power_cap", "gradient_tol", "zeta_rule"});
    if (s.contains("bins") && !s["bins"].is_null())
      c.solver.bins = as_count(s["bins"], "solver.bins");
    if (s.contains("tol")) c.solver.tol = as_number(s["tol"], "solver.tol");
    if (s.contains("certificate_tol"))
      c.solver.certificate_tol = as_number(s["certificate_tol"], "solver.certificate_tol");
    if (s.contains("max_iters")) c.solver.max_iters = as_count(s["max_iters"], "solver.max_iters");
    if (s.contains("damping")) c.solver.damping = as_number(s["damping"], "solver.damping");
    if (s.contains("init")) c.solver.init = as_string(s["init"], "solver.init");
    if (s.contains("power_cap")) c.solver.power_cap = as_number(s["power_cap"], "solver.power_cap");
    if (s.contains("gradient_tol"))
      c.solver.gradient_tol = as_number(s["gradient_tol"], "solver.gradient_tol");
    if (s.contains("zeta_rule")) c.solver.zeta_rule = as_string(s["zeta_rule"], "solver.zeta_rule");
    if (c.solver.init != "informative" && c.solver.init != "babbling")
      throw ConfigError("solver.init: expected 'informative' or 'babbling'");
    if (c.solver.zeta_rule != "penalized" && c.solver.zeta_rule != "unit_budget")
      throw ConfigError("solver.zeta_rule: expected 'penalized' or 'unit_budget'");
  }

  if (j.contains("montecarlo")) {
    const json& m = j["montecarlo"];
    check_keys(m, "montecarlo", {"samples", "seed", "block_size", "threads", "policy"});
    if (m.contains("samples")) c.montecarlo.samples = as_count(m["samples"], "montecarlo.samples");
    if (m.contains("seed")) c.montecarlo.seed = as_count(m["seed"], "montecarlo.seed");
    if (m.contains("block_size"))
      c.montecarlo.block_size = as_count(m["block_size"], "montecarlo.block_size");
    if (m.contains("threads"))
      c.montecarlo.threads = static_cast<unsigned>(as_count(m["threads"], "montecarlo.threads"));
    if (m.contains("policy")) c.montecarlo.policy = as_string(m["policy"], "montecarlo.policy");
    static const std::set<std::string> policies{"babbling", "revealing", "quantized",
                                                "nash",     "stackelberg", "dp"};
    if (!policies.count(c.montecarlo.policy))
      throw ConfigError(fmt::format("montecarlo.policy: unknown policy '{}'", c.montecarlo.policy));
  }

  if (j.contains("policy") && !j["policy"].is_null()) {
    const json& p = j["policy"];
    check_keys(p, "policy", {"boundaries", "actions"});
    PolicyConfig pc;
    pc.boundaries = p.contains("boundaries") ? as_numbers(p["boundaries"], "policy.boundaries")
                                             : std::vector<double>{};
    if (p.contains("boundaries") && p["boundaries"].is_array() && p["boundaries"].empty())
      pc.boundaries.clear();
    pc.actions = as_numbers(require(p, "policy", "actions"), "policy.actions");
    c.policy = pc;
  }

  if (j.contains("output")) {
    const json& o = j["output"];
    check_keys(o, "output", {"csv"});
    if (o.contains("csv") && !o["csv"].is_null()) c.output.csv = as_string(o["csv"], "output.csv");
  }
  return c;
}

json to_json(const RunConfig& c) {
  json game = {{"horizon", c.game.horizon},
               {"bias", vector_json(c.game.bias)},
               {"lambda", c.game.lambda},
               {"discount", c.game.discount ? json(*c.game.discount) : json(nullptr)},
               {"source", source_json(c.game.source)}};
  game["channel"] = c.game.channel ? json{{"Sigma_W", matrices_json(*c.game.channel)}} : json(nullptr);

  json solver = {{"bins", c.solver.bins ? json(*c.solver.bins) : json(nullptr)},
                 {"tol", c.solver.tol},
                 {"certificate_tol", c.solver.certificate_tol},
                 {"max_iters", c.solver.max_iters},
                 {"damping", c.solver.damping},
                 {"init", c.solver.init},
                 {"power_cap", c.solver.power_cap},
                 {"gradient_tol", c.solver.gradient_tol},
                 {"zeta_rule", c.solver.zeta_rule}};
  json mc = {{"samples", c.montecarlo.samples},
             {"seed", c.montecarlo.seed},
             {"block_size", c.montecarlo.block_size},
             {"threads", c.montecarlo.threads},
             {"policy", c.montecarlo.policy}};
  json out = {{"game", game}, {"solver", solver}, {"montecarlo", mc}};
  out["policy"] = c.policy ? json{{"boundaries", c.policy->boundaries}, {"actions", c.policy->actions}}
                           : json(nullptr);
  out["output"] = {{"csv", c.output.csv ? json(*c.output.csv) : json(nullptr)}};
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(fmt::format("override '{}' is not of the form key=value", assignment));
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::stringstream parts(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(parts, key, '.')) {
    if (key.empty()) throw ConfigError(fmt::format("override '{}' has an empty key", assignment));
    keys.push_back(key);
  }
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!node->is_object() && !node->is_null())
      throw ConfigError(fmt::format("override '{}': '{}' is not a section", assignment, keys[i]));
    node = &(*node)[keys[i]];
  }
  if (!node->is_object() && !node->is_null())
    throw ConfigError(fmt::format("override '{}': parent is not a section", assignment));
  (*node)[keys.back()] = value;
}

GameSpec make_spec(const RunConfig& c) {
  GameSpec spec;
  try {
    spec.horizon = c.game.horizon;
    spec.bias = c.game.bias;
    spec.lambda = c.game.lambda;
    spec.discount = c.game.discount;
    const SourceConfig& s = c.game.source;
    if (s.kind == "uniform")
      spec.source = ScalarSource::uniform(s.low, s.high);
    else if (s.kind == "gaussian")
      spec.source = ScalarSource::gaussian(s.mean, s.variance);
    else if (s.kind == "gridded")
      spec.source = ScalarSource::gridded_normalized(s.grid, s.density);
    else
      spec.source = GaussMarkovSource(s.G, s.Sigma_M0, s.Sigma_V);
    if (c.game.channel) spec.channel = ChannelModel(*c.game.channel);
    spec.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(fmt::format("game: {}", e.what()));
  } catch (const ShapeError& e) {
    throw ConfigError(fmt::format("game: {}", e.what()));
  }
  return spec;
}

}  // namespace dynsig::cli

#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>

#include "config.hpp"
#include "csv.hpp"
#include "dynsig/cheaptalk.hpp"
#include "dynsig/montecarlo.hpp"
#include "dynsig/nash.hpp"
#include "dynsig/stackelberg_scalar.hpp"
#include "dynsig/stackelberg_vector.hpp"

namespace dynsig::cli {

namespace {

namespace fs = std::filesystem;

struct Outcome {
  CsvTable table;
  int code = exit_ok;
};

using Handler = Outcome (*)(const RunConfig&, std::ostream&);

std::string num(double x) { return format_number(x); }

void line(std::ostream& out, const std::string& key, double value) {
  fmt::print(out, "{} = {}\n", key, num(value));
}

double scalar_bias(const GameSpec& spec) {
  if (spec.bias.size() != 1) throw ConfigError("game.bias must be a scalar for this command");
  return spec.bias(0);
}

cheaptalk::SolverOptions quantizer_options(const RunConfig& c) {
  cheaptalk::SolverOptions o;
  o.tol = c.solver.tol;
  o.certificate_tol = c.solver.certificate_tol;
  o.max_iters = c.solver.max_iters;
  return o;
}

stackelberg::PowerOptions power_options(const RunConfig& c) {
  stackelberg::PowerOptions o;
  o.gradient_tol = c.solver.gradient_tol;
  o.max_iters = c.solver.max_iters;
  o.power_cap = c.solver.power_cap;
  return o;
}

stackelberg::DPOptions dp_options(const RunConfig& c) {
  stackelberg::DPOptions o;
  o.rule = c.solver.zeta_rule == "unit_budget" ? stackelberg::ZetaRule::unit_budget
                                               : stackelberg::ZetaRule::penalized;
  o.tol = c.solver.tol;
  o.max_sweeps = c.solver.max_iters;
  return o;
}

cheaptalk::QuantizerPolicy configured_policy(const RunConfig& c) {
  if (!c.policy) throw ConfigError("this command needs a 'policy' section");
  return {c.policy->boundaries, c.policy->actions};
}

std::string join_numbers(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + num(xs[i]);
  return s;
}

// ---------------------------------------------------------------------------

Outcome cheaptalk_solve(const RunConfig& c, std::ostream& out) {
  const GameSpec spec = make_spec(c);
  if (spec.signaling()) throw WrongGameError("cheaptalk-solve needs a game without a channel");
  const ScalarSource& source = spec.scalar_source();
  const double b = scalar_bias(spec);
  const auto options = quantizer_options(c);

  std::size_t bins;
  if (c.solver.bins) {
    bins = *c.solver.bins;
  } else {
    bins = cheaptalk::max_bins(source, b, options);
    fmt::print(out, "max_bins = {}\n", bins);
  }
  const auto result = cheaptalk::solve_quantized(source, b, bins, options);
  if (!result) {
    fmt::print(out, "no equilibrium with K = {}: {}\n", bins, result.diagnostic.reason);
    throw ConvergenceError(fmt::format("no {}-bin equilibrium ({})", bins, result.diagnostic.reason),
                           {result.diagnostic.last_update});
  }
  const auto& policy = *result.policy;
  const auto& cert = *result.certificate;
  fmt::print(out, "K = {}\n", bins);
  fmt::print(out, "boundaries = [{}]\n", join_numbers(policy.boundaries));
  fmt::print(out, "actions = [{}]\n", join_numbers(policy.actions));
  line(out, "min_action_gap", cert.min_action_gap);
  line(out, "centroid_residual", cert.centroid_residual);
  line(out, "indifference_residual", cert.indifference_residual);
  line(out, "J_e", cert.encoder_cost);
  line(out, "J_d", cert.decoder_cost);
  fmt::print(out, "iterations = {}\n", result.diagnostic.iterations);

  std::vector<std::string> header, row;
  for (std::size_t i = 0; i < policy.boundaries.size(); ++i) {
    header.push_back(fmt::format("boundary_{}", i + 1));
    row.push_back(num(policy.boundaries[i]));
  }
  for (std::size_t i = 0; i < policy.actions.size(); ++i) {
    header.push_back(fmt::format("action_{}", i + 1));
    row.push_back(num(policy.actions[i]));
  }
  Outcome o{CsvTable(header)};
  o.table.add_row(row);
  return o;
}

Outcome cheaptalk_verify(const RunConfig& c, std::ostream& out) {
  const GameSpec spec = make_spec(c);
  const ScalarSource& source = spec.scalar_source();
  const auto policy = configured_policy(c);
  const auto cert =
      cheaptalk::verify_equilibrium(policy, source, scalar_bias(spec), c.solver.certificate_tol);
  line(out, "centroid_residual", cert.centroid_residual);
  line(out, "indifference_residual", cert.indifference_residual);
  line(out, "min_action_gap", cert.min_action_gap);
  fmt::print(out, "separation_ok = {}\n", cert.separation_ok);
  line(out, "J_e", cert.encoder_cost);
  line(out, "J_d", cert.decoder_cost);
  fmt::print(out, "equilibrium = {}\n", cert.passes());

  Outcome o{CsvTable({"centroid_residual", "indifference_residual", "min_action_gap",
                      "separation_ok", "encoder_cost", "decoder_cost", "passes"})};
  o.table.add_row({num(cert.centroid_residual), num(cert.indifference_residual),
                   num(cert.min_action_gap), cert.separation_ok ? "1" : "0",
                   num(cert.encoder_cost), num(cert.decoder_cost), cert.passes() ? "1" : "0"});
  o.code = cert.passes() ? exit_ok : exit_verification;
  return o;
}

Outcome cheaptalk_stackelberg(const RunConfig& c, std::ostream& out) {
  const GameSpec spec = make_spec(c);
  const auto sol = cheaptalk::stackelberg_cheaptalk(spec);
  line(out, "J_e", sol.encoder_cost);
  line(out, "J_d", sol.decoder_cost);
  const double b2 = spec.bias.squaredNorm();
  Outcome o{CsvTable({"stage", "weight", "encoder_cost", "decoder_cost"})};
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    const double w = spec.stage_weight(k);
    o.table.add_row({std::to_string(k), num(w), num(w * b2), "0"});
  }
  return o;
}

Outcome nash_classify2(const RunConfig& c, std::ostream& out) {
  const GameSpec spec = make_spec(c);
  const auto r = nash::classify_two_stage(spec);
  const std::string informative = r.informative ? (*r.informative ? "yes" : "no") : "unknown";
  fmt::print(out, "regime = {}\n", nash::regime_name(r.regime));
  fmt::print(out, "informative = {}\n", informative);
  line(out, "first_ratio", r.first_ratio);
  line(out, "second_ratio", r.second_ratio);
  line(out, "sigma2_M1", r.second_variance);
  if (r.window_low) fmt::print(out, "window = ({}, {})\n", num(*r.window_low), num(*r.window_high));
  if (r.at_boundary) fmt::print(out, "lambda sits on a regime boundary\n");

  Outcome o{CsvTable({"regime", "informative", "first_ratio", "second_ratio", "second_variance",
                      "window_low", "window_high", "at_boundary"})};
  o.table.add_row({nash::regime_name(r.regime), informative, num(r.first_ratio),
                   num(r.second_ratio), num(r.second_variance), format_optional(r.window_low),
                   format_optional(r.window_high), r.at_boundary ? "1" : "0"});
  return o;
}

nash::IterationResult iterate(const RunConfig& c, const GameSpec& spec) {
  nash::AffineProfile init = nash::AffineProfile::babbling(spec);
  if (c.solver.init == "informative") {
    const auto n = static_cast<Eigen::Index>(spec.source_dim());
    const auto p = static_cast<Eigen::Index>(spec.signal_dim());
    for (std::size_t k = 0; k < spec.horizon; ++k)
      init.encoder[k].source_gains[k] = Matrix::Identity(p, n);
  }
  nash::IterationOptions o;
  o.damping = c.solver.damping;
  o.tol = c.solver.tol;
  o.max_iters = c.solver.max_iters;
  return nash::best_response_iteration(spec, init, o);
}

void add_matrix_rows(CsvTable& t, const std::string& player, std::size_t stage,
                     const std::string& term, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index col = 0; col < m.cols(); ++col)
      t.add_row({player, std::to_string(stage), term, std::to_string(r), std::to_string(col),
                 num(m(r, col))});
}

Outcome nash_iterate(const RunConfig& c, std::ostream& out) {
  const GameSpec spec = make_spec(c);
  const auto r = iterate(c, spec);
  fmt::print(out, "iterations = {}\n", r.iterations);
  fmt::print(out, "informative = {}\n", r.informative);
  line(out, "J_e", r.encoder_cost);
  line(out, "J_d", r.decoder_cost);
  line(out, "encoder_residual", r.encoder_residual);
  line(out, "decoder_residual", r.decoder_residual);

  // long format: one coefficient per row
  Outcome o{CsvTable({"player", "stage", "term", "row", "col", "value"})};
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    const auto& e = r.profile.encoder[k];
    for (std::size_t i = 0; i < e.source_gains.size(); ++i)
      add_matrix_rows(o.table, "encoder", k, fmt::format("A{}", i), e.source_gains[i]);
    for (std::size_t i = 0; i < e.feedback_gains.size(); ++i)
      add_matrix_rows(o.table, "encoder", k, fmt::format("B{}", i), e.feedback_gains[i]);
    add_matrix_rows(o.table, "encoder", k, "C", e.offset);
  }
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    const auto& d = r.profile.decoder[k];
    for (std::size_t i = 0; i < d.gains.size(); ++i)
      add_matrix_rows(o.table, "decoder", k, fmt::format("D{}", i), d.gains[i]);
    add_matrix_rows(o.table, "decoder", k, "E", d.offset);
  }
  return o;
}

Outcome stackelberg_power(const RunConfig& c, std::ostream& out) {
  const GameSpec spec = make_spec(c);
  const auto sol = stackelberg::optimize_power(spec, power_options(c));
  const auto& t = sol.trace;
  line(out, "lambda_star", sol.threshold);
  fmt::print(out, "informative = {}\n", sol.informative);
  for (std::size_t k = 0; k < spec.horizon; ++k)
    fmt::print(out, "stage {}: P = {}, Delta = {}, Delta_tilde = {}, C = {}\n", k,
               num(sol.powers[k]), num(t.distortion[k]), num(t.innovation[k]), num(t.capacity[k]));
  line(out, "J_lower", sol.lower_bound);
  if (sol.power_capped) fmt::print(out, "warning: some power sits at the cap\n");

  const double b2 = spec.bias.squaredNorm();
  Outcome o{CsvTable({"stage", "P", "Delta", "Delta_tilde", "C", "cost", "encoder_gain",
                      "decoder_gain"})};
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    const double cost = spec.stage_weight(k) * (t.distortion[k] + spec.lambda * sol.powers[k] + b2);
    o.table.add_row({std::to_string(k), num(sol.powers[k]), num(t.distortion[k]),
                     num(t.innovation[k]), num(t.capacity[k]), num(cost),
                     num(sol.encoder_gains[k]), num(sol.decoder_gains[k])});
  }
  return o;
}

Outcome stackelberg_thresholds(const RunConfig& c, std::ostream& out) {
  const GameSpec spec = make_spec(c);
  const double finite = stackelberg::informativeness_threshold(spec);
  line(out, "lambda_star", finite);
  std::optional<double> stationary;
  if (spec.discount) {
    stationary = stackelberg::discounted_threshold(spec);
    if (stationary)
      line(out, "lambda_star_stationary", *stationary);
    else
      fmt::print(out, "lambda_star_stationary = none (beta g^2 >= 1)\n");
  }
  fmt::print(out, "informative = {}\n", spec.lambda < finite);

  Outcome o{CsvTable({"quantity", "value"})};
  o.table.add_row({"lambda_star", num(finite)});
  o.table.add_row({"lambda_star_stationary", format_optional(stationary)});
  o.table.add_row({"lambda", num(spec.lambda)});
  return o;
}

Outcome stackelberg_dp(const RunConfig& c, std::ostream& out) {
  const GameSpec spec = make_spec(c);
  const auto dp = stackelberg::solve_dp(spec, dp_options(c));
  line(out, "V_0", dp.value);
  fmt::print(out, "sweeps = {}\n", dp.sweeps);
  for (std::size_t k = 0; k <= spec.horizon; ++k) {
    const Vector d = dp.K[k].diagonal();
    const std::vector<double> diag(d.data(), d.data() + d.size());
    fmt::print(out, "K_{} diag = [{}]\n", k, join_numbers(diag));
  }
  for (const auto& w : dp.warnings) fmt::print(out, "warning: {}\n", w);

  Outcome o{CsvTable({"stage", "index", "K_diag", "L_diag", "Sigma_tilde_diag", "power",
                      "stage_cost"})};
  for (std::size_t k = 0; k <= spec.horizon; ++k) {
    const bool last = k == spec.horizon;
    for (Eigen::Index i = 0; i < dp.K[k].rows(); ++i)
      o.table.add_row({std::to_string(k), std::to_string(i), num(dp.K[k](i, i)),
                       num(dp.L[k](i, i)), num(dp.innovation[k](i, i)),
                       last ? "" : num(dp.powers[k]), last ? "" : num(dp.stage_costs[k])});
  }
  return o;
}

double prior_trace(const GameSpec& spec, std::size_t k) {
  if (const auto* s = std::get_if<ScalarSource>(&spec.source)) return s->variance();
  return spec.gauss_markov().stage_covariances(k + 1)[k].trace();
}

Outcome simulate(const RunConfig& c, std::ostream& out) {
  const GameSpec spec = make_spec(c);
  const std::string& policy = c.montecarlo.policy;
  EncoderPolicy encoder;
  DecoderPolicy decoder;
  double theory_e = 0.0, theory_d = 0.0;

  if (policy == "babbling") {
    encoder = zero_encoder(spec.signal_dim());
    decoder = constant_decoder(prior_means(spec));
    for (std::size_t k = 0; k < spec.horizon; ++k) {
      const double w = spec.stage_weight(k), v = prior_trace(spec, k);
      theory_e += w * (v + spec.bias.squaredNorm());
      theory_d += w * v;
    }
  } else if (policy == "revealing") {
    const auto sol = cheaptalk::stackelberg_cheaptalk(spec);
    encoder = sol.encoder;
    decoder = sol.decoder;
    theory_e = sol.encoder_cost;
    theory_d = sol.decoder_cost;
  } else if (policy == "quantized") {
    if (spec.signaling()) throw WrongGameError("quantized policies need a game without a channel");
    const auto q = configured_policy(c);
    const auto cert = cheaptalk::verify_equilibrium(q, spec.scalar_source(), scalar_bias(spec),
                                                    c.solver.certificate_tol);
    encoder = cheaptalk::quantizer_encoder(std::vector(spec.horizon, q));
    decoder = cheaptalk::quantizer_decoder(std::vector(spec.horizon, q));
    for (std::size_t k = 0; k < spec.horizon; ++k) {
      theory_e += spec.stage_weight(k) * cert.encoder_cost;
      theory_d += spec.stage_weight(k) * cert.decoder_cost;
    }
  } else if (policy == "nash") {
    const auto r = iterate(c, spec);
    encoder = nash::affine_encoder_policy(r.profile.encoder);
    decoder = nash::affine_decoder_policy(r.profile.decoder);
    theory_e = r.encoder_cost;
    theory_d = r.decoder_cost;
  } else if (policy == "stackelberg") {
    const auto sol = stackelberg::optimize_power(spec, power_options(c));
    const auto code = stackelberg::synthesize_policies(sol.powers, spec);
    encoder = code.encoder();
    decoder = code.decoder();
    theory_e = code.encoder_cost();
    theory_d = code.decoder_cost();
  } else {  // dp
    const auto dp = stackelberg::solve_dp(spec, dp_options(c));
    const LinearInnovationCode code(spec, dp.gains);
    encoder = code.encoder();
    decoder = code.decoder();
    theory_e = code.encoder_cost();
    theory_d = code.decoder_cost();
  }

  montecarlo::SimulationOptions so;
  so.block_size = c.montecarlo.block_size;
  so.threads = c.montecarlo.threads;
  const auto est = montecarlo::estimate(spec, encoder, decoder, c.montecarlo.samples,
                                        c.montecarlo.seed, so);
  const auto cmp = montecarlo::compare_to_theory(est, theory_e, theory_d);
  fmt::print(out, "policy = {}\nsamples = {}\nseed = {}\n", policy, est.samples, est.seed);
  fmt::print(out, "J_e = {} +- {} (theory {}, z = {})\n", num(est.mean_encoder),
             num(est.se_encoder), num(theory_e), num(cmp.z_encoder));
  fmt::print(out, "J_d = {} +- {} (theory {}, z = {})\n", num(est.mean_decoder),
             num(est.se_decoder), num(theory_d), num(cmp.z_decoder));
  fmt::print(out, "within 3 SE = {}\n", cmp.passes());

  Outcome o{CsvTable({"cost", "mean", "se", "theory", "z", "within_band"})};
  o.table.add_row({"encoder", num(est.mean_encoder), num(est.se_encoder), num(theory_e),
                   num(cmp.z_encoder), cmp.encoder_ok ? "1" : "0"});
  o.table.add_row({"decoder", num(est.mean_decoder), num(est.se_decoder), num(theory_d),
                   num(cmp.z_decoder), cmp.decoder_ok ? "1" : "0"});
  o.code = cmp.passes() ? exit_ok : exit_verification;
  return o;
}

Outcome run_selftest(const RunConfig&, std::ostream& out) {
  const auto rows = selftest(out);
  Outcome o{CsvTable({"check", "passed", "value"})};
  bool ok = true;
  for (const auto& r : rows) {
    o.table.add_row({r.name, r.passed ? "1" : "0", num(r.value)});
    ok = ok && r.passed;
  }
  o.code = ok ? exit_ok : exit_verification;
  return o;
}

struct Command {
  const char* name;
  const char* help;
  Handler handler;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> list{
      {"cheaptalk-solve", "quantized equilibrium with solver.bins bins (default: max_bins)",
       cheaptalk_solve},
      {"cheaptalk-verify", "check the policy section against the equilibrium conditions",
       cheaptalk_verify},
      {"cheaptalk-stackelberg", "fully revealing leader-follower solution", cheaptalk_stackelberg},
      {"nash-classify2", "two-stage scalar regime classification", nash_classify2},
      {"nash-iterate", "affine best-response dynamics", nash_iterate},
      {"stackelberg-power", "optimal scalar power allocation", stackelberg_power},
      {"stackelberg-thresholds", "informativeness thresholds", stackelberg_thresholds},
      {"stackelberg-dp", "matrix dynamic program for vector sources", stackelberg_dp},
      {"simulate", "Monte Carlo costs of montecarlo.policy against theory", simulate},
      {"selftest", "quick invariant checks across all modules", run_selftest},
  };
  return list;
}

std::optional<fs::path> csv_target(const std::string& command, const std::optional<std::string>& path) {
  const char* dir = std::getenv(output_dir_variable);
  const bool has_dir = dir && *dir;
  if (path) {
    fs::path p(*path);
    if (p.is_relative() && has_dir) p = fs::path(dir) / p;
    return p;
  }
  if (has_dir) return fs::path(dir) / (command + ".csv");
  return std::nullopt;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const HypothesisError*>(&e) ||
      dynamic_cast<const WrongGameError*>(&e) || dynamic_cast<const UnboundedError*>(&e))
    return exit_config;
  if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const SingularityError*>(&e))
    return exit_convergence;
  if (dynamic_cast<const VerificationError*>(&e) || dynamic_cast<const CoverageError*>(&e))
    return exit_verification;
  return exit_internal;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Equilibria of multi-stage quadratic cheap-talk and signaling games", "dynsig"};
  app.require_subcommand(1);
  app.footer(fmt::format("Exit codes: 0 ok, 2 config error, 3 non-convergence, 4 verification "
                         "failure.\n{} sets the default CSV directory.",
                         output_dir_variable));

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> csv_path;
  bool print_config = false;
  for (const auto& cmd : commands()) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    auto* opt = sub->add_option("config", config_path, "JSON config file");
    if (std::string(cmd.name) != "selftest") opt->required();
    sub->add_option("--set", overrides, "override a config key, e.g. game.lambda=0.5");
    sub->add_option("--csv", csv_path, "CSV output path");
    sub->add_flag("--print-config", print_config, "print the effective config and exit");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    fmt::print(err, "error: {}\n\n{}", e.what(), app.help());
    return exit_config;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  const Command& cmd = *std::find_if(commands().begin(), commands().end(),
                                     [&](const Command& c) { return name == c.name; });
  try {
    RunConfig config;  // selftest may run without a file
    if (!config_path.empty()) {
      nlohmann::json doc = read_json_file(config_path);
      for (const auto& s : overrides) apply_override(doc, s);
      config = parse_config(doc);
    } else if (!overrides.empty()) {
      throw ConfigError("--set needs a config file");
    }
    if (print_config) {
      out << to_json(config).dump(2) << '\n';
      return exit_ok;
    }
    if (csv_path) config.output.csv = csv_path;

    Outcome result = cmd.handler(config, out);
    if (const auto target = csv_target(name, config.output.csv)) {
      result.table.write(target->string());
      fmt::print(out, "csv = {}\n", target->string());
    }
    return result.code;
  } catch (const ConvergenceError& e) {
    fmt::print(err, "{}: did not converge: {}\n", name, e.what());
    if (!e.trace().empty()) fmt::print(err, "last residual = {}\n", num(e.trace().back()));
    return exit_convergence;
  } catch (const std::exception& e) {
    fmt::print(err, "{}: {}\n", name, e.what());
    return exit_code_for(e);
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace dynsig::cli

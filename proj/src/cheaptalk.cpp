#include "dynsig/cheaptalk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "dynsig/errors.hpp"
#include "dynsig/rng.hpp"

namespace dynsig::cheaptalk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinBinMass = 1e-14;

// Finite bracket for quantile searches.
std::pair<double, double> search_range(const ScalarSource& source) {
  auto [lo, hi] = source.support();
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    const double mu = source.mean();
    const double sd = std::sqrt(source.variance());
    lo = mu - 40.0 * sd;
    hi = mu + 40.0 * sd;
  }
  return {lo, hi};
}

double quantile(const ScalarSource& source, double level) {
  auto [lo, hi] = search_range(source);
  const double support_lo = source.support().first;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (source.moments(support_lo, mid).mass < level)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Bin edges including the support endpoints.
std::vector<double> edges_of(const ScalarSource& source, const std::vector<double>& boundaries) {
  const auto [lo, hi] = source.support();
  std::vector<double> edges;
  edges.reserve(boundaries.size() + 2);
  edges.push_back(lo);
  edges.insert(edges.end(), boundaries.begin(), boundaries.end());
  edges.push_back(hi);
  return edges;
}

// Conditional means of every bin; empty optional when some bin has no mass.
std::optional<std::vector<double>> centroids(const ScalarSource& source,
                                             const std::vector<double>& boundaries) {
  const std::vector<double> edges = edges_of(source, boundaries);
  std::vector<double> out;
  out.reserve(edges.size() - 1);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const IntervalMoments mo = source.moments(edges[i], edges[i + 1]);
    if (!(mo.mass > kMinBinMass)) return std::nullopt;
    out.push_back(mo.first / mo.mass);
  }
  return out;
}

bool strictly_inside(const ScalarSource& source, const std::vector<double>& boundaries) {
  const auto [lo, hi] = source.support();
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    if (!(boundaries[i] > lo && boundaries[i] < hi)) return false;
    if (i > 0 && !(boundaries[i] > boundaries[i - 1])) return false;
  }
  return true;
}

}  // namespace

std::size_t QuantizerPolicy::bin_of(double m) const {
  return static_cast<std::size_t>(std::lower_bound(boundaries.begin(), boundaries.end(), m) -
                                  boundaries.begin());
}

std::vector<double> equal_mass_boundaries(const ScalarSource& source, std::size_t bins) {
  std::vector<double> out;
  for (std::size_t i = 1; i < bins; ++i)
    out.push_back(quantile(source, static_cast<double>(i) / static_cast<double>(bins)));
  return out;
}

SolveResult solve_quantized(const ScalarSource& source, double bias, std::size_t bins,
                            const SolverOptions& options,
                            std::optional<std::vector<double>> initial_boundaries) {
  if (bins < 1) throw ArgumentError("solve_quantized: bin count must be >= 1");
  SolveResult result;
  std::vector<double> a =
      initial_boundaries ? std::move(*initial_boundaries) : equal_mass_boundaries(source, bins);
  if (a.size() + 1 != bins)
    throw ArgumentError("solve_quantized: initial boundaries must have K-1 entries");
  if (!strictly_inside(source, a)) {
    result.diagnostic.reason = "initial boundaries are not ordered inside the support";
    return result;
  }

  std::vector<double> u;
  std::size_t it = 0;
  double update = kInf;
  for (; it < options.max_iters; ++it) {
    auto c = centroids(source, a);
    if (!c) {
      result.diagnostic.reason = "a bin lost all probability mass";
      break;
    }
    u = std::move(*c);
    if (bins == 1) {
      update = 0.0;
      break;
    }
    std::vector<double> next(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) next[i] = 0.5 * (u[i] + u[i + 1]) + bias;
    update = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) update = std::max(update, std::abs(next[i] - a[i]));
    a = std::move(next);
    if (!strictly_inside(source, a)) {
      result.diagnostic.reason = "bin boundaries collapsed or left the support";
      break;
    }
    if (update < options.tol) break;
  }
  result.diagnostic.iterations = it;
  result.diagnostic.last_update = update;
  if (!result.diagnostic.reason.empty()) return result;
  if (it == options.max_iters) {
    result.diagnostic.reason = "fixed-point iteration did not converge";
    return result;
  }

  QuantizerPolicy policy;
  policy.boundaries = std::move(a);
  auto c = centroids(source, policy.boundaries);
  if (!c) {
    result.diagnostic.reason = "a bin lost all probability mass";
    return result;
  }
  policy.actions = std::move(*c);
  const EquilibriumCertificate cert =
      verify_equilibrium(policy, source, bias, options.certificate_tol);
  result.diagnostic.centroid_residual = cert.centroid_residual;
  result.diagnostic.indifference_residual = cert.indifference_residual;
  if (!cert.passes()) {
    result.diagnostic.reason = "fixed point failed its equilibrium certificate";
    return result;
  }
  result.policy = std::move(policy);
  result.certificate = cert;
  return result;
}

std::vector<QuantizerPolicy> enumerate_quantized(const ScalarSource& source, double bias,
                                                 std::size_t bins, std::size_t starts,
                                                 std::uint64_t seed,
                                                 const SolverOptions& options,
                                                 double distinct_tol) {
  if (bins < 1) throw ArgumentError("enumerate_quantized: bin count must be >= 1");
  std::vector<QuantizerPolicy> found;
  for (std::size_t s = 0; s < starts; ++s) {
    std::optional<std::vector<double>> init;
    if (s > 0) {
      StreamRng rng(seed, s, 0);
      std::vector<double> levels(bins - 1);
      for (double& l : levels) l = rng.uniform();
      std::sort(levels.begin(), levels.end());
      std::vector<double> b;
      for (double l : levels) b.push_back(quantile(source, l));
      init = std::move(b);
    }
    SolveResult r = solve_quantized(source, bias, bins, options, init);
    if (!r) continue;
    const bool duplicate = std::any_of(found.begin(), found.end(), [&](const QuantizerPolicy& q) {
      double d = 0.0;
      for (std::size_t i = 0; i < q.actions.size(); ++i)
        d = std::max(d, std::abs(q.actions[i] - r.policy->actions[i]));
      return d <= distinct_tol;
    });
    if (!duplicate) found.push_back(std::move(*r.policy));
  }
  return found;
}

EquilibriumCertificate verify_equilibrium(const QuantizerPolicy& policy,
                                          const ScalarSource& source, double bias, double tol) {
  if (policy.actions.empty() || policy.actions.size() != policy.boundaries.size() + 1)
    throw CoverageError("quantizer must have exactly one more action than boundaries");
  if (!strictly_inside(source, policy.boundaries))
    throw CoverageError("quantizer boundaries must be ascending and inside the support");

  const std::vector<double> edges = edges_of(source, policy.boundaries);
  EquilibriumCertificate cert;
  cert.tolerance = tol;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const IntervalMoments mo = source.moments(edges[i], edges[i + 1]);
    if (!(mo.mass > kMinBinMass))
      throw CoverageError(fmt::format("bin {} carries no probability mass", i));
    const double u = policy.actions[i];
    cert.centroid_residual = std::max(cert.centroid_residual, std::abs(u - mo.first / mo.mass));
    const double shifted = u + bias;
    cert.encoder_cost += mo.second - 2.0 * shifted * mo.first + shifted * shifted * mo.mass;
    cert.decoder_cost += mo.second - 2.0 * u * mo.first + u * u * mo.mass;
  }
  cert.min_action_gap = kInf;
  for (std::size_t i = 0; i < policy.boundaries.size(); ++i) {
    const double target = 0.5 * (policy.actions[i] + policy.actions[i + 1]) + bias;
    cert.indifference_residual =
        std::max(cert.indifference_residual, std::abs(policy.boundaries[i] - target));
    const double gap = policy.actions[i + 1] - policy.actions[i];
    cert.min_action_gap = std::min(cert.min_action_gap, gap);
    if (!(gap > 2.0 * std::abs(bias))) cert.separation_ok = false;
  }
  return cert;
}

std::size_t max_bins(const ScalarSource& source, double bias, const SolverOptions& options) {
  if (bias == 0.0)
    throw UnboundedError("max_bins: with b = 0 the number of bins is unbounded");
  if (!source.bounded()) throw ArgumentError("max_bins: source support must be bounded");
  const auto [lo, hi] = source.support();
  const auto ceiling =
      static_cast<std::size_t>(std::ceil((hi - lo) / (2.0 * std::abs(bias)))) + 1;
  std::size_t best = 1;
  for (std::size_t k = 2; k <= ceiling; ++k)
    if (solve_quantized(source, bias, k, options)) best = k;
  return best;
}

StageCostClasses group_cost_classes(std::span<const double> symbols,
                                    std::span<const double> continuation_costs, double tol) {
  if (symbols.size() != continuation_costs.size())
    throw ShapeError("group_cost_classes: one continuation cost per symbol required");
  StageCostClasses out;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    std::size_t id = out.count();
    for (std::size_t c = 0; c < out.count(); ++c) {
      if (std::abs(out.class_values[c] - continuation_costs[i]) <= tol) {
        id = c;
        break;
      }
    }
    if (id == out.count()) {
      out.representatives.push_back(symbols[i]);
      out.class_values.push_back(continuation_costs[i]);
    }
    out.class_of.push_back(id);
  }
  return out;
}

RepeatedEquilibrium solve_repeated_iid(const ScalarSource& source, double bias,
                                       std::size_t horizon, std::optional<std::size_t> bins,
                                       const SolverOptions& options) {
  if (horizon < 1) throw ArgumentError("solve_repeated_iid: horizon must be >= 1");
  std::size_t k_bins;
  if (source.bounded() && bias != 0.0) {
    const std::size_t limit = max_bins(source, bias, options);
    k_bins = bins.value_or(limit);
    if (k_bins > limit)
      throw ArgumentError(fmt::format("solve_repeated_iid: {} bins exceed the maximum {}",
                                      k_bins, limit));
  } else if (bins) {
    k_bins = *bins;
  } else {
    throw ArgumentError(
        "solve_repeated_iid: bin count is required when the bin bound cannot be computed");
  }

  SolveResult stage = solve_quantized(source, bias, k_bins, options);
  if (!stage)
    throw VerificationError(fmt::format("no {}-bin stage equilibrium: {}", k_bins,
                                        stage.diagnostic.reason));

  RepeatedEquilibrium eq;
  eq.stages.assign(horizon, *stage.policy);
  for (std::size_t k = 0; k < horizon; ++k) {
    eq.certificates.push_back(
        verify_equilibrium(eq.stages[k], source, bias, options.certificate_tol));
    if (!eq.certificates.back().passes())
      throw VerificationError(fmt::format(
          "stage {} certificate failed (centroid {}, indifference {})", k,
          eq.certificates.back().centroid_residual,
          eq.certificates.back().indifference_residual));
    eq.encoder_cost += eq.certificates[k].encoder_cost;
    eq.decoder_cost += eq.certificates[k].decoder_cost;
  }

  // Later stages ignore the first-stage symbol, so the continuation cost
  // G(x_0) is the sum of the later stage costs for every symbol.
  const std::size_t symbols = eq.stages[0].bins();
  std::vector<double> ids(symbols), continuation(symbols, 0.0);
  for (std::size_t s = 0; s < symbols; ++s) {
    ids[s] = static_cast<double>(s);
    for (std::size_t k = 1; k < horizon; ++k) continuation[s] += eq.certificates[k].encoder_cost;
  }
  eq.classes = group_cost_classes(ids, continuation);

  const double gap = 2.0 * std::abs(bias);
  for (std::size_t c = 0; c < eq.classes.count(); ++c) {
    std::vector<double> acts;
    for (std::size_t s = 0; s < symbols; ++s)
      if (eq.classes.class_of[s] == c) acts.push_back(eq.stages[0].actions[s]);
    std::sort(acts.begin(), acts.end());
    for (std::size_t i = 1; i < acts.size(); ++i)
      if (!(acts[i] - acts[i - 1] > gap)) eq.within_class_separation = false;
  }
  if (!eq.within_class_separation)
    throw VerificationError("within-class decoder actions are not separated by more than 2|b|");
  return eq;
}

bool verify_multidim_pair(const Vector& u_alpha, const Vector& u_beta, const Vector& bias) {
  if (u_alpha.size() != u_beta.size() || u_alpha.size() != bias.size())
    throw ShapeError("verify_multidim_pair: vectors must share one dimension");
  const Vector d = u_beta - u_alpha;
  const double norm = d.norm();
  if (norm == 0.0) throw ArgumentError("verify_multidim_pair: actions must differ");
  const double projected = std::abs(bias.dot(d)) / norm;
  return projected <= 0.5 * norm;
}

RevealingSolution stackelberg_cheaptalk(const GameSpec& spec) {
  spec.validate();
  if (spec.channel) throw WrongGameError("stackelberg_cheaptalk: game has a channel");
  RevealingSolution sol;
  sol.encoder = identity_encoder();
  sol.decoder = identity_decoder();
  for (std::size_t k = 0; k < spec.horizon; ++k)
    sol.encoder_cost += spec.stage_weight(k) * spec.bias.squaredNorm();
  return sol;
}

EncoderPolicy quantizer_encoder(std::vector<QuantizerPolicy> stages) {
  return [stages = std::move(stages)](std::size_t k, std::span<const Vector> m,
                                      std::span<const Vector>) {
    return Vector::Constant(1, static_cast<double>(stages.at(k).bin_of(m[k](0)))).eval();
  };
}

DecoderPolicy quantizer_decoder(std::vector<QuantizerPolicy> stages) {
  return [stages = std::move(stages)](std::size_t k, std::span<const Vector> y) {
    const QuantizerPolicy& q = stages.at(k);
    const auto symbol = static_cast<std::size_t>(std::clamp(
        std::llround(y[k](0)), 0LL, static_cast<long long>(q.bins()) - 1));
    return Vector::Constant(1, q.actions[symbol]).eval();
  };
}

}  // namespace dynsig::cheaptalk

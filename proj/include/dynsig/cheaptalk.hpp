#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynsig/game.hpp"

namespace dynsig::cheaptalk {

// Scalar quantized encoder with one decoder action per bin. Bin i is
// (boundaries[i-1], boundaries[i]] intersected with the source support; a
// point exactly on a boundary belongs to the left bin.
struct QuantizerPolicy {
  std::vector<double> boundaries;  // strictly ascending, size K-1
  std::vector<double> actions;     // size K

  std::size_t bins() const { return actions.size(); }
  std::size_t bin_of(double m) const;
};

struct EquilibriumCertificate {
  double centroid_residual = 0.0;      // max |u_i - E[m | bin i]|
  double indifference_residual = 0.0;  // max |a_i - ((u_i + u_{i+1})/2 + b)|
  bool separation_ok = true;           // every consecutive gap > 2|b|
  double min_action_gap = 0.0;         // +inf for a single bin
  double encoder_cost = 0.0;           // E[(m - u - b)^2]
  double decoder_cost = 0.0;           // E[(m - u)^2]
  double tolerance = 0.0;

  bool passes() const {
    return centroid_residual <= tolerance && indifference_residual <= tolerance &&
           separation_ok;
  }
};

struct SolverOptions {
  double tol = 1e-10;              // fixed-point update tolerance
  double certificate_tol = 1e-8;   // verification tolerance
  std::size_t max_iters = 200000;
};

struct SolveDiagnostic {
  std::string reason;
  std::size_t iterations = 0;
  double last_update = 0.0;
  double centroid_residual = 0.0;
  double indifference_residual = 0.0;
};

// Either a verified equilibrium policy or the reason none was reached.
struct SolveResult {
  std::optional<QuantizerPolicy> policy;
  std::optional<EquilibriumCertificate> certificate;
  SolveDiagnostic diagnostic;

  explicit operator bool() const { return policy.has_value(); }
};

// Equal-mass boundaries (K-1 interior quantiles of the source).
std::vector<double> equal_mass_boundaries(const ScalarSource& source, std::size_t bins);

// Alternating best responses: actions <- conditional means of the bins,
// boundaries <- midpoints of adjacent actions shifted by b. Starts from
// equal-mass boundaries unless `initial_boundaries` is given. Throws
// ArgumentError for K < 1.
SolveResult solve_quantized(const ScalarSource& source, double bias, std::size_t bins,
                            const SolverOptions& options = {},
                            std::optional<std::vector<double>> initial_boundaries = {});

// Runs `starts` initializations (start 0 is the equal-mass one, the rest are
// seeded random boundary vectors) and returns the distinct fixed points in
// initialization order. Two fixed points are distinct when some action
// differs by more than `distinct_tol`.
std::vector<QuantizerPolicy> enumerate_quantized(const ScalarSource& source, double bias,
                                                 std::size_t bins, std::size_t starts,
                                                 std::uint64_t seed,
                                                 const SolverOptions& options = {},
                                                 double distinct_tol = 1e-6);

// Throws CoverageError if the bins do not tile the support (shape mismatch,
// unordered boundaries, or a bin with no source mass).
EquilibriumCertificate verify_equilibrium(const QuantizerPolicy& policy,
                                          const ScalarSource& source, double bias,
                                          double tol = 1e-8);

// Largest K with a verified equilibrium, by ascending search up to
// ceil(|support| / 2|b|) + 1. Requires bounded support; b = 0 throws
// UnboundedError.
std::size_t max_bins(const ScalarSource& source, double bias, const SolverOptions& options = {});

// Equivalence classes of first-stage symbols by continuation cost G(x).
struct StageCostClasses {
  std::vector<double> representatives;  // one symbol per class
  std::vector<double> class_values;     // G of each class
  std::vector<std::size_t> class_of;    // class id per input symbol

  std::size_t count() const { return representatives.size(); }
};

// Greedy grouping in input order: a symbol joins the first class whose value
// is within `tol` of its own continuation cost.
StageCostClasses group_cost_classes(std::span<const double> symbols,
                                    std::span<const double> continuation_costs,
                                    double tol = 1e-9);

struct RepeatedEquilibrium {
  std::vector<QuantizerPolicy> stages;
  std::vector<EquilibriumCertificate> certificates;
  StageCostClasses classes;
  bool within_class_separation = true;
  double encoder_cost = 0.0;
  double decoder_cost = 0.0;
};

// Product equilibrium of the N-stage repeated game with an i.i.d. source:
// the same stage quantizer at every stage. `bins` defaults to max_bins for
// bounded sources; unbounded sources must pass it explicitly. Throws
// VerificationError when a stage certificate or the within-class separation
// fails.
RepeatedEquilibrium solve_repeated_iid(const ScalarSource& source, double bias,
                                       std::size_t horizon,
                                       std::optional<std::size_t> bins = {},
                                       const SolverOptions& options = {});

// True iff the projection of b on d = u_beta - u_alpha has norm <= |d|/2,
// i.e. the two actions can coexist in an equilibrium.
bool verify_multidim_pair(const Vector& u_alpha, const Vector& u_beta, const Vector& bias);

struct RevealingSolution {
  EncoderPolicy encoder;
  DecoderPolicy decoder;
  double encoder_cost = 0.0;  // sum_k beta^k |b|^2
  double decoder_cost = 0.0;  // 0
};

// Fully revealing leader-follower solution of the cheap-talk game.
// Throws WrongGameError when the game has a channel.
RevealingSolution stackelberg_cheaptalk(const GameSpec& spec);

// Policies that play a quantizer at each stage: the encoder transmits the
// bin index, the decoder answers with that bin's action.
EncoderPolicy quantizer_encoder(std::vector<QuantizerPolicy> stages);
DecoderPolicy quantizer_decoder(std::vector<QuantizerPolicy> stages);

}  // namespace dynsig::cheaptalk

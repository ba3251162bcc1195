#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "dynsig/game.hpp"

namespace dynsig::nash {

// x_k = sum_{i<=k} A_{k,i} m_i + sum_{i<k} B_{k,i} y_i + C_k
struct EncoderStage {
  std::vector<Matrix> source_gains;    // A_{k,0..k}, p x n
  std::vector<Matrix> feedback_gains;  // B_{k,0..k-1}, p x p
  Vector offset;                       // C_k
};

// u_k = sum_{i<=k} D_{k,i} y_i + E_k
struct DecoderStage {
  std::vector<Matrix> gains;  // D_{k,0..k}, n x p
  Vector offset;              // E_k
};

using AffineEncoder = std::vector<EncoderStage>;
using AffineDecoder = std::vector<DecoderStage>;

struct AffineProfile {
  AffineEncoder encoder;
  AffineDecoder decoder;

  // All coefficients zero: the encoder sends nothing, the decoder answers
  // with the prior mean (zero for Gauss-Markov sources).
  static AffineProfile babbling(const GameSpec& spec);
  // Throws ShapeError unless every block matches the game's dimensions.
  void check(const GameSpec& spec) const;
};

AffineEncoder zero_affine_encoder(const GameSpec& spec);

// Largest absolute coefficient difference.
double max_difference(const AffineEncoder& a, const AffineEncoder& b);
double max_difference(const AffineDecoder& a, const AffineDecoder& b);

// Exact linear MMSE decoder u_k = E[m_k | y_[0,k]] for an affine encoder.
// Requires a Gauss-Markov source and a channel.
AffineDecoder decoder_best_response(const AffineEncoder& encoder, const GameSpec& spec);

// Backward induction on the encoder cost for a fixed affine decoder.
// Horizons above 2 throw ArgumentError; a stage Hessian that is not
// positive definite throws UnboundedError.
AffineEncoder encoder_best_response(const AffineDecoder& decoder, const GameSpec& spec);

struct AffineCosts {
  double encoder = 0.0;
  double decoder = 0.0;
};

// Closed-form expected costs of an affine profile.
AffineCosts expected_costs(const AffineProfile& profile, const GameSpec& spec);

struct IterationOptions {
  double damping = 0.5;  // weight of the new best response, in (0, 1]
  double tol = 1e-10;
  std::size_t max_iters = 10000;
  double informative_threshold = 1e-7;
};

struct IterationResult {
  AffineProfile profile;
  std::size_t iterations = 0;
  double encoder_cost = 0.0;
  double decoder_cost = 0.0;
  bool informative = false;
  // Change of each player's coefficients under its own best response.
  double decoder_residual = 0.0;
  double encoder_residual = 0.0;
};

// Damped alternation decoder -> encoder until the largest coefficient
// update falls below tol. Throws ConvergenceError carrying the update trace
// when max_iters is exhausted.
IterationResult best_response_iteration(const GameSpec& spec, const AffineProfile& init,
                                        const IterationOptions& options = {});

bool is_informative(const AffineEncoder& encoder, double threshold = 1e-7);

EncoderPolicy affine_encoder_policy(AffineEncoder encoder);
DecoderPolicy affine_decoder_policy(AffineDecoder decoder);

// ---------------------------------------------------------------------------
// Two-stage scalar classification
// ---------------------------------------------------------------------------

enum class Regime {
  no_informative_affine,      // lambda above both ratios
  second_stage_unused,        // m_1 ratio < lambda <= m_0 ratio
  conditionally_informative,  // m_0 ratio < lambda <= m_1 ratio
  uncovered,                  // none of the guards holds
};

const char* regime_name(Regime r);

struct TwoStageRegime {
  Regime regime = Regime::uncovered;
  // Unset where the guards say nothing about informativeness.
  std::optional<bool> informative;
  double first_ratio = 0.0;   // (g^2 + 1) var_M0 / var_W0
  double second_ratio = 0.0;  // var_M1 / var_W1
  double second_variance = 0.0;
  // Open lambda window of the conditional regime, when var_M1 >= 4 b^2.
  std::optional<double> window_low;
  std::optional<double> window_high;
  // lambda equals one of the evaluated bounds exactly.
  bool at_boundary = false;
};

// Requires a scalar Gauss-Markov source, scalar channel and horizon 2.
TwoStageRegime classify_two_stage(const GameSpec& spec);

}  // namespace dynsig::nash

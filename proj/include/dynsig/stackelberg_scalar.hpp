#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "dynsig/game.hpp"

namespace dynsig::stackelberg {

// Per-stage distortion bounds and information terms for a power allocation.
struct DistortionTrace {
  std::vector<double> distortion;       // Delta_k, MMSE lower bound after y_k
  std::vector<double> innovation;       // Delta_tilde_k, prior variance before y_k
  std::vector<double> source_variance;  // sigma^2_{M_k}
  std::vector<double> capacity;         // C_k, bits
  std::vector<double> channel_capacity; // C_hat_k
  std::vector<double> prior_capacity;   // C_tilde_k
};

// Requires a scalar Gauss-Markov source and scalar channel. Throws
// ArgumentError for negative powers, ShapeError for a wrong length.
DistortionTrace distortion_recursion(const std::vector<double>& powers, const GameSpec& spec);

// sum_k beta^k (Delta_k + lambda P_k + b^2)
double lower_bound_cost(const std::vector<double>& powers, const GameSpec& spec);

// Analytic gradient of lower_bound_cost.
std::vector<double> lower_bound_gradient(const std::vector<double>& powers, const GameSpec& spec);

// max_k (sigma^2_{M_k} / sigma^2_{W_k}) sum_{i<N-k} (beta g^2)^i, with beta = 1
// when the game is undiscounted. At and above this price the zero allocation
// is the global minimizer of the lower bound.
double informativeness_threshold(const GameSpec& spec);

// Infinite-horizon threshold sup_k (sigma^2_{M_k} / sigma^2_W) / (1 - beta g^2),
// using Sigma_V[0] and Sigma_W[0] as the stationary noise levels. Empty when
// beta g^2 >= 1; +inf when the variance sequence is unbounded. Throws
// ArgumentError when the game has no discount.
std::optional<double> discounted_threshold(const GameSpec& spec);

struct PowerOptions {
  double gradient_tol = 1e-10;  // projected gradient, infinity norm
  std::size_t max_iters = 5000;
  double power_cap = 1e6;       // upper bound on every P_k
};

struct PowerSolution {
  std::vector<double> powers;
  DistortionTrace trace;
  double lower_bound = 0.0;
  double threshold = 0.0;
  bool informative = false;
  bool power_capped = false;      // some P_k sits at the cap
  std::vector<double> encoder_gains;  // a_k = sqrt(P_k / Delta_tilde_k)
  std::vector<double> decoder_gains;  // Kalman correction gains
  std::size_t iterations = 0;
  double projected_gradient = 0.0;
};

// Minimizes the lower bound over 0 <= P <= cap. Above the threshold returns
// P = 0 without iterating. Throws ConvergenceError (trace of projected
// gradient norms of the best start) when no start reaches gradient_tol.
PowerSolution optimize_power(const GameSpec& spec, const PowerOptions& options = {});

// Linear innovation code realizing a power allocation.
LinearInnovationCode synthesize_policies(const std::vector<double>& powers, const GameSpec& spec);

}  // namespace dynsig::stackelberg

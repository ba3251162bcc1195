#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dynsig/game.hpp"

namespace dynsig::stackelberg {

// How the diagonal coding matrix zeta_k is chosen per mode pair (nu, tau).
enum class ZetaRule {
  // Minimizes nu / (1 + z) + tau z: z = max(0, sqrt(nu / tau) - 1).
  penalized,
  // z = 1 / tau on the strongest source mode only, i.e. unit channel-side
  // cost. This is the scalar-channel closed form; it requires p = 1.
  unit_budget,
};

struct DPOptions {
  ZetaRule rule = ZetaRule::penalized;
  double tol = 1e-14;            // relative change of the innovation path
  std::size_t max_sweeps = 10000;
};

// Backward value recursion V_k(S) = tr(K_k S + L_k) and forward innovation
// path of a linear innovation encoder over a vector channel.
struct DPSolution {
  std::vector<Matrix> K;             // N + 1 entries, K[N] = 0
  std::vector<Matrix> L;             // N + 1 entries, L[N] = 0
  std::vector<Matrix> zeta;          // p x n, rectangular diagonal
  std::vector<Matrix> channel_modes; // Pi_k, columns by ascending tau
  std::vector<Vector> channel_costs; // tau_k, eigenvalues of lambda Sigma_W
  std::vector<Matrix> source_modes;  // U_k, columns by descending nu
  std::vector<Vector> source_weights;// nu_k in U_k's column order
  std::vector<Matrix> weighted_innovation;  // S^{1/2}(beta G^T K G + I)S^{1/2}
  std::vector<Matrix> innovation;    // Sigma_tilde_k, N + 1 entries
  std::vector<Matrix> gains;         // A*_k, p x n
  std::vector<double> powers;        // E|x_k|^2
  std::vector<double> stage_costs;   // E|m - u - b|^2 + lambda E|x|^2
  double value = 0.0;                // tr(K_0 Sigma_tilde_0 + L_0)
  std::size_t sweeps = 0;
  std::vector<std::string> warnings;
};

// One backward sweep along a given innovation path (N entries). Fills K, L,
// zeta and the modal matrices. Throws HypothesisError unless G, Sigma_M0 and
// every Sigma_V are diagonal; lambda = 0 throws UnboundedError.
DPSolution backward_dp(const GameSpec& spec, const std::vector<Matrix>& innovation,
                       ZetaRule rule = ZetaRule::penalized);

// Forward pass for a completed backward sweep: innovation path from
// Sigma_tilde_0 = Sigma_M0, encoder gains A* = Sigma_W^{1/2} Pi zeta U^T
// Sigma_tilde^{-1/2}, powers, stage costs and the root value. A singular
// innovation uses the pseudo-inverse and records a warning.
void forward_synthesis(DPSolution& dp, const GameSpec& spec);

// Alternates backward sweeps and forward passes until the innovation path
// settles (each backward sweep is exact for the previous path). Throws
// ConvergenceError after max_sweeps.
DPSolution solve_dp(const GameSpec& spec, const DPOptions& options = {});

double value(const DPSolution& dp);

// Bracketed stage objective tr(zeta^T Pi_tilde zeta) +
// tr(M (I + U zeta^T zeta U^T)^{-1}) at stage k for an arbitrary p x n zeta.
double stage_objective(const DPSolution& dp, std::size_t k, const Matrix& zeta);

// Scalar-channel closed form: K_k = (G^T K_{k+1} G + I) diag(c, 1, ..., 1)
// with c = lambda var_W / (1 + lambda var_W), and L_k = K_{k+1} Sigma_V +
// L_{k+1} + diag(1, 0, ..., 0) + b b^T. Needs p = 1 and no discount.
std::pair<std::vector<Matrix>, std::vector<Matrix>> scalar_channel_closed_form(
    const GameSpec& spec);

}  // namespace dynsig::stackelberg

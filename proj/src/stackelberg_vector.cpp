#include "dynsig/stackelberg_vector.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "dynsig/errors.hpp"

namespace dynsig::stackelberg {

namespace {

using Index = Eigen::Index;

void check_hypotheses(const GameSpec& spec) {
  spec.validate();
  const GaussMarkovSource& gm = spec.gauss_markov();
  if (!spec.channel) throw WrongGameError("vector Stackelberg DP requires a channel");
  if (!is_diagonal(gm.transition()) || !is_diagonal(gm.initial_covariance()))
    throw HypothesisError("vector DP requires diagonal G and Sigma_M0");
  for (std::size_t k = 0; k < spec.horizon; ++k)
    if (!is_diagonal(gm.process_noise_at(k)))
      throw HypothesisError(fmt::format("vector DP requires diagonal Sigma_V[{}]", k));
  if (spec.lambda == 0.0)
    throw UnboundedError("vector DP: zero power price makes the coding matrix unbounded");
  if (spec.lambda < 0.0) throw ArgumentError("power price must be nonnegative");
}

double discount_factor(const GameSpec& spec) { return spec.discount.value_or(1.0); }

}  // namespace

DPSolution backward_dp(const GameSpec& spec, const std::vector<Matrix>& innovation,
                       ZetaRule rule) {
  check_hypotheses(spec);
  const GaussMarkovSource& gm = spec.gauss_markov();
  const std::size_t horizon = spec.horizon;
  const auto n = static_cast<Index>(gm.dim());
  const auto p = static_cast<Index>(spec.channel->dim());
  if (innovation.size() < horizon) throw ShapeError("backward DP: innovation path too short");
  if (rule == ZetaRule::unit_budget && p != 1)
    throw ArgumentError("unit-budget coding matrix is defined for scalar channels only");
  const Index slots = std::min(n, p);
  const double beta = discount_factor(spec);
  const Matrix& g = gm.transition();
  const Matrix bbt = spec.bias * spec.bias.transpose();

  DPSolution dp;
  dp.K.assign(horizon + 1, Matrix::Zero(n, n));
  dp.L.assign(horizon + 1, Matrix::Zero(n, n));
  dp.zeta.resize(horizon);
  dp.channel_modes.resize(horizon);
  dp.channel_costs.resize(horizon);
  dp.source_modes.resize(horizon);
  dp.source_weights.resize(horizon);
  dp.weighted_innovation.resize(horizon);
  dp.innovation.assign(innovation.begin(), innovation.begin() + static_cast<long>(horizon));

  for (std::size_t kk = horizon; kk-- > 0;) {
    const SymmetricEigen chan = symmetric_eigen(spec.lambda * spec.channel->noise(kk));
    const Matrix carry = beta * g.transpose() * dp.K[kk + 1] * g + Matrix::Identity(n, n);
    const Matrix root = psd_sqrt(dp.innovation[kk]);
    Matrix m = root * carry * root;
    m = 0.5 * (m + m.transpose());
    const SymmetricEigen src = symmetric_eigen(m);
    // Descending nu: the strongest source mode meets the cheapest channel mode.
    const Matrix u = src.vectors.rowwise().reverse();
    const Vector nu = src.values.reverse();

    Matrix zeta = Matrix::Zero(p, n);
    for (Index j = 0; j < slots; ++j) {
      const double tau = chan.values(j);
      const double weight = std::max(nu(j), 0.0);
      double z = 0.0;
      if (rule == ZetaRule::penalized)
        z = std::max(0.0, std::sqrt(weight / tau) - 1.0);
      else if (j == 0)
        z = 1.0 / tau;
      zeta(j, j) = std::sqrt(z);
    }

    const Matrix shrink =
        Matrix::Identity(n, n) -
        zeta.transpose() * (Matrix::Identity(p, p) + zeta * zeta.transpose()).inverse() * zeta;
    const Matrix pi_tilde = chan.values.asDiagonal();
    dp.K[kk] = carry * u * shrink * u.transpose();
    dp.L[kk] = beta * (dp.K[kk + 1] * gm.process_noise_at(kk) + dp.L[kk + 1]) +
               u * zeta.transpose() * pi_tilde * zeta * u.transpose() + bbt;

    dp.zeta[kk] = zeta;
    dp.channel_modes[kk] = chan.vectors;
    dp.channel_costs[kk] = chan.values;
    dp.source_modes[kk] = u;
    dp.source_weights[kk] = nu;
    dp.weighted_innovation[kk] = m;
  }
  return dp;
}

void forward_synthesis(DPSolution& dp, const GameSpec& spec) {
  check_hypotheses(spec);
  const GaussMarkovSource& gm = spec.gauss_markov();
  const std::size_t horizon = spec.horizon;
  const Matrix& g = gm.transition();

  dp.innovation.assign(horizon + 1, Matrix());
  dp.innovation[0] = gm.initial_covariance();
  dp.gains.assign(horizon, Matrix());
  dp.powers.assign(horizon, 0.0);
  dp.stage_costs.assign(horizon, 0.0);
  dp.warnings.clear();

  for (std::size_t k = 0; k < horizon; ++k) {
    const Matrix& s = dp.innovation[k];
    const Matrix& u = dp.source_modes[k];
    const Matrix& zeta = dp.zeta[k];
    const Matrix& w = spec.channel->noise(k);
    bool singular = false;
    const Matrix inv_root = psd_inv_sqrt(s, 1e-14, &singular);
    if (singular && zeta.cwiseAbs().maxCoeff() > 0.0)
      dp.warnings.push_back(
          fmt::format("stage {}: innovation covariance is singular; using its pseudo-inverse", k));
    const Matrix gain = psd_sqrt(w) * dp.channel_modes[k] * zeta * u.transpose() * inv_root;
    dp.gains[k] = gain;

    // MMSE error of m_tilde from y = A m_tilde + w.
    const Matrix out_cov = gain * s * gain.transpose() + w;
    const Matrix cross = s * gain.transpose();
    Matrix err = s - cross * out_cov.ldlt().solve(cross.transpose());
    err = 0.5 * (err + err.transpose());
    dp.powers[k] = (gain * s * gain.transpose()).trace();
    dp.stage_costs[k] = err.trace() + spec.lambda * dp.powers[k] + spec.bias.squaredNorm();

    Matrix next = g * err * g.transpose() + gm.process_noise_at(k);
    dp.innovation[k + 1] = 0.5 * (next + next.transpose());
  }
  dp.value = value(dp);
}

double value(const DPSolution& dp) {
  return (dp.K.front() * dp.innovation.front() + dp.L.front()).trace();
}

DPSolution solve_dp(const GameSpec& spec, const DPOptions& options) {
  check_hypotheses(spec);
  const GaussMarkovSource& gm = spec.gauss_markov();
  // Start from the silent path: Sigma_tilde_k = Sigma_M(k).
  std::vector<Matrix> path = gm.stage_covariances(spec.horizon);
  std::vector<double> trace;
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    DPSolution dp = backward_dp(spec, path, options.rule);
    forward_synthesis(dp, spec);
    double change = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < spec.horizon; ++k) {
      change = std::max(change, (dp.innovation[k] - path[k]).cwiseAbs().maxCoeff());
      scale = std::max(scale, path[k].cwiseAbs().maxCoeff());
    }
    trace.push_back(change);
    path.assign(dp.innovation.begin(), dp.innovation.end() - 1);
    if (change <= options.tol * std::max(scale, 1.0)) {
      // Re-run the backward sweep on the settled path so K, L and zeta
      // belong to exactly the innovations reported.
      DPSolution final_dp = backward_dp(spec, path, options.rule);
      forward_synthesis(final_dp, spec);
      final_dp.sweeps = sweep;
      return final_dp;
    }
  }
  throw ConvergenceError(
      fmt::format("vector DP: innovation path did not settle in {} sweeps", options.max_sweeps),
      std::move(trace));
}

double stage_objective(const DPSolution& dp, std::size_t k, const Matrix& zeta) {
  const Matrix& u = dp.source_modes.at(k);
  const Matrix& m = dp.weighted_innovation.at(k);
  if (zeta.rows() != dp.zeta.at(k).rows() || zeta.cols() != dp.zeta.at(k).cols())
    throw ShapeError("stage objective: zeta has the wrong shape");
  const Index n = u.rows();
  const Matrix pi_tilde = dp.channel_costs[k].asDiagonal();
  const Matrix inner = Matrix::Identity(n, n) + u * zeta.transpose() * zeta * u.transpose();
  return (zeta.transpose() * pi_tilde * zeta).trace() + (m * inner.inverse()).trace();
}

std::pair<std::vector<Matrix>, std::vector<Matrix>> scalar_channel_closed_form(
    const GameSpec& spec) {
  spec.validate();
  const GaussMarkovSource& gm = spec.gauss_markov();
  if (!spec.channel || spec.channel->dim() != 1)
    throw ShapeError("scalar-channel closed form needs a channel of dimension 1");
  if (spec.discount) throw ArgumentError("scalar-channel closed form is undiscounted");
  const auto n = static_cast<Index>(gm.dim());
  const Matrix& g = gm.transition();
  std::vector<Matrix> k_seq(spec.horizon + 1, Matrix::Zero(n, n));
  std::vector<Matrix> l_seq(spec.horizon + 1, Matrix::Zero(n, n));
  Matrix first = Matrix::Zero(n, n);
  first(0, 0) = 1.0;
  for (std::size_t kk = spec.horizon; kk-- > 0;) {
    const double tw = spec.lambda * spec.channel->noise(kk)(0, 0);
    Vector diag = Vector::Ones(n);
    diag(0) = tw / (1.0 + tw);
    k_seq[kk] = (g.transpose() * k_seq[kk + 1] * g + Matrix::Identity(n, n)) * diag.asDiagonal();
    l_seq[kk] = k_seq[kk + 1] * gm.process_noise_at(kk) + l_seq[kk + 1] + first +
                spec.bias * spec.bias.transpose();
  }
  return {k_seq, l_seq};
}

}  // namespace dynsig::stackelberg

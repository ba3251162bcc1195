#include "dynsig/stackelberg_scalar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "dynsig/errors.hpp"

namespace dynsig::stackelberg {

namespace {

struct ScalarGame {
  double g = 0.0;
  std::vector<double> var_m, var_v, var_w, weight;
  double bias_sq = 0.0;
  double lambda = 0.0;
  std::size_t horizon = 0;
};

ScalarGame scalar_view(const GameSpec& spec) {
  spec.validate();
  const GaussMarkovSource& gm = spec.gauss_markov();
  if (gm.dim() != 1 || !spec.channel || spec.channel->dim() != 1)
    throw ShapeError("scalar Stackelberg analysis needs a scalar source and scalar channel");
  ScalarGame s;
  s.horizon = spec.horizon;
  s.g = gm.transition()(0, 0);
  for (const Matrix& c : gm.stage_covariances(spec.horizon)) s.var_m.push_back(c(0, 0));
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    s.var_v.push_back(gm.process_noise_at(k)(0, 0));
    s.var_w.push_back(spec.channel->noise(k)(0, 0));
    s.weight.push_back(spec.stage_weight(k));
  }
  s.bias_sq = spec.bias.squaredNorm();
  s.lambda = spec.lambda;
  return s;
}

void check_powers(const std::vector<double>& p, std::size_t horizon) {
  if (p.size() != horizon) throw ShapeError("power allocation must have one entry per stage");
  for (double v : p)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ArgumentError("power allocation entries must be finite and nonnegative");
}

DistortionTrace recursion(const std::vector<double>& p, const ScalarGame& s) {
  DistortionTrace t;
  t.source_variance = s.var_m;
  for (std::size_t k = 0; k < s.horizon; ++k) {
    const double prior = k == 0 ? s.var_m[0] : s.var_v[k - 1] + s.g * s.g * t.distortion[k - 1];
    const double snr = 1.0 + p[k] / s.var_w[k];
    t.innovation.push_back(prior);
    t.distortion.push_back(prior / snr);
    t.channel_capacity.push_back(0.5 * std::log2(snr));
    t.prior_capacity.push_back(k == 0 ? 0.0 : 0.5 * std::log2(s.var_m[k] / prior));
    t.capacity.push_back(t.prior_capacity.back() + t.channel_capacity.back());
  }
  return t;
}

double cost(const std::vector<double>& p, const ScalarGame& s) {
  const DistortionTrace t = recursion(p, s);
  double total = 0.0;
  for (std::size_t k = 0; k < s.horizon; ++k)
    total += s.weight[k] * (t.distortion[k] + s.lambda * p[k] + s.bias_sq);
  return total;
}

// dDelta_l/dP_k is zero for l < k, -Delta_tilde_k / (sigma_W^2 (1 + P_k/sigma_W^2)^2)
// for l = k, and g^2 / (1 + P_l/sigma_W^2) times dDelta_{l-1}/dP_k beyond.
std::vector<double> gradient(const std::vector<double>& p, const ScalarGame& s) {
  const DistortionTrace t = recursion(p, s);
  std::vector<double> grad(s.horizon);
  for (std::size_t k = 0; k < s.horizon; ++k) {
    const double snr = 1.0 + p[k] / s.var_w[k];
    double d = -t.innovation[k] / (s.var_w[k] * snr * snr);
    double sum = s.weight[k] * d;
    for (std::size_t l = k + 1; l < s.horizon; ++l) {
      d *= s.g * s.g / (1.0 + p[l] / s.var_w[l]);
      sum += s.weight[l] * d;
    }
    grad[k] = s.weight[k] * s.lambda + sum;
  }
  return grad;
}

double threshold(const ScalarGame& s) {
  const double beta = s.horizon > 1 ? s.weight[1] : 1.0;
  double best = 0.0;
  for (std::size_t k = 0; k < s.horizon; ++k) {
    double geometric = 0.0, term = 1.0;
    for (std::size_t i = 0; i + k < s.horizon; ++i) {
      geometric += term;
      term *= beta * s.g * s.g;
    }
    best = std::max(best, s.var_m[k] / s.var_w[k] * geometric);
  }
  return best;
}

// Projected gradient on the box [0, cap]: components pinned at a bound
// with the gradient pushing outward are zeroed.
std::vector<double> projected(const std::vector<double>& p, const std::vector<double>& g,
                              double cap) {
  std::vector<double> out(g);
  for (std::size_t i = 0; i < p.size(); ++i)
    if ((p[i] <= 0.0 && g[i] > 0.0) || (p[i] >= cap && g[i] < 0.0)) out[i] = 0.0;
  return out;
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

struct StartResult {
  std::vector<double> p;
  double value = 0.0;
  double pg = 0.0;
  std::size_t iters = 0;
  std::vector<double> trace;
};

// Projected BFGS with Armijo backtracking along the projection arc. The
// inverse Hessian is restricted to the free set and reset whenever the
// free set changes.
StartResult projected_bfgs(std::vector<double> p, const ScalarGame& s, const PowerOptions& o) {
  const std::size_t n = p.size();
  const double cap = o.power_cap;
  for (double& v : p) v = std::clamp(v, 0.0, cap);
  double f = cost(p, s);
  std::vector<double> g = gradient(p, s);
  Matrix h = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<bool> free_prev(n, true);
  StartResult r;

  for (std::size_t it = 0; it < o.max_iters; ++it) {
    const std::vector<double> pg = projected(p, g, cap);
    r.trace.push_back(inf_norm(pg));
    if (r.trace.back() <= o.gradient_tol) break;
    r.iters = it + 1;

    std::vector<bool> free(n);
    for (std::size_t i = 0; i < n; ++i) free[i] = pg[i] != 0.0 || (p[i] > 0.0 && p[i] < cap);
    if (free != free_prev) h.setIdentity();
    free_prev = free;

    Vector dir = Vector::Zero(static_cast<Eigen::Index>(n));
    {
      Vector gv = Eigen::Map<const Vector>(pg.data(), static_cast<Eigen::Index>(n));
      dir = -h * gv;
      for (std::size_t i = 0; i < n; ++i)
        if (!free[i]) dir(static_cast<Eigen::Index>(i)) = 0.0;
      if (dir.dot(gv) >= 0.0) {
        dir = -gv;
        h.setIdentity();
      }
    }

    double t = 1.0;
    std::vector<double> next(n);
    double f_next = f;
    bool accepted = false;
    for (int ls = 0; ls < 80; ++ls) {
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        next[i] = std::clamp(p[i] + t * dir(static_cast<Eigen::Index>(i)), 0.0, cap);
        decrease += g[i] * (next[i] - p[i]);
      }
      f_next = cost(next, s);
      if (f_next <= f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;

    const std::vector<double> g_next = gradient(next, s);
    Vector sv(static_cast<Eigen::Index>(n)), yv(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const bool use = free[i];
      sv(static_cast<Eigen::Index>(i)) = use ? next[i] - p[i] : 0.0;
      yv(static_cast<Eigen::Index>(i)) = use ? g_next[i] - g[i] : 0.0;
    }
    const double sy = sv.dot(yv);
    if (sy > 1e-300 && sy > 1e-12 * sv.norm() * yv.norm()) {
      if (it == 0 || h.isIdentity()) h *= sy / yv.squaredNorm();
      const double rho = 1.0 / sy;
      const Matrix eye = Matrix::Identity(h.rows(), h.cols());
      h = (eye - rho * sv * yv.transpose()) * h * (eye - rho * yv * sv.transpose()) +
          rho * sv * sv.transpose();
    }
    p = next;
    f = f_next;
    g = g_next;
  }
  r.p = p;
  r.value = f;
  r.pg = inf_norm(projected(p, g, cap));
  return r;
}

}  // namespace

DistortionTrace distortion_recursion(const std::vector<double>& powers, const GameSpec& spec) {
  const ScalarGame s = scalar_view(spec);
  check_powers(powers, s.horizon);
  return recursion(powers, s);
}

double lower_bound_cost(const std::vector<double>& powers, const GameSpec& spec) {
  const ScalarGame s = scalar_view(spec);
  check_powers(powers, s.horizon);
  return cost(powers, s);
}

std::vector<double> lower_bound_gradient(const std::vector<double>& powers,
                                         const GameSpec& spec) {
  const ScalarGame s = scalar_view(spec);
  check_powers(powers, s.horizon);
  return gradient(powers, s);
}

double informativeness_threshold(const GameSpec& spec) { return threshold(scalar_view(spec)); }

std::optional<double> discounted_threshold(const GameSpec& spec) {
  if (!spec.discount) throw ArgumentError("discounted threshold requires a discount factor");
  const ScalarGame s = scalar_view(spec);
  const double beta = *spec.discount;
  const double g2 = s.g * s.g;
  if (beta * g2 >= 1.0) return std::nullopt;
  const double var0 = s.var_m[0];
  const double var_v = s.var_v[0];
  double sup;
  if (g2 < 1.0)
    sup = std::max(var0, var_v / (1.0 - g2));
  else if (var_v > 0.0 || (g2 > 1.0 && var0 > 0.0))
    sup = std::numeric_limits<double>::infinity();
  else
    sup = var0;
  return sup / s.var_w[0] / (1.0 - beta * g2);
}

LinearInnovationCode synthesize_policies(const std::vector<double>& powers,
                                         const GameSpec& spec) {
  const ScalarGame s = scalar_view(spec);
  check_powers(powers, s.horizon);
  const DistortionTrace t = recursion(powers, s);
  std::vector<Matrix> gains;
  for (std::size_t k = 0; k < s.horizon; ++k) {
    const double a = t.innovation[k] > 0.0 ? std::sqrt(powers[k] / t.innovation[k]) : 0.0;
    gains.push_back(Matrix::Constant(1, 1, a));
  }
  return LinearInnovationCode(spec, std::move(gains));
}

PowerSolution optimize_power(const GameSpec& spec, const PowerOptions& options) {
  const ScalarGame s = scalar_view(spec);
  if (!(options.power_cap > 0.0)) throw ArgumentError("power cap must be positive");
  if (s.lambda < 0.0) throw ArgumentError("power price must be nonnegative");

  PowerSolution sol;
  sol.threshold = threshold(s);
  if (s.lambda >= sol.threshold) {
    sol.powers.assign(s.horizon, 0.0);
  } else {
    StartResult best;
    bool have = false;
    for (const std::vector<double>& start : {std::vector<double>(s.horizon, 0.0), s.var_m}) {
      StartResult r = projected_bfgs(start, s, options);
      if (!have || (r.pg <= options.gradient_tol && best.pg > options.gradient_tol) ||
          ((r.pg <= options.gradient_tol) == (best.pg <= options.gradient_tol) &&
           r.value < best.value)) {
        best = std::move(r);
        have = true;
      }
    }
    if (best.pg > options.gradient_tol)
      throw ConvergenceError(
          fmt::format("power optimization stalled: projected gradient {:.3g} after {} iterations",
                      best.pg, best.iters),
          std::move(best.trace));
    sol.powers = best.p;
    sol.iterations = best.iters;
    sol.projected_gradient = best.pg;
  }

  sol.trace = recursion(sol.powers, s);
  sol.lower_bound = cost(sol.powers, s);
  sol.informative = std::any_of(sol.powers.begin(), sol.powers.end(), [](double v) { return v > 0.0; });
  sol.power_capped = std::any_of(sol.powers.begin(), sol.powers.end(),
                                 [&](double v) { return v >= options.power_cap; });
  const LinearInnovationCode code = synthesize_policies(sol.powers, spec);
  for (std::size_t k = 0; k < s.horizon; ++k) {
    sol.encoder_gains.push_back(code.gains()[k](0, 0));
    sol.decoder_gains.push_back(code.decoder_gains()[k](0, 0));
  }
  return sol;
}

}  // namespace dynsig::stackelberg

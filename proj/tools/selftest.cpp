#include <cmath>
#include <random>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include "cli.hpp"
#include "csv.hpp"
#include "dynsig/cheaptalk.hpp"
#include "dynsig/montecarlo.hpp"
#include "dynsig/nash.hpp"
#include "dynsig/stackelberg_scalar.hpp"
#include "dynsig/stackelberg_vector.hpp"

namespace dynsig::cli {

namespace {

GameSpec scalar_game(std::size_t horizon, double g, double var_m0, double var_v, double var_w,
                     double bias, double lambda) {
  GameSpec spec;
  spec.horizon = horizon;
  spec.bias = Vector::Constant(1, bias);
  spec.lambda = lambda;
  spec.source = GaussMarkovSource::scalar(g, var_m0, std::vector<double>(horizon, var_v));
  spec.channel = ChannelModel::scalar(std::vector<double>(horizon, var_w));
  return spec;
}

Matrix diag(std::initializer_list<double> d) {
  Vector v(static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

}  // namespace

std::vector<SelftestRow> selftest(std::ostream& out) {
  std::vector<SelftestRow> rows;
  auto record = [&](const std::string& name, bool passed, double value) {
    rows.push_back({name, passed, value});
    fmt::print(out, "{} {} ({})\n", passed ? "PASS" : "FAIL", name, format_number(value));
  };

  {
    const auto src = ScalarSource::uniform(0.0, 1.0);
    const auto r = cheaptalk::solve_quantized(src, 0.1, 2);
    const double err = r ? std::abs(r.policy->boundaries[0] - 0.7) : INFINITY;
    record("cheaptalk_two_bins", err < 1e-9, err);
    record("cheaptalk_three_bins_absent", !cheaptalk::solve_quantized(src, 0.1, 3), 3);
    record("cheaptalk_max_bins", cheaptalk::max_bins(src, 0.1) == 2,
           static_cast<double>(cheaptalk::max_bins(src, 0.1)));
  }
  {
    const double t = stackelberg::informativeness_threshold(scalar_game(2, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0));
    record("threshold_unit", std::abs(t - 2.0) < 1e-12, t);
    GameSpec disc = scalar_game(2, 0.5, 1.0, 0.75, 1.0, 0.0, 1.0);
    disc.discount = 0.5;
    const double s = stackelberg::discounted_threshold(disc).value_or(NAN);
    record("threshold_discounted", std::abs(s - 8.0 / 7.0) < 1e-12, s);
  }
  {
    const GameSpec spec = scalar_game(1, 1.0, 1.0, 1.0, 1.0, 0.3, 0.25);
    const auto sol = stackelberg::optimize_power(spec);
    record("power_stationary", std::abs(sol.powers[0] - 1.0) < 1e-6, sol.powers[0]);
    const auto code = stackelberg::synthesize_policies(sol.powers, spec);
    const double gap = std::abs(code.encoder_cost() - sol.lower_bound);
    record("power_code_cost", gap < 1e-10, gap);
  }
  {
    const GameSpec spec = scalar_game(1, 1.0, 1.0, 1.0, 1.0, 0.0, 0.25);
    const auto r = nash::best_response_iteration(spec, [&] {
      auto p = nash::AffineProfile::babbling(spec);
      p.encoder[0].source_gains[0] = Matrix::Identity(1, 1);
      return p;
    }());
    record("nash_scalar_cost", std::abs(r.encoder_cost - 0.75) < 1e-8, r.encoder_cost);
  }
  {
    std::mt19937_64 gen(7);
    std::normal_distribution<double> z;
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Matrix u = Matrix::NullaryExpr(4, 4, [&] { return z(gen); });
      const Matrix a = Matrix::NullaryExpr(4, 4, [&] { return z(gen); });
      const Matrix w = a * a.transpose() + Matrix::Identity(4, 4);
      worst = std::max(worst, matrix_inversion_lemma_check(u, w, u.transpose()));
    }
    record("inversion_lemma", worst < 1e-10, worst);
  }
  {
    GameSpec spec;
    spec.horizon = 3;
    spec.bias = Vector(Eigen::Vector3d(0.2, -0.1, 0.3));
    spec.lambda = 1.0;
    spec.source = GaussMarkovSource(diag({0.9, 0.8, 0.7}), diag({4.0, 1.0, 0.5}),
                                    std::vector<Matrix>(3, diag({1.0, 0.2, 0.1})));
    spec.channel = ChannelModel::scalar({1.0, 2.0, 0.5});
    stackelberg::DPOptions unit;
    unit.rule = stackelberg::ZetaRule::unit_budget;
    const auto dp = stackelberg::solve_dp(spec, unit);
    const auto [k_closed, l_closed] = stackelberg::scalar_channel_closed_form(spec);
    double gap = 0.0, off = 0.0;
    for (std::size_t k = 0; k <= spec.horizon; ++k) {
      gap = std::max(gap, (dp.K[k] - k_closed[k]).cwiseAbs().maxCoeff());
      off = std::max(off, off_diagonal_mass(dp.K[k]));
    }
    record("dp_closed_form", gap < 1e-10, gap);
    record("dp_diagonal_K", off < 1e-10 && dp.K.back().isZero(0.0) && dp.L.back().isZero(0.0), off);
  }
  {
    GameSpec spec = scalar_game(2, 0.8, 1.0, 0.5, 1.0, 0.2, 0.5);
    const auto est = montecarlo::estimate(spec, zero_encoder(1), constant_decoder(prior_means(spec)),
                                          20000, 11);
    const double theory_d = 1.0 + (0.64 + 0.5);
    const double theory_e = theory_d + 2 * 0.04;
    const auto cmp = montecarlo::compare_to_theory(est, theory_e, theory_d);
    record("montecarlo_babbling", cmp.passes(), cmp.z_encoder);
  }
  return rows;
}

}  // namespace dynsig::cli

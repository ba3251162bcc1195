#include <cmath>
#include <random>

#include "doctest.h"
#include "dynsig/cheaptalk.hpp"
#include "dynsig/errors.hpp"
#include "oracles.hpp"

using namespace dynsig;
using namespace dynsig::cheaptalk;

TEST_CASE("grid oracle locates the two-bin uniform equilibrium") {
  // Frozen below: boundary 0.7, actions 0.35 / 0.85.
  auto centroid = [](double a, double b) { return 0.5 * (a + b); };
  const oracle::GridBest best = oracle::grid_search(centroid, 0.0, 1.0, 0.1, 2, 1e-3);
  CHECK(best.boundaries[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(best.actions[0] == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(best.actions[1] == doctest::Approx(0.85).epsilon(1e-12));
  CHECK(best.residual < 1e-12);
  // No three-bin candidate comes near indifference.
  const oracle::GridBest three = oracle::grid_search(centroid, 0.0, 1.0, 0.1, 3, 1e-3);
  CHECK(three.residual > 0.015);
}

TEST_CASE("solve_quantized examples on uniform[0,1], b = 0.1") {
  const ScalarSource src = ScalarSource::uniform(0.0, 1.0);
  SUBCASE("two bins") {
    SolveResult r = solve_quantized(src, 0.1, 2);
    REQUIRE(r);
    CHECK(r.policy->boundaries[0] == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(r.policy->actions[0] == doctest::Approx(0.35).epsilon(1e-9));
    CHECK(r.policy->actions[1] == doctest::Approx(0.85).epsilon(1e-9));
    CHECK(r.certificate->passes());
  }
  SUBCASE("babbling always exists") {
    SolveResult r = solve_quantized(src, 0.1, 1);
    REQUIRE(r);
    CHECK(r.policy->boundaries.empty());
    CHECK(r.policy->actions[0] == doctest::Approx(0.5));
  }
  SUBCASE("three bins have no solution") {
    SolveResult r = solve_quantized(src, 0.1, 3);
    CHECK_FALSE(r);
    CHECK_FALSE(r.diagnostic.reason.empty());
  }
  SUBCASE("bin count zero") { CHECK_THROWS_AS(solve_quantized(src, 0.1, 0), ArgumentError); }
}

TEST_CASE("babbling action equals the source mean") {
  const ScalarSource sources[] = {
      ScalarSource::uniform(-2.0, 3.0), ScalarSource::gaussian(0.7, 2.0),
      ScalarSource::gridded_normalized({0.0, 0.2, 0.5, 1.0}, {1.0, 3.0, 0.5, 2.0})};
  for (const ScalarSource& s : sources) {
    SolveResult r = solve_quantized(s, 0.37, 1);
    REQUIRE(r);
    CHECK(std::abs(r.policy->actions[0] - s.mean()) < 1e-10);
  }
}

TEST_CASE("verify_equilibrium examples") {
  const ScalarSource src = ScalarSource::uniform(0.0, 1.0);
  SUBCASE("solved two-bin policy passes with separation 0.5 > 0.2") {
    QuantizerPolicy q{{0.7}, {0.35, 0.85}};
    EquilibriumCertificate c = verify_equilibrium(q, src, 0.1);
    CHECK(c.passes());
    CHECK(c.min_action_gap == doctest::Approx(0.5));
    // E[(m - u - b)^2] over both bins: variance terms plus b^2.
    CHECK(c.decoder_cost == doctest::Approx((0.7 * 0.7 * 0.7 + 0.3 * 0.3 * 0.3) / 12.0));
    CHECK(c.encoder_cost == doctest::Approx(c.decoder_cost + 0.01));
  }
  SUBCASE("babbling passes trivially") {
    EquilibriumCertificate c = verify_equilibrium(QuantizerPolicy{{}, {0.5}}, src, 0.1);
    CHECK(c.passes());
    CHECK(c.indifference_residual == 0.0);
  }
  SUBCASE("actions too close") {
    EquilibriumCertificate c = verify_equilibrium(QuantizerPolicy{{0.55}, {0.4, 0.5}}, src, 0.1);
    CHECK_FALSE(c.separation_ok);
    CHECK_FALSE(c.passes());
  }
  SUBCASE("coverage errors") {
    CHECK_THROWS_AS(verify_equilibrium(QuantizerPolicy{{0.5}, {0.2}}, src, 0.1), CoverageError);
    CHECK_THROWS_AS(verify_equilibrium(QuantizerPolicy{{1.2}, {0.2, 0.9}}, src, 0.1),
                    CoverageError);
    CHECK_THROWS_AS(verify_equilibrium(QuantizerPolicy{{0.6, 0.4}, {0.2, 0.5, 0.9}}, src, 0.1),
                    CoverageError);
  }
}

TEST_CASE("max_bins examples") {
  const ScalarSource src = ScalarSource::uniform(0.0, 1.0);
  CHECK(max_bins(src, 0.1) == 2);
  CHECK(max_bins(src, 0.3) == 1);
  // 2 b K (K - 1) < 1 for uniform sources allows K = 7 at b = 0.01.
  CHECK(max_bins(src, 0.01) == 7);
  CHECK(max_bins(src, -0.1) == 2);
  CHECK_THROWS_AS(max_bins(src, 0.0), UnboundedError);
  CHECK_THROWS_AS(max_bins(ScalarSource::gaussian(0, 1), 0.1), ArgumentError);
}

TEST_CASE("solver matches the grid oracle on gridded densities") {
  // Triangular and tilted densities; both log-concave, so the fixed point
  // for each K is unique and the oracle's best candidate must be it.
  struct Case {
    std::vector<double> grid, dens;
    double bias;
  };
  const Case cases[] = {{{0.0, 0.5, 1.0}, {0.0, 2.0, 0.0}, 0.05},
                        {{0.0, 1.0}, {0.5, 1.5}, -0.08},
                        {{0.0, 0.3, 1.0}, {1.0, 1.6, 0.4}, 0.12}};
  for (const Case& c : cases) {
    const ScalarSource src = ScalarSource::gridded_normalized(c.grid, c.dens);
    auto interp = [&](double m) {
      for (std::size_t i = 0; i + 1 < c.grid.size(); ++i)
        if (m >= c.grid[i] && m <= c.grid[i + 1]) {
          const double t = (m - c.grid[i]) / (c.grid[i + 1] - c.grid[i]);
          return (1 - t) * c.dens[i] + t * c.dens[i + 1];
        }
      return 0.0;
    };
    oracle::MeshMoments mesh(interp, 0.0, 1.0, 200000);
    auto centroid = [&](double a, double b) { return mesh.centroid(a, b); };
    for (int k = 2; k <= 3; ++k) {
      const oracle::GridBest best = oracle::grid_search(centroid, 0.0, 1.0, c.bias, k, 1e-3);
      SolveResult r = solve_quantized(src, c.bias, static_cast<std::size_t>(k));
      if (!r) {
        // A missing fixed point must show up as a poor best grid candidate.
        CHECK(best.residual > 5e-3);
        continue;
      }
      CHECK(best.residual < 2e-3);
      for (std::size_t i = 0; i < best.boundaries.size(); ++i)
        CHECK(std::abs(best.boundaries[i] - r.policy->boundaries[i]) <= 2e-3);
    }
  }
}

TEST_CASE("every solved policy verifies and keeps actions 2|b| apart") {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> unit(0.05, 1.0), bias(0.01, 0.3);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<double> grid, dens;
    for (int i = 0; i <= 20; ++i) {
      grid.push_back(i / 20.0);
      dens.push_back(unit(gen));
    }
    const ScalarSource src = ScalarSource::gridded_normalized(grid, dens);
    const double b = bias(gen) * (trial % 2 ? 1.0 : -1.0);
    for (std::size_t k = 1; k <= 6; ++k) {
      SolveResult r = solve_quantized(src, b, k);
      if (!r) break;
      const EquilibriumCertificate c = verify_equilibrium(*r.policy, src, b, 1e-8);
      CHECK(c.passes());
      if (k >= 2) CHECK(c.min_action_gap > 2.0 * std::abs(b));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("enumerate_quantized returns distinct verified fixed points") {
  const ScalarSource src = ScalarSource::uniform(0.0, 1.0);
  const auto found = enumerate_quantized(src, 0.02, 3, 8, 5);
  REQUIRE(found.size() == 1);  // uniform: unique fixed point per K
  CHECK(verify_equilibrium(found[0], src, 0.02).passes());
  CHECK(enumerate_quantized(src, 0.1, 3, 4, 5).empty());
}

TEST_CASE("repeated i.i.d. game") {
  const ScalarSource src = ScalarSource::uniform(0.0, 1.0);
  SUBCASE("two stages, two bins") {
    RepeatedEquilibrium eq = solve_repeated_iid(src, 0.1, 2, 2);
    REQUIRE(eq.stages.size() == 2);
    CHECK(eq.certificates[0].passes());
    CHECK(eq.certificates[1].passes());
    CHECK(eq.classes.count() == 1);
    CHECK(eq.within_class_separation);
    CHECK(eq.encoder_cost == doctest::Approx(2.0 * eq.certificates[0].encoder_cost));
  }
  SUBCASE("horizon one reduces to the single-stage solver") {
    RepeatedEquilibrium eq = solve_repeated_iid(src, 0.1, 1);
    SolveResult r = solve_quantized(src, 0.1, 2);
    CHECK(eq.stages[0].boundaries == r.policy->boundaries);
    CHECK(eq.stages[0].actions == r.policy->actions);
  }
  SUBCASE("babbling at both stages") {
    RepeatedEquilibrium eq = solve_repeated_iid(src, 0.1, 2, 1);
    CHECK(eq.decoder_cost == doctest::Approx(2.0 / 12.0));
  }
  SUBCASE("too many bins") { CHECK_THROWS_AS(solve_repeated_iid(src, 0.1, 2, 3), ArgumentError); }
  SUBCASE("unbounded source needs an explicit bin count") {
    CHECK_THROWS_AS(solve_repeated_iid(ScalarSource::gaussian(0, 1), 0.1, 2), ArgumentError);
    RepeatedEquilibrium eq = solve_repeated_iid(ScalarSource::gaussian(0, 1), 0.1, 2, 2);
    CHECK(eq.certificates[0].passes());
  }
}

TEST_CASE("cost classes group symbols by continuation cost") {
  const std::vector<double> symbols{0, 1, 2, 3, 4};
  const std::vector<double> g{1.0, 2.0, 1.0 + 5e-10, 3.0, 2.0};
  StageCostClasses c = group_cost_classes(symbols, g);
  CHECK(c.count() == 3);
  CHECK(c.class_of == std::vector<std::size_t>{0, 1, 0, 2, 1});
  CHECK(c.representatives == std::vector<double>{0, 1, 3});
}

TEST_CASE("multi-dimensional pair condition") {
  auto vec = [](double a, double b) { return Vector(Eigen::Vector2d(a, b)); };
  CHECK(verify_multidim_pair(vec(0, 0), vec(3, 0), vec(1, 0)));
  CHECK_FALSE(verify_multidim_pair(vec(0, 0), vec(1, 0), vec(1, 0)));
  CHECK(verify_multidim_pair(vec(0.2, -1), vec(0.21, -1), vec(0, 0)));
  CHECK_THROWS_AS(verify_multidim_pair(vec(1, 1), vec(1, 1), vec(0, 0)), ArgumentError);

  // Invariance under a common rotation.
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    Vector ua(3), ub(3), b(3);
    for (int i = 0; i < 3; ++i) {
      ua(i) = nd(gen);
      ub(i) = nd(gen);
      b(i) = 0.5 * nd(gen);
    }
    Matrix raw(3, 3);
    for (int i = 0; i < 9; ++i) raw.data()[i] = nd(gen);
    const Matrix q = Eigen::HouseholderQR<Matrix>(raw).householderQ();
    CHECK(verify_multidim_pair(ua, ub, b) == verify_multidim_pair(q * ua, q * ub, q * b));
  }
}

TEST_CASE("Stackelberg cheap talk is fully revealing") {
  GameSpec spec;
  spec.horizon = 3;
  spec.bias = Vector::Constant(1, 0.5);
  spec.source = ScalarSource::uniform(0.0, 1.0);
  RevealingSolution s = stackelberg_cheaptalk(spec);
  CHECK(s.encoder_cost == doctest::Approx(0.75));
  CHECK(s.decoder_cost == 0.0);

  spec.horizon = 1;
  spec.bias = Vector::Zero(1);
  CHECK(stackelberg_cheaptalk(spec).encoder_cost == 0.0);

  GameSpec vec;
  vec.horizon = 2;
  vec.bias = Vector::Ones(2);
  vec.source = GaussMarkovSource(Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                 {Matrix::Identity(2, 2)});
  CHECK(stackelberg_cheaptalk(vec).encoder_cost == doctest::Approx(4.0));

  vec.channel = ChannelModel({Matrix::Identity(2, 2), Matrix::Identity(2, 2)});
  CHECK_THROWS_AS(stackelberg_cheaptalk(vec), WrongGameError);
}

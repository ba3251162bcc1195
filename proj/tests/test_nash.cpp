#include <cmath>
#include <random>

#include "doctest.h"
#include "dynsig/errors.hpp"
#include "dynsig/nash.hpp"

using namespace dynsig;
using namespace dynsig::nash;

namespace {

Matrix s(double a) { return Matrix::Constant(1, 1, a); }
Vector v(double a) { return Vector::Constant(1, a); }

GameSpec scalar_game(std::size_t horizon, double g, double var_m0, double var_v,
                     std::vector<double> var_w, double bias, double lambda) {
  GameSpec spec;
  spec.horizon = horizon;
  spec.bias = v(bias);
  spec.lambda = lambda;
  spec.source = GaussMarkovSource::scalar(g, var_m0, std::vector<double>(horizon, var_v));
  spec.channel = ChannelModel::scalar(std::move(var_w));
  return spec;
}

AffineDecoder scalar_decoder(double d, double e) {
  return {DecoderStage{{s(d)}, v(e)}};
}

// Visits every encoder coefficient as a mutable reference.
template <class F>
void for_each_coefficient(AffineEncoder& enc, F&& f) {
  for (EncoderStage& st : enc) {
    for (Matrix& a : st.source_gains)
      for (Eigen::Index i = 0; i < a.size(); ++i) f(a.data()[i]);
    for (Matrix& b : st.feedback_gains)
      for (Eigen::Index i = 0; i < b.size(); ++i) f(b.data()[i]);
    for (Eigen::Index i = 0; i < st.offset.size(); ++i) f(st.offset(i));
  }
}

template <class F>
void for_each_coefficient(AffineDecoder& dec, F&& f) {
  for (DecoderStage& st : dec) {
    for (Matrix& d : st.gains)
      for (Eigen::Index i = 0; i < d.size(); ++i) f(d.data()[i]);
    for (Eigen::Index i = 0; i < st.offset.size(); ++i) f(st.offset(i));
  }
}

double max_encoder_gradient(const AffineProfile& profile, const GameSpec& spec) {
  AffineProfile probe = profile;
  double worst = 0.0;
  const double h = 1e-5;
  for_each_coefficient(probe.encoder, [&](double& c) {
    const double keep = c;
    c = keep + h;
    const double up = expected_costs(probe, spec).encoder;
    c = keep - h;
    const double down = expected_costs(probe, spec).encoder;
    c = keep;
    worst = std::max(worst, std::abs(up - down) / (2 * h));
  });
  return worst;
}

double max_decoder_gradient(const AffineProfile& profile, const GameSpec& spec) {
  AffineProfile probe = profile;
  double worst = 0.0;
  const double h = 1e-5;
  for_each_coefficient(probe.decoder, [&](double& c) {
    const double keep = c;
    c = keep + h;
    const double up = expected_costs(probe, spec).decoder;
    c = keep - h;
    const double down = expected_costs(probe, spec).decoder;
    c = keep;
    worst = std::max(worst, std::abs(up - down) / (2 * h));
  });
  return worst;
}

AffineProfile random_profile(const GameSpec& spec, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  AffineProfile p = AffineProfile::babbling(spec);
  for_each_coefficient(p.encoder, [&](double& c) { c = nd(gen); });
  for_each_coefficient(p.decoder, [&](double& c) { c = 0.5 * nd(gen); });
  return p;
}

}  // namespace

TEST_CASE("decoder best response examples") {
  SUBCASE("scalar MMSE gain") {
    GameSpec spec = scalar_game(1, 1.0, 1.0, 1.0, {1.0}, 0.7, 1.0);
    AffineEncoder enc = zero_affine_encoder(spec);
    enc[0].source_gains[0] = s(1.0);
    AffineDecoder dec = decoder_best_response(enc, spec);
    CHECK(dec[0].gains[0](0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(dec[0].offset(0) == doctest::Approx(0.0));
  }
  SUBCASE("zero encoder gives the babbling decoder") {
    GameSpec spec = scalar_game(2, 0.8, 1.0, 1.0, {1.0, 1.0}, 0.2, 1.0);
    AffineEncoder enc = zero_affine_encoder(spec);
    enc[0].offset = v(3.0);
    AffineDecoder dec = decoder_best_response(enc, spec);
    for (const DecoderStage& st : dec) {
      for (const Matrix& d : st.gains) CHECK(d.norm() == 0.0);
      CHECK(st.offset.norm() == 0.0);
    }
  }
  SUBCASE("nearly noiseless channel") {
    GameSpec spec = scalar_game(1, 1.0, 1.0, 1.0, {1e-8}, 0.0, 1.0);
    AffineEncoder enc = zero_affine_encoder(spec);
    enc[0].source_gains[0] = s(1.0);
    CHECK(std::abs(decoder_best_response(enc, spec)[0].gains[0](0, 0) - 1.0) < 1e-6);
  }
  SUBCASE("encoder offset is removed") {
    GameSpec spec = scalar_game(1, 1.0, 2.0, 1.0, {1.0}, 0.0, 1.0);
    AffineEncoder enc = zero_affine_encoder(spec);
    enc[0].source_gains[0] = s(1.0);
    enc[0].offset = v(0.3);
    AffineDecoder dec = decoder_best_response(enc, spec);
    CHECK(dec[0].gains[0](0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(dec[0].offset(0) == doctest::Approx(-0.2));
  }
}

TEST_CASE("decoder best response is stationary for the decoder cost") {
  std::mt19937_64 gen(12);
  Matrix g(2, 2);
  g << 0.9, 0.1, 0.0, 1.1;
  GameSpec spec;
  spec.horizon = 3;
  spec.bias = Vector(Eigen::Vector2d(0.3, -0.2));
  spec.lambda = 0.5;
  spec.source = GaussMarkovSource(g, Matrix::Identity(2, 2),
                                  std::vector<Matrix>(3, 0.5 * Matrix::Identity(2, 2)));
  spec.channel = ChannelModel(std::vector<Matrix>(3, 0.7 * Matrix::Identity(2, 2)));
  for (int trial = 0; trial < 5; ++trial) {
    AffineProfile p = random_profile(spec, gen);
    p.decoder = decoder_best_response(p.encoder, spec);
    CHECK(max_decoder_gradient(p, spec) < 1e-6);
  }
}

TEST_CASE("encoder best response examples") {
  SUBCASE("single-stage closed form") {
    const double d = 0.8, e = 0.1, lambda = 0.3, b = 0.25;
    GameSpec spec = scalar_game(1, 1.0, 1.0, 1.0, {1.0}, b, lambda);
    AffineEncoder enc = encoder_best_response(scalar_decoder(d, e), spec);
    CHECK(enc[0].source_gains[0](0, 0) == doctest::Approx(d / (d * d + lambda)));
    CHECK(enc[0].offset(0) == doctest::Approx(-d * (b + e) / (d * d + lambda)));
  }
  SUBCASE("silent decoder, no bias") {
    GameSpec spec = scalar_game(2, 1.0, 1.0, 1.0, {1.0, 1.0}, 0.0, 0.4);
    AffineProfile p = AffineProfile::babbling(spec);
    AffineEncoder enc = encoder_best_response(p.decoder, spec);
    CHECK(max_difference(enc, zero_affine_encoder(spec)) == 0.0);
  }
  SUBCASE("prohibitive power price") {
    GameSpec spec = scalar_game(2, 1.0, 1.0, 1.0, {1.0, 1.0}, 0.5, 1e9);
    std::mt19937_64 gen(3);
    AffineProfile p = random_profile(spec, gen);
    AffineEncoder enc = encoder_best_response(p.decoder, spec);
    CHECK(max_difference(enc, zero_affine_encoder(spec)) < 1e-6);
  }
  SUBCASE("zero price with a silent decoder") {
    GameSpec spec = scalar_game(1, 1.0, 1.0, 1.0, {1.0}, 0.0, 0.0);
    CHECK_THROWS_AS(encoder_best_response(scalar_decoder(0.0, 0.0), spec), UnboundedError);
  }
  SUBCASE("horizon three is out of scope") {
    GameSpec spec = scalar_game(3, 1.0, 1.0, 1.0, {1.0, 1.0, 1.0}, 0.0, 1.0);
    CHECK_THROWS_AS(encoder_best_response(AffineProfile::babbling(spec).decoder, spec),
                    ArgumentError);
  }
}

TEST_CASE("encoder best response has zero finite-difference gradient") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> unit(0.3, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t horizon = 1 + trial % 2;
    GameSpec spec = scalar_game(horizon, unit(gen) - 1.0, unit(gen), unit(gen),
                                std::vector<double>(horizon, unit(gen)), unit(gen) - 1.0,
                                unit(gen));
    if (trial % 3 == 0) spec.discount = 0.7;
    AffineProfile p = random_profile(spec, gen);
    p.encoder = encoder_best_response(p.decoder, spec);
    CHECK(max_encoder_gradient(p, spec) < 1e-6);
  }
  // A vector game with a rectangular channel.
  Matrix g(2, 2);
  g << 1.0, 0.2, -0.3, 0.5;
  GameSpec spec;
  spec.horizon = 2;
  spec.bias = Vector(Eigen::Vector2d(0.4, 0.1));
  spec.lambda = 0.2;
  spec.discount = 0.9;
  spec.source = GaussMarkovSource(g, Matrix::Identity(2, 2), {0.5 * Matrix::Identity(2, 2)});
  spec.channel = ChannelModel({s(0.5), s(1.5)});
  AffineProfile p = random_profile(spec, gen);
  p.encoder = encoder_best_response(p.decoder, spec);
  CHECK(max_encoder_gradient(p, spec) < 1e-6);
}

TEST_CASE("best-response iteration") {
  SUBCASE("babbling is a fixed point") {
    GameSpec spec = scalar_game(2, 1.0, 1.0, 1.0, {1.0, 1.0}, 0.3, 0.5);
    IterationResult r = best_response_iteration(spec, AffineProfile::babbling(spec));
    CHECK(r.iterations == 1);
    CHECK_FALSE(r.informative);
    CHECK(r.decoder_cost == doctest::Approx(1.0 + 2.0));
  }
  SUBCASE("single-stage informative fixed point") {
    // a = d / (d^2 + lambda), d = a / (a^2 + 1)  =>  a^2 = 1/sqrt(lambda) - 1.
    GameSpec spec = scalar_game(1, 1.0, 1.0, 1.0, {1.0}, 0.0, 0.25);
    AffineProfile init = AffineProfile::babbling(spec);
    init.encoder[0].source_gains[0] = s(0.3);
    IterationResult r = best_response_iteration(spec, init);
    CHECK(r.informative);
    CHECK(r.profile.encoder[0].source_gains[0](0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.profile.decoder[0].gains[0](0, 0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(r.decoder_residual < 1e-8);
    CHECK(r.encoder_residual < 1e-8);
    CHECK(r.encoder_cost == doctest::Approx(0.75));
  }
  SUBCASE("price above the single-stage ratio leaves only babbling") {
    GameSpec spec = scalar_game(1, 1.0, 1.0, 1.0, {1.0}, 0.2, 2.0);
    std::mt19937_64 gen(8);
    for (int start = 0; start < 10; ++start) {
      IterationResult r = best_response_iteration(spec, random_profile(spec, gen));
      CHECK_FALSE(r.informative);
    }
  }
  SUBCASE("iteration budget exhausted") {
    GameSpec spec = scalar_game(1, 1.0, 1.0, 1.0, {1.0}, 0.0, 0.25);
    AffineProfile init = AffineProfile::babbling(spec);
    init.encoder[0].source_gains[0] = s(0.3);
    IterationOptions opts;
    opts.max_iters = 2;
    try {
      best_response_iteration(spec, init, opts);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.trace().size() == 2);
    }
  }
}

TEST_CASE("two-stage classifier examples") {
  SUBCASE("regime (i)") {
    GameSpec spec = scalar_game(2, 1.0, 1.0, 1.0, {1.0, 1.0}, 0.0, 3.0);
    TwoStageRegime r = classify_two_stage(spec);
    CHECK(r.regime == Regime::no_informative_affine);
    CHECK(r.first_ratio == 2.0);
    CHECK(r.second_ratio == 2.0);
    REQUIRE(r.informative);
    CHECK_FALSE(*r.informative);
  }
  SUBCASE("regime (iii) with large bias") {
    // g = 0, var_M1 = 1 < 4 b^2 = 1.44; var_W0 = 4 puts lambda = 0.5 in the guard.
    GameSpec spec = scalar_game(2, 0.0, 1.0, 1.0, {4.0, 1.0}, 0.6, 0.5);
    TwoStageRegime r = classify_two_stage(spec);
    CHECK(r.regime == Regime::conditionally_informative);
    REQUIRE(r.informative);
    CHECK_FALSE(*r.informative);
    CHECK_FALSE(r.window_low);
  }
  SUBCASE("regime (iii) without bias") {
    GameSpec spec = scalar_game(2, 0.0, 1.0, 3.0, {1.0, 1.0}, 0.0, 2.0);
    TwoStageRegime r = classify_two_stage(spec);
    CHECK(r.regime == Regime::conditionally_informative);
    REQUIRE(r.informative);
    CHECK(*r.informative);
    CHECK(*r.window_low == 1.0);
    CHECK(*r.window_high == 3.0);
  }
  SUBCASE("regime (ii)") {
    GameSpec spec = scalar_game(2, 1.0, 1.0, 1.0, {0.5, 4.0}, 0.0, 1.0);
    TwoStageRegime r = classify_two_stage(spec);
    CHECK(r.regime == Regime::second_stage_unused);
    CHECK_FALSE(r.informative);
  }
  SUBCASE("below both ratios") {
    GameSpec spec = scalar_game(2, 1.0, 1.0, 1.0, {1.0, 1.0}, 0.0, 0.5);
    TwoStageRegime r = classify_two_stage(spec);
    CHECK(r.regime == Regime::uncovered);
    CHECK_FALSE(r.at_boundary);
  }
  SUBCASE("equality is flagged") {
    GameSpec spec = scalar_game(2, 1.0, 1.0, 1.0, {1.0, 1.0}, 0.0, 2.0);
    TwoStageRegime r = classify_two_stage(spec);
    CHECK(r.regime == Regime::uncovered);
    CHECK(r.at_boundary);
  }
  SUBCASE("wrong shapes") {
    CHECK_THROWS_AS(classify_two_stage(scalar_game(1, 1.0, 1.0, 1.0, {1.0}, 0.0, 1.0)),
                    ArgumentError);
  }
}

TEST_CASE("classifier regimes are mutually exclusive") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> unit(0.1, 3.0);
  for (int trial = 0; trial < 2000; ++trial) {
    GameSpec spec = scalar_game(2, unit(gen) - 1.5, unit(gen), unit(gen), {unit(gen), unit(gen)},
                                0.5 * unit(gen) - 0.75, 2.0 * unit(gen));
    TwoStageRegime r = classify_two_stage(spec);
    const double lam = spec.lambda, q0 = r.first_ratio, q1 = r.second_ratio;
    const int hits = int(lam > std::max(q0, q1)) + int(q1 < lam && lam <= q0) +
                     int(q0 < lam && lam <= q1);
    CHECK(hits <= 1);
    CHECK((hits == 0) == (r.regime == Regime::uncovered));
  }
}

TEST_CASE("affine profile shape checks") {
  GameSpec spec = scalar_game(2, 1.0, 1.0, 1.0, {1.0, 1.0}, 0.0, 1.0);
  AffineProfile p = AffineProfile::babbling(spec);
  CHECK_NOTHROW(p.check(spec));
  p.encoder[1].feedback_gains.clear();
  CHECK_THROWS_AS(p.check(spec), ShapeError);
  AffineProfile q = AffineProfile::babbling(spec);
  q.decoder[0].gains[0] = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(expected_costs(q, spec), ShapeError);
}

TEST_CASE("bias moves only the offsets of affine equilibria") {
  // Zero-mean source: the bias shifts C_k and E_k but never the slopes, so
  // the dynamics settle on the same gains for every b.
  AffineProfile ref;
  for (double b : {0.0, 0.6, -1.3}) {
    GameSpec spec = scalar_game(2, 0.0, 1.0, 1.0, {4.0, 1.0}, b, 0.5);
    AffineProfile init = AffineProfile::babbling(spec);
    init.encoder[0].source_gains[0] = s(0.7);
    init.encoder[1].source_gains[1] = s(0.7);
    IterationResult r = best_response_iteration(spec, init);
    CHECK(r.informative);
    if (b == 0.0) {
      ref = r.profile;
      continue;
    }
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t i = 0; i <= k; ++i)
        CHECK(std::abs(r.profile.encoder[k].source_gains[i](0, 0) -
                       ref.encoder[k].source_gains[i](0, 0)) < 1e-8);
  }
}

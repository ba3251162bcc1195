#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "dynsig/linalg.hpp"
#include "dynsig/rng.hpp"

namespace dynsig {

// ---------------------------------------------------------------------------
// Sources
// ---------------------------------------------------------------------------

struct UniformDensity {
  double low = 0.0;
  double high = 1.0;
};

struct GaussianDensity {
  double mean = 0.0;
  double variance = 1.0;
};

// Piecewise-linear density on an ascending grid. The density is linearly
// interpolated between grid points and zero outside the grid, so the
// trapezoidal rule on the grid is exact for its total mass.
struct GriddedDensity {
  std::vector<double> grid;
  std::vector<double> density;
};

// Partial moments of a scalar density over an interval:
// mass = P(lo < m <= hi), first = E[m; lo < m <= hi], second = E[m^2; ...].
struct IntervalMoments {
  double mass = 0.0;
  double first = 0.0;
  double second = 0.0;
};

class ScalarSource {
 public:
  using Density = std::variant<UniformDensity, GaussianDensity, GriddedDensity>;

  static ScalarSource uniform(double low, double high);
  static ScalarSource gaussian(double mean, double variance);
  // Validates grid ordering, nonnegativity and unit trapezoidal mass (1e-9).
  static ScalarSource gridded(std::vector<double> grid,
                              std::vector<double> density);
  // Same, but rescales the density to unit mass first.
  static ScalarSource gridded_normalized(std::vector<double> grid,
                                         std::vector<double> density);

  const Density& density() const { return density_; }

  // Closed support [low, high]; infinite endpoints for the Gaussian.
  std::pair<double, double> support() const;
  bool bounded() const;

  IntervalMoments moments(double lo, double hi) const;
  double mean() const;
  double variance() const;

  double draw(StreamRng& rng) const;

 private:
  explicit ScalarSource(Density d) : density_(std::move(d)) {}
  Density density_;
};

// M_{k+1} = G M_k + V_k with M_0 ~ N(0, Sigma_M0), V_k ~ N(0, Sigma_V[k]).
class GaussMarkovSource {
 public:
  // Validates shapes, symmetry (1e-12) and PSD-ness (min eigenvalue >= -1e-10).
  GaussMarkovSource(Matrix transition, Matrix initial_covariance,
                    std::vector<Matrix> process_noise);

  static GaussMarkovSource scalar(double g, double initial_variance,
                                  std::vector<double> process_variances);

  std::size_t dim() const { return static_cast<std::size_t>(g_.rows()); }
  const Matrix& transition() const { return g_; }
  const Matrix& initial_covariance() const { return sigma_m0_; }
  const std::vector<Matrix>& process_noise() const { return sigma_v_; }

  // Sigma_V[k], or the zero matrix when k is past the stored list.
  Matrix process_noise_at(std::size_t k) const;

  // Sigma_M(0..count-1) via Sigma_M(k+1) = G Sigma_M(k) G^T + Sigma_V[k].
  std::vector<Matrix> stage_covariances(std::size_t count) const;

 private:
  Matrix g_;
  Matrix sigma_m0_;
  std::vector<Matrix> sigma_v_;
};

// Additive Gaussian channel y_k = x_k + w_k, w_k ~ N(0, Sigma_W[k]).
class ChannelModel {
 public:
  explicit ChannelModel(std::vector<Matrix> noise_covariances);
  static ChannelModel scalar(std::vector<double> noise_variances);

  std::size_t dim() const;
  std::size_t stages() const { return sigma_w_.size(); }
  const Matrix& noise(std::size_t k) const { return sigma_w_.at(k); }
  const std::vector<Matrix>& noises() const { return sigma_w_; }

 private:
  std::vector<Matrix> sigma_w_;
};

using Source = std::variant<ScalarSource, GaussMarkovSource>;

// Single configuration object shared by all solvers. A game without a
// channel is a cheap-talk game; with a channel it is a signaling game.
struct GameSpec {
  std::size_t horizon = 1;
  Vector bias = Vector::Zero(1);
  double lambda = 0.0;
  std::optional<double> discount;
  Source source = ScalarSource::uniform(0.0, 1.0);
  std::optional<ChannelModel> channel;

  // Throws ArgumentError / ShapeError on inconsistent fields.
  void validate() const;

  std::size_t source_dim() const;
  // Channel dimension, or the source dimension for cheap talk.
  std::size_t signal_dim() const;
  bool signaling() const { return channel.has_value(); }
  double stage_weight(std::size_t k) const;

  const GaussMarkovSource& gauss_markov() const;  // throws if scalar source
  const ScalarSource& scalar_source() const;      // throws if Gauss-Markov
};

// ---------------------------------------------------------------------------
// Trajectories and policies
// ---------------------------------------------------------------------------

struct Trajectory {
  std::vector<Vector> m;  // source realizations
  std::vector<Vector> x;  // encoder outputs
  std::vector<Vector> y;  // channel outputs (== x for cheap talk)
  std::vector<Vector> u;  // decoder actions

  std::size_t stages() const { return m.size(); }
};

// Encoder at stage k sees m_[0,k] and y_[0,k-1].
using EncoderPolicy = std::function<Vector(
    std::size_t k, std::span<const Vector> m, std::span<const Vector> y)>;
// Decoder at stage k sees y_[0,k].
using DecoderPolicy =
    std::function<Vector(std::size_t k, std::span<const Vector> y)>;

EncoderPolicy zero_encoder(std::size_t signal_dim);
EncoderPolicy identity_encoder();
DecoderPolicy constant_decoder(std::vector<Vector> actions);
DecoderPolicy identity_decoder();

// Prior means E[m_k] of the source (zero for Gauss-Markov sources).
std::vector<Vector> prior_means(const GameSpec& spec);

double eval_encoder_cost(const Trajectory& traj, const GameSpec& spec);
double eval_decoder_cost(const Trajectory& traj, const GameSpec& spec);

// Samples realizations of one game. Noise square roots are factored once at
// construction. Stage k draws the source innovation and then the channel
// noise from the stream (seed, sample, k), so every trajectory is
// reproducible on its own.
class TrajectorySampler {
 public:
  explicit TrajectorySampler(GameSpec spec);

  const GameSpec& spec() const { return spec_; }
  Trajectory sample(const EncoderPolicy& encoder, const DecoderPolicy& decoder,
                    std::uint64_t seed, std::uint64_t sample) const;

 private:
  GameSpec spec_;
  Matrix initial_factor_;
  std::vector<Matrix> process_factors_;
  std::vector<Matrix> channel_factors_;
};

Trajectory sample_trajectory(const GameSpec& spec, const EncoderPolicy& encoder,
                             const DecoderPolicy& decoder, std::uint64_t seed,
                             std::uint64_t sample = 0);

// ---------------------------------------------------------------------------
// Linear innovation coding
// ---------------------------------------------------------------------------

// Encoder x_k = A_k (m_k - E[m_k | y_[0,k-1]]) and MMSE decoder
// u_k = E[m_k | y_[0,k]] for a Gauss-Markov source over the game's channel.
// The filter recursion is the standard Kalman predictor/corrector.
class LinearInnovationCode {
 public:
  LinearInnovationCode(const GameSpec& spec, std::vector<Matrix> gains);

  const std::vector<Matrix>& gains() const { return gains_; }
  // Prior (pre-channel) innovation covariances Sigma_tilde_k.
  const std::vector<Matrix>& innovation_covariances() const { return prior_; }
  // Posterior error covariances Sigma_e_k.
  const std::vector<Matrix>& error_covariances() const { return posterior_; }
  // Decoder correction gains Sigma_tilde A^T (A Sigma_tilde A^T + Sigma_W)^-1.
  const std::vector<Matrix>& decoder_gains() const { return correction_; }

  // E||x_k||^2 per stage.
  std::vector<double> powers() const;
  // Analytic expected costs (discount-weighted).
  double encoder_cost() const;
  double decoder_cost() const;

  EncoderPolicy encoder() const;
  DecoderPolicy decoder() const;

 private:
  // Posterior mean after y_[0,last]; prior mean of stage last+1 is G times it.
  Vector filter(std::span<const Vector> y, std::size_t count) const;

  Matrix g_;
  Vector bias_;
  double lambda_;
  std::vector<double> weights_;
  std::vector<Matrix> gains_;
  std::vector<Matrix> prior_;
  std::vector<Matrix> posterior_;
  std::vector<Matrix> correction_;
};

}  // namespace dynsig

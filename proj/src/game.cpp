#include "dynsig/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include <fmt/core.h>

#include "dynsig/errors.hpp"

namespace dynsig {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double std_normal_pdf(double z) {
  if (!std::isfinite(z)) return 0.0;
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// z * phi(z), with the limit 0 at +-infinity.
double z_pdf(double z) { return std::isfinite(z) ? z * std_normal_pdf(z) : 0.0; }

double trapezoid_mass(const std::vector<double>& grid, const std::vector<double>& f) {
  double mass = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    mass += 0.5 * (f[i] + f[i + 1]) * (grid[i + 1] - grid[i]);
  return mass;
}

void check_gridded(const std::vector<double>& grid, const std::vector<double>& f) {
  if (grid.size() < 2 || grid.size() != f.size())
    throw ArgumentError("gridded density: grid and density must have equal length >= 2");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i] < grid[i + 1]))
      throw ArgumentError("gridded density: grid must be strictly ascending");
  for (double v : f)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ArgumentError("gridded density: values must be finite and nonnegative");
}

// Exact integral of (alpha + slope t) t^j over [l, h] for j = 0, 1, 2.
IntervalMoments linear_piece_moments(double alpha, double slope, double l, double h) {
  auto power_diff = [&](int e) { return (std::pow(h, e) - std::pow(l, e)) / e; };
  IntervalMoments out;
  out.mass = alpha * power_diff(1) + slope * power_diff(2);
  out.first = alpha * power_diff(2) + slope * power_diff(3);
  out.second = alpha * power_diff(3) + slope * power_diff(4);
  return out;
}

void check_covariance(const Matrix& s, const char* what) {
  if (!is_symmetric(s, 1e-12))
    throw ArgumentError(fmt::format("{}: covariance is not symmetric", what));
  if (s.size() && min_eigenvalue(s) < -1e-10)
    throw ArgumentError(fmt::format("{}: covariance is not PSD", what));
}

}  // namespace

// ---------------------------------------------------------------------------
// ScalarSource

ScalarSource ScalarSource::uniform(double low, double high) {
  if (!(low < high) || !std::isfinite(low) || !std::isfinite(high))
    throw ArgumentError("uniform source requires finite low < high");
  return ScalarSource(UniformDensity{low, high});
}

ScalarSource ScalarSource::gaussian(double mean, double variance) {
  if (!(variance > 0.0) || !std::isfinite(mean) || !std::isfinite(variance))
    throw ArgumentError("gaussian source requires variance > 0");
  return ScalarSource(GaussianDensity{mean, variance});
}

ScalarSource ScalarSource::gridded(std::vector<double> grid, std::vector<double> density) {
  check_gridded(grid, density);
  const double mass = trapezoid_mass(grid, density);
  if (std::abs(mass - 1.0) > 1e-9)
    throw ArgumentError(fmt::format("gridded density integrates to {} (expected 1)", mass));
  return ScalarSource(GriddedDensity{std::move(grid), std::move(density)});
}

ScalarSource ScalarSource::gridded_normalized(std::vector<double> grid,
                                              std::vector<double> density) {
  check_gridded(grid, density);
  const double mass = trapezoid_mass(grid, density);
  if (!(mass > 0.0)) throw ArgumentError("gridded density has zero mass");
  for (double& v : density) v /= mass;
  return gridded(std::move(grid), std::move(density));
}

std::pair<double, double> ScalarSource::support() const {
  return std::visit(
      [](const auto& d) -> std::pair<double, double> {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformDensity>) {
          return {d.low, d.high};
        } else if constexpr (std::is_same_v<T, GaussianDensity>) {
          return {-kInf, kInf};
        } else {
          return {d.grid.front(), d.grid.back()};
        }
      },
      density_);
}

bool ScalarSource::bounded() const {
  const auto [lo, hi] = support();
  return std::isfinite(lo) && std::isfinite(hi);
}

IntervalMoments ScalarSource::moments(double lo, double hi) const {
  return std::visit(
      [&](const auto& d) -> IntervalMoments {
        using T = std::decay_t<decltype(d)>;
        IntervalMoments out;
        if constexpr (std::is_same_v<T, UniformDensity>) {
          const double l = std::max(lo, d.low), h = std::min(hi, d.high);
          if (!(h > l)) return out;
          const double w = d.high - d.low;
          out.mass = (h - l) / w;
          out.first = (h * h - l * l) / (2.0 * w);
          out.second = (h * h * h - l * l * l) / (3.0 * w);
        } else if constexpr (std::is_same_v<T, GaussianDensity>) {
          if (!(hi > lo)) return out;
          const double sd = std::sqrt(d.variance);
          const double a = (lo - d.mean) / sd, b = (hi - d.mean) / sd;
          const double mass = std_normal_cdf(b) - std_normal_cdf(a);
          const double dphi = std_normal_pdf(a) - std_normal_pdf(b);
          out.mass = mass;
          out.first = d.mean * mass + sd * dphi;
          out.second = (d.mean * d.mean + d.variance) * mass + 2.0 * d.mean * sd * dphi +
                       d.variance * (z_pdf(a) - z_pdf(b));
        } else {
          const auto& x = d.grid;
          const auto& f = d.density;
          for (std::size_t i = 0; i + 1 < x.size(); ++i) {
            const double l = std::max(lo, x[i]), h = std::min(hi, x[i + 1]);
            if (!(h > l)) continue;
            const double slope = (f[i + 1] - f[i]) / (x[i + 1] - x[i]);
            const IntervalMoments piece =
                linear_piece_moments(f[i] - slope * x[i], slope, l, h);
            out.mass += piece.mass;
            out.first += piece.first;
            out.second += piece.second;
          }
        }
        return out;
      },
      density_);
}

double ScalarSource::mean() const {
  const auto [lo, hi] = support();
  const IntervalMoments all = moments(lo, hi);
  return all.first / all.mass;
}

double ScalarSource::variance() const {
  const auto [lo, hi] = support();
  const IntervalMoments all = moments(lo, hi);
  const double mu = all.first / all.mass;
  return all.second / all.mass - mu * mu;
}

double ScalarSource::draw(StreamRng& rng) const {
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformDensity>) {
          return d.low + (d.high - d.low) * rng.uniform();
        } else if constexpr (std::is_same_v<T, GaussianDensity>) {
          return d.mean + std::sqrt(d.variance) * rng.normal();
        } else {
          // Inverse CDF of the piecewise-linear density.
          double target = rng.uniform() * trapezoid_mass(d.grid, d.density);
          const auto& x = d.grid;
          const auto& f = d.density;
          for (std::size_t i = 0; i + 1 < x.size(); ++i) {
            const double h = x[i + 1] - x[i];
            const double cell = 0.5 * (f[i] + f[i + 1]) * h;
            if (target > cell && i + 2 < x.size()) {
              target -= cell;
              continue;
            }
            // Solve f_i t + (f_{i+1} - f_i) t^2 / (2h) = target for t in [0, h].
            const double a = (f[i + 1] - f[i]) / (2.0 * h);
            double t;
            if (std::abs(a) < 1e-14 * std::max(1.0, f[i])) {
              t = f[i] > 0.0 ? target / f[i] : 0.5 * h;
            } else {
              const double disc = std::max(0.0, f[i] * f[i] + 4.0 * a * target);
              t = 2.0 * target / (f[i] + std::sqrt(disc));
            }
            return x[i] + std::clamp(t, 0.0, h);
          }
          return x.back();
        }
      },
      density_);
}

// ---------------------------------------------------------------------------
// GaussMarkovSource / ChannelModel

GaussMarkovSource::GaussMarkovSource(Matrix transition, Matrix initial_covariance,
                                     std::vector<Matrix> process_noise)
    : g_(std::move(transition)),
      sigma_m0_(std::move(initial_covariance)),
      sigma_v_(std::move(process_noise)) {
  const Eigen::Index n = g_.rows();
  if (n < 1 || g_.cols() != n) throw ShapeError("Gauss-Markov: G must be n x n, n >= 1");
  if (sigma_m0_.rows() != n || sigma_m0_.cols() != n)
    throw ShapeError("Gauss-Markov: Sigma_M0 must be n x n");
  check_covariance(sigma_m0_, "Sigma_M0");
  for (const Matrix& v : sigma_v_) {
    if (v.rows() != n || v.cols() != n) throw ShapeError("Gauss-Markov: Sigma_V[k] must be n x n");
    check_covariance(v, "Sigma_V");
  }
}

GaussMarkovSource GaussMarkovSource::scalar(double g, double initial_variance,
                                            std::vector<double> process_variances) {
  std::vector<Matrix> v;
  for (double s : process_variances) v.push_back(Matrix::Constant(1, 1, s));
  return GaussMarkovSource(Matrix::Constant(1, 1, g), Matrix::Constant(1, 1, initial_variance),
                           std::move(v));
}

Matrix GaussMarkovSource::process_noise_at(std::size_t k) const {
  if (k < sigma_v_.size()) return sigma_v_[k];
  return Matrix::Zero(g_.rows(), g_.rows());
}

std::vector<Matrix> GaussMarkovSource::stage_covariances(std::size_t count) const {
  std::vector<Matrix> out;
  out.reserve(count);
  Matrix s = sigma_m0_;
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(s);
    s = g_ * s * g_.transpose() + process_noise_at(k);
    s = 0.5 * (s + s.transpose());
  }
  return out;
}

ChannelModel::ChannelModel(std::vector<Matrix> noise_covariances)
    : sigma_w_(std::move(noise_covariances)) {
  if (sigma_w_.empty()) throw ArgumentError("channel: at least one stage required");
  const Eigen::Index p = sigma_w_.front().rows();
  for (const Matrix& w : sigma_w_) {
    if (p < 1 || w.rows() != p || w.cols() != p)
      throw ShapeError("channel: Sigma_W[k] must all be p x p, p >= 1");
    if (!is_symmetric(w, 1e-12)) throw ArgumentError("channel: Sigma_W is not symmetric");
    if (!(min_eigenvalue(w) > 0.0)) throw ArgumentError("channel: Sigma_W is not PD");
  }
}

ChannelModel ChannelModel::scalar(std::vector<double> noise_variances) {
  std::vector<Matrix> w;
  for (double s : noise_variances) w.push_back(Matrix::Constant(1, 1, s));
  return ChannelModel(std::move(w));
}

std::size_t ChannelModel::dim() const {
  return static_cast<std::size_t>(sigma_w_.front().rows());
}

// ---------------------------------------------------------------------------
// GameSpec

std::size_t GameSpec::source_dim() const {
  if (const auto* gm = std::get_if<GaussMarkovSource>(&source)) return gm->dim();
  return 1;
}

std::size_t GameSpec::signal_dim() const {
  return channel ? channel->dim() : source_dim();
}

double GameSpec::stage_weight(std::size_t k) const {
  return discount ? std::pow(*discount, static_cast<double>(k)) : 1.0;
}

const GaussMarkovSource& GameSpec::gauss_markov() const {
  if (const auto* gm = std::get_if<GaussMarkovSource>(&source)) return *gm;
  throw ArgumentError("game requires a Gauss-Markov source");
}

const ScalarSource& GameSpec::scalar_source() const {
  if (const auto* s = std::get_if<ScalarSource>(&source)) return *s;
  throw ArgumentError("game requires a scalar source");
}

void GameSpec::validate() const {
  if (horizon < 1) throw ArgumentError("horizon must be >= 1");
  if (static_cast<std::size_t>(bias.size()) != source_dim())
    throw ShapeError(fmt::format("bias has length {}, source dimension is {}", bias.size(),
                                 source_dim()));
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("lambda must be >= 0");
  if (discount && !(*discount > 0.0 && *discount < 1.0))
    throw ArgumentError("discount must lie in (0, 1)");
  if (const auto* gm = std::get_if<GaussMarkovSource>(&source)) {
    if (gm->process_noise().size() + 1 < horizon)
      throw ShapeError(fmt::format("Gauss-Markov source needs {} process-noise covariances",
                                   horizon - 1));
  }
  if (channel && channel->stages() < horizon)
    throw ShapeError(fmt::format("channel needs {} noise covariances", horizon));
}

// ---------------------------------------------------------------------------
// Policies, costs, sampling

EncoderPolicy zero_encoder(std::size_t signal_dim) {
  return [signal_dim](std::size_t, std::span<const Vector>, std::span<const Vector>) {
    return Vector::Zero(static_cast<Eigen::Index>(signal_dim)).eval();
  };
}

EncoderPolicy identity_encoder() {
  return [](std::size_t k, std::span<const Vector> m, std::span<const Vector>) {
    return m[k];
  };
}

DecoderPolicy constant_decoder(std::vector<Vector> actions) {
  return [actions = std::move(actions)](std::size_t k, std::span<const Vector>) {
    return actions.at(k);
  };
}

DecoderPolicy identity_decoder() {
  return [](std::size_t k, std::span<const Vector> y) { return y[k]; };
}

std::vector<Vector> prior_means(const GameSpec& spec) {
  std::vector<Vector> out;
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    if (const auto* s = std::get_if<ScalarSource>(&spec.source))
      out.push_back(Vector::Constant(1, s->mean()));
    else
      out.push_back(Vector::Zero(static_cast<Eigen::Index>(spec.source_dim())));
  }
  return out;
}

namespace {

void check_trajectory(const Trajectory& traj, const GameSpec& spec) {
  const std::size_t n = spec.source_dim();
  if (traj.m.size() != spec.horizon || traj.u.size() != spec.horizon ||
      traj.x.size() != spec.horizon || traj.y.size() != spec.horizon)
    throw ShapeError(fmt::format("trajectory has {} stages, game horizon is {}", traj.m.size(),
                                 spec.horizon));
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    if (static_cast<std::size_t>(traj.m[k].size()) != n ||
        static_cast<std::size_t>(traj.u[k].size()) != n)
      throw ShapeError(fmt::format("stage {}: source/action dimension mismatch", k));
    if (spec.channel && static_cast<std::size_t>(traj.x[k].size()) != spec.signal_dim())
      throw ShapeError(fmt::format("stage {}: signal dimension mismatch", k));
  }
  if (static_cast<std::size_t>(spec.bias.size()) != n)
    throw ShapeError("bias dimension mismatch");
}

}  // namespace

double eval_encoder_cost(const Trajectory& traj, const GameSpec& spec) {
  check_trajectory(traj, spec);
  double total = 0.0;
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    double stage = (traj.m[k] - traj.u[k] - spec.bias).squaredNorm();
    if (spec.channel) stage += spec.lambda * traj.x[k].squaredNorm();
    total += spec.stage_weight(k) * stage;
  }
  return total;
}

double eval_decoder_cost(const Trajectory& traj, const GameSpec& spec) {
  check_trajectory(traj, spec);
  double total = 0.0;
  for (std::size_t k = 0; k < spec.horizon; ++k)
    total += spec.stage_weight(k) * (traj.m[k] - traj.u[k]).squaredNorm();
  return total;
}

TrajectorySampler::TrajectorySampler(GameSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (const auto* gm = std::get_if<GaussMarkovSource>(&spec_.source)) {
    initial_factor_ = psd_sqrt(gm->initial_covariance());
    for (std::size_t k = 0; k + 1 < spec_.horizon; ++k)
      process_factors_.push_back(psd_sqrt(gm->process_noise_at(k)));
  }
  if (spec_.channel)
    for (std::size_t k = 0; k < spec_.horizon; ++k)
      channel_factors_.push_back(psd_sqrt(spec_.channel->noise(k)));
}

Trajectory TrajectorySampler::sample(const EncoderPolicy& encoder, const DecoderPolicy& decoder,
                                     std::uint64_t seed, std::uint64_t sample) const {
  const std::size_t big_n = spec_.horizon;
  const auto n = static_cast<Eigen::Index>(spec_.source_dim());
  const auto p = static_cast<Eigen::Index>(spec_.signal_dim());
  Trajectory t;
  t.m.reserve(big_n);
  t.x.reserve(big_n);
  t.y.reserve(big_n);
  t.u.reserve(big_n);
  const auto* gm = std::get_if<GaussMarkovSource>(&spec_.source);
  for (std::size_t k = 0; k < big_n; ++k) {
    StreamRng rng(seed, sample, static_cast<std::uint32_t>(k));
    if (gm) {
      Vector z(n);
      for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
      if (k == 0)
        t.m.push_back(initial_factor_ * z);
      else
        t.m.push_back(gm->transition() * t.m[k - 1] + process_factors_[k - 1] * z);
    } else {
      t.m.push_back(Vector::Constant(1, std::get<ScalarSource>(spec_.source).draw(rng)));
    }
    Vector x = encoder(k, std::span<const Vector>(t.m.data(), k + 1),
                       std::span<const Vector>(t.y.data(), k));
    if (spec_.channel && x.size() != p)
      throw ShapeError(fmt::format("stage {}: encoder produced dimension {}, channel is {}", k,
                                   x.size(), p));
    Vector y = x;
    if (spec_.channel) {
      Vector w(p);
      for (Eigen::Index i = 0; i < p; ++i) w(i) = rng.normal();
      y += channel_factors_[k] * w;
    }
    t.x.push_back(std::move(x));
    t.y.push_back(std::move(y));
    Vector u = decoder(k, std::span<const Vector>(t.y.data(), k + 1));
    if (u.size() != n)
      throw ShapeError(fmt::format("stage {}: decoder produced dimension {}, source is {}", k,
                                   u.size(), n));
    t.u.push_back(std::move(u));
  }
  return t;
}

Trajectory sample_trajectory(const GameSpec& spec, const EncoderPolicy& encoder,
                             const DecoderPolicy& decoder, std::uint64_t seed,
                             std::uint64_t sample) {
  return TrajectorySampler(spec).sample(encoder, decoder, seed, sample);
}

// ---------------------------------------------------------------------------
// LinearInnovationCode

LinearInnovationCode::LinearInnovationCode(const GameSpec& spec, std::vector<Matrix> gains)
    : gains_(std::move(gains)) {
  spec.validate();
  const GaussMarkovSource& gm = spec.gauss_markov();
  if (!spec.channel) throw WrongGameError("linear innovation code requires a channel");
  if (gains_.size() != spec.horizon)
    throw ShapeError("linear innovation code: one gain per stage required");
  const auto n = static_cast<Eigen::Index>(gm.dim());
  const auto p = static_cast<Eigen::Index>(spec.channel->dim());
  g_ = gm.transition();
  bias_ = spec.bias;
  lambda_ = spec.lambda;
  Matrix prior = gm.initial_covariance();
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    const Matrix& a = gains_[k];
    if (a.rows() != p || a.cols() != n)
      throw ShapeError(fmt::format("stage {}: gain must be {} x {}", k, p, n));
    weights_.push_back(spec.stage_weight(k));
    const Matrix s = a * prior * a.transpose() + spec.channel->noise(k);
    Eigen::LDLT<Matrix> ldlt(s);
    if (ldlt.info() != Eigen::Success)
      throw SingularityError("linear innovation code: output covariance not invertible");
    const Matrix correction = ldlt.solve(a * prior).transpose();
    Matrix post = prior - correction * a * prior;
    post = 0.5 * (post + post.transpose());
    prior_.push_back(prior);
    posterior_.push_back(post);
    correction_.push_back(correction);
    prior = g_ * post * g_.transpose() + gm.process_noise_at(k);
    prior = 0.5 * (prior + prior.transpose());
  }
}

std::vector<double> LinearInnovationCode::powers() const {
  std::vector<double> out;
  for (std::size_t k = 0; k < gains_.size(); ++k)
    out.push_back((gains_[k] * prior_[k] * gains_[k].transpose()).trace());
  return out;
}

double LinearInnovationCode::decoder_cost() const {
  double total = 0.0;
  for (std::size_t k = 0; k < posterior_.size(); ++k) total += weights_[k] * posterior_[k].trace();
  return total;
}

double LinearInnovationCode::encoder_cost() const {
  const std::vector<double> power = powers();
  double total = 0.0;
  for (std::size_t k = 0; k < posterior_.size(); ++k)
    total += weights_[k] * (posterior_[k].trace() + lambda_ * power[k] + bias_.squaredNorm());
  return total;
}

Vector LinearInnovationCode::filter(std::span<const Vector> y, std::size_t count) const {
  Vector post = Vector::Zero(g_.rows());
  for (std::size_t i = 0; i < count; ++i) {
    const Vector prior_mean = i == 0 ? Vector::Zero(g_.rows()).eval() : (g_ * post).eval();
    post = prior_mean + correction_[i] * y[i];
  }
  return post;
}

EncoderPolicy LinearInnovationCode::encoder() const {
  auto self = std::make_shared<const LinearInnovationCode>(*this);
  return [self](std::size_t k, std::span<const Vector> m, std::span<const Vector> y) {
    Vector prior_mean = Vector::Zero(self->g_.rows());
    if (k > 0) prior_mean = self->g_ * self->filter(y, k);
    return (self->gains_[k] * (m[k] - prior_mean)).eval();
  };
}

DecoderPolicy LinearInnovationCode::decoder() const {
  auto self = std::make_shared<const LinearInnovationCode>(*this);
  return [self](std::size_t k, std::span<const Vector> y) { return self->filter(y, k + 1); };
}

}  // namespace dynsig

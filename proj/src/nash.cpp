#include "dynsig/nash.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "dynsig/errors.hpp"

namespace dynsig::nash {

namespace {

using Index = Eigen::Index;

// q = lin * z + off, with z the stacked independent Gaussian primitives
// [m_0, v_0 .. v_{N-2}, w_0 .. w_{N-1}].
struct AffineMap {
  Matrix lin;
  Vector off;
};

// Primitive layout and covariance of one game.
class Primitives {
 public:
  explicit Primitives(const GameSpec& spec)
      : gm_(spec.gauss_markov()), horizon_(spec.horizon) {
    if (!spec.channel) throw WrongGameError("affine Nash analysis requires a channel");
    n_ = static_cast<Index>(gm_.dim());
    p_ = static_cast<Index>(spec.channel->dim());
    const auto big_n = static_cast<Index>(horizon_);
    size_ = n_ * big_n + p_ * big_n;
    cov_ = Matrix::Zero(size_, size_);
    cov_.block(0, 0, n_, n_) = gm_.initial_covariance();
    for (std::size_t k = 0; k + 1 < horizon_; ++k)
      cov_.block(v_at(k), v_at(k), n_, n_) = gm_.process_noise_at(k);
    for (std::size_t k = 0; k < horizon_; ++k)
      cov_.block(w_at(k), w_at(k), p_, p_) = spec.channel->noise(k);
  }

  Index n() const { return n_; }
  Index p() const { return p_; }
  const Matrix& covariance() const { return cov_; }

  std::vector<AffineMap> sources() const {
    std::vector<AffineMap> m(horizon_);
    m[0] = {Matrix::Zero(n_, size_), Vector::Zero(n_)};
    m[0].lin.block(0, 0, n_, n_).setIdentity();
    for (std::size_t k = 1; k < horizon_; ++k) {
      m[k].lin = gm_.transition() * m[k - 1].lin;
      m[k].lin.block(0, v_at(k - 1), n_, n_) += Matrix::Identity(n_, n_);
      m[k].off = Vector::Zero(n_);
    }
    return m;
  }

  // Encoder outputs x_k and channel outputs y_k.
  void signals(const AffineEncoder& enc, const std::vector<AffineMap>& m,
               std::vector<AffineMap>& x, std::vector<AffineMap>& y) const {
    x.assign(horizon_, {});
    y.assign(horizon_, {});
    for (std::size_t k = 0; k < horizon_; ++k) {
      x[k] = {Matrix::Zero(p_, size_), enc[k].offset};
      for (std::size_t i = 0; i <= k; ++i) x[k].lin += enc[k].source_gains[i] * m[i].lin;
      for (std::size_t i = 0; i < k; ++i) {
        x[k].lin += enc[k].feedback_gains[i] * y[i].lin;
        x[k].off += enc[k].feedback_gains[i] * y[i].off;
      }
      y[k] = x[k];
      y[k].lin.block(0, w_at(k), p_, p_) += Matrix::Identity(p_, p_);
    }
  }

  double mean_square(const AffineMap& q) const {
    return q.off.squaredNorm() + (q.lin * cov_ * q.lin.transpose()).trace();
  }

 private:
  Index v_at(std::size_t k) const { return n_ + static_cast<Index>(k) * n_; }
  Index w_at(std::size_t k) const {
    return n_ * static_cast<Index>(horizon_) + static_cast<Index>(k) * p_;
  }

  const GaussMarkovSource& gm_;
  std::size_t horizon_;
  Index n_ = 0, p_ = 0, size_ = 0;
  Matrix cov_;
};

double max_abs_diff(const Matrix& a, const Matrix& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

void check_block(const Matrix& a, Index rows, Index cols, const char* what) {
  if (a.rows() != rows || a.cols() != cols)
    throw ShapeError(fmt::format("affine profile: {} is {}x{}, expected {}x{}", what, a.rows(),
                                 a.cols(), rows, cols));
}

void check_encoder(const AffineEncoder& enc, std::size_t horizon, Index n, Index p) {
  if (enc.size() != horizon) throw ShapeError("affine profile: one encoder stage per horizon step");
  for (std::size_t k = 0; k < horizon; ++k) {
    if (enc[k].source_gains.size() != k + 1 || enc[k].feedback_gains.size() != k)
      throw ShapeError("affine profile: encoder gains do not match the information set");
    for (const Matrix& a : enc[k].source_gains) check_block(a, p, n, "source gain");
    for (const Matrix& b : enc[k].feedback_gains) check_block(b, p, p, "feedback gain");
    check_block(enc[k].offset, p, 1, "encoder offset");
  }
}

void check_decoder(const AffineDecoder& dec, std::size_t horizon, Index n, Index p) {
  if (dec.size() != horizon) throw ShapeError("affine profile: one decoder stage per horizon step");
  for (std::size_t k = 0; k < horizon; ++k) {
    if (dec[k].gains.size() != k + 1)
      throw ShapeError("affine profile: decoder gains do not match the information set");
    for (const Matrix& d : dec[k].gains) check_block(d, n, p, "decoder gain");
    check_block(dec[k].offset, n, 1, "decoder offset");
  }
}

AffineEncoder blend(const AffineEncoder& old, const AffineEncoder& next, double t) {
  AffineEncoder out = old;
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (std::size_t i = 0; i < out[k].source_gains.size(); ++i)
      out[k].source_gains[i] += t * (next[k].source_gains[i] - old[k].source_gains[i]);
    for (std::size_t i = 0; i < out[k].feedback_gains.size(); ++i)
      out[k].feedback_gains[i] += t * (next[k].feedback_gains[i] - old[k].feedback_gains[i]);
    out[k].offset += t * (next[k].offset - old[k].offset);
  }
  return out;
}

AffineDecoder blend(const AffineDecoder& old, const AffineDecoder& next, double t) {
  AffineDecoder out = old;
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (std::size_t i = 0; i < out[k].gains.size(); ++i)
      out[k].gains[i] += t * (next[k].gains[i] - old[k].gains[i]);
    out[k].offset += t * (next[k].offset - old[k].offset);
  }
  return out;
}

// Cholesky solve of a Hessian that must be positive definite.
Matrix solve_pd(const Matrix& h, const Matrix& rhs, const char* stage) {
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success || min_eigenvalue(h) <= 0.0)
    throw UnboundedError(fmt::format("encoder best response: {} Hessian is not positive definite",
                                     stage));
  return llt.solve(rhs);
}

}  // namespace

AffineEncoder zero_affine_encoder(const GameSpec& spec) {
  const auto n = static_cast<Index>(spec.source_dim());
  const auto p = static_cast<Index>(spec.signal_dim());
  AffineEncoder enc(spec.horizon);
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    enc[k].source_gains.assign(k + 1, Matrix::Zero(p, n));
    enc[k].feedback_gains.assign(k, Matrix::Zero(p, p));
    enc[k].offset = Vector::Zero(p);
  }
  return enc;
}

AffineProfile AffineProfile::babbling(const GameSpec& spec) {
  const auto n = static_cast<Index>(spec.source_dim());
  const auto p = static_cast<Index>(spec.signal_dim());
  AffineProfile out;
  out.encoder = zero_affine_encoder(spec);
  out.decoder.resize(spec.horizon);
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    out.decoder[k].gains.assign(k + 1, Matrix::Zero(n, p));
    out.decoder[k].offset = Vector::Zero(n);
  }
  return out;
}

void AffineProfile::check(const GameSpec& spec) const {
  const auto n = static_cast<Index>(spec.source_dim());
  const auto p = static_cast<Index>(spec.signal_dim());
  check_encoder(encoder, spec.horizon, n, p);
  check_decoder(decoder, spec.horizon, n, p);
}

double max_difference(const AffineEncoder& a, const AffineEncoder& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].source_gains.size(); ++i)
      d = std::max(d, max_abs_diff(a[k].source_gains[i], b[k].source_gains[i]));
    for (std::size_t i = 0; i < a[k].feedback_gains.size(); ++i)
      d = std::max(d, max_abs_diff(a[k].feedback_gains[i], b[k].feedback_gains[i]));
    d = std::max(d, max_abs_diff(a[k].offset, b[k].offset));
  }
  return d;
}

double max_difference(const AffineDecoder& a, const AffineDecoder& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].gains.size(); ++i)
      d = std::max(d, max_abs_diff(a[k].gains[i], b[k].gains[i]));
    d = std::max(d, max_abs_diff(a[k].offset, b[k].offset));
  }
  return d;
}

AffineDecoder decoder_best_response(const AffineEncoder& encoder, const GameSpec& spec) {
  spec.validate();
  const Primitives prim(spec);
  const Index n = prim.n(), p = prim.p();
  check_encoder(encoder, spec.horizon, n, p);

  const std::vector<AffineMap> m = prim.sources();
  std::vector<AffineMap> x, y;
  prim.signals(encoder, m, x, y);
  const Matrix& s = prim.covariance();

  AffineDecoder out(spec.horizon);
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    const Index rows = p * static_cast<Index>(k + 1);
    Matrix ylin(rows, s.cols());
    Vector yoff(rows);
    for (std::size_t i = 0; i <= k; ++i) {
      ylin.middleRows(static_cast<Index>(i) * p, p) = y[i].lin;
      yoff.segment(static_cast<Index>(i) * p, p) = y[i].off;
    }
    const Matrix cov_y = ylin * s * ylin.transpose();
    const Matrix cross = m[k].lin * s * ylin.transpose();
    Eigen::LLT<Matrix> llt(cov_y);
    if (llt.info() != Eigen::Success)
      throw SingularityError("decoder best response: channel output covariance is singular");
    const Matrix gain = llt.solve(cross.transpose()).transpose();

    out[k].gains.resize(k + 1);
    for (std::size_t i = 0; i <= k; ++i)
      out[k].gains[i] = gain.middleCols(static_cast<Index>(i) * p, p);
    out[k].offset = m[k].off - gain * yoff;
  }
  return out;
}

AffineEncoder encoder_best_response(const AffineDecoder& decoder, const GameSpec& spec) {
  spec.validate();
  if (spec.horizon > 2)
    throw ArgumentError("encoder best response is implemented for horizons 1 and 2");
  const Primitives prim(spec);
  const Index n = prim.n(), p = prim.p();
  check_decoder(decoder, spec.horizon, n, p);
  const Matrix eye_p = Matrix::Identity(p, p);
  const Matrix eye_n = Matrix::Identity(n, n);
  const Vector& b = spec.bias;

  AffineEncoder out = zero_affine_encoder(spec);
  const std::size_t last = spec.horizon - 1;

  // Last stage: minimize |r - D x|^2 + lambda |x|^2 with
  // r = m_last - sum_{i<last} D_{last,i} y_i - E_last - b.
  const Matrix& d_last = decoder[last].gains[last];
  const Matrix h_last = d_last.transpose() * d_last + spec.lambda * eye_p;
  const Matrix f = solve_pd(h_last, d_last.transpose(), "final-stage");
  out[last].source_gains[last] = f;
  for (std::size_t i = 0; i < last; ++i) out[last].feedback_gains[i] = -f * decoder[last].gains[i];
  out[last].offset = -f * (b + decoder[last].offset);
  if (last == 0) return out;

  // First stage of a two-stage game. The optimal final-stage residual cost
  // is r^T Q r, with r affine in x_0 through y_0 and m_1 = G m_0 + v_0.
  const Matrix q = eye_n - d_last * f;
  const double beta = spec.stage_weight(1) / spec.stage_weight(0);
  const Matrix& d00 = decoder[0].gains[0];
  const Matrix& d10 = decoder[1].gains[0];
  const Matrix& g = spec.gauss_markov().transition();
  const Matrix h0 =
      d00.transpose() * d00 + spec.lambda * eye_p + beta * d10.transpose() * q * d10;
  Matrix rhs(p, n + 1);
  rhs.leftCols(n) = d00.transpose() + beta * d10.transpose() * q * g;
  rhs.col(n) = d00.transpose() * (-b - decoder[0].offset) +
               beta * d10.transpose() * q * (-b - decoder[1].offset);
  const Matrix sol = solve_pd(h0, rhs, "first-stage");
  out[0].source_gains[0] = sol.leftCols(n);
  out[0].offset = sol.col(n);
  return out;
}

AffineCosts expected_costs(const AffineProfile& profile, const GameSpec& spec) {
  spec.validate();
  const Primitives prim(spec);
  profile.check(spec);
  const std::vector<AffineMap> m = prim.sources();
  std::vector<AffineMap> x, y;
  prim.signals(profile.encoder, m, x, y);

  AffineCosts out;
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    AffineMap err = m[k];
    for (std::size_t i = 0; i <= k; ++i) {
      err.lin -= profile.decoder[k].gains[i] * y[i].lin;
      err.off -= profile.decoder[k].gains[i] * y[i].off;
    }
    err.off -= profile.decoder[k].offset;
    const double w = spec.stage_weight(k);
    out.decoder += w * prim.mean_square(err);
    err.off -= spec.bias;
    out.encoder += w * (prim.mean_square(err) + spec.lambda * prim.mean_square(x[k]));
  }
  return out;
}

bool is_informative(const AffineEncoder& encoder, double threshold) {
  for (const EncoderStage& st : encoder)
    for (const Matrix& a : st.source_gains)
      if (a.size() > 0 && a.cwiseAbs().maxCoeff() > threshold) return true;
  return false;
}

IterationResult best_response_iteration(const GameSpec& spec, const AffineProfile& init,
                                        const IterationOptions& options) {
  if (!(options.damping > 0.0 && options.damping <= 1.0))
    throw ArgumentError("best-response iteration: damping must lie in (0, 1]");
  init.check(spec);

  AffineProfile cur = init;
  std::vector<double> trace;
  for (std::size_t it = 1; it <= options.max_iters; ++it) {
    const AffineDecoder dec = blend(cur.decoder, decoder_best_response(cur.encoder, spec),
                                    options.damping);
    const AffineEncoder enc =
        blend(cur.encoder, encoder_best_response(dec, spec), options.damping);
    const double change =
        std::max(max_difference(dec, cur.decoder), max_difference(enc, cur.encoder));
    cur.decoder = dec;
    cur.encoder = enc;
    trace.push_back(change);
    if (change < options.tol) {
      IterationResult res;
      res.profile = cur;
      res.iterations = it;
      const AffineCosts costs = expected_costs(cur, spec);
      res.encoder_cost = costs.encoder;
      res.decoder_cost = costs.decoder;
      res.informative = is_informative(cur.encoder, options.informative_threshold);
      res.decoder_residual =
          max_difference(decoder_best_response(cur.encoder, spec), cur.decoder);
      res.encoder_residual =
          max_difference(encoder_best_response(cur.decoder, spec), cur.encoder);
      return res;
    }
  }
  std::string what =
      fmt::format("best-response iteration did not settle within {} iterations (last change {:.3g})",
                  options.max_iters, trace.empty() ? 0.0 : trace.back());
  throw ConvergenceError(what, std::move(trace));
}

EncoderPolicy affine_encoder_policy(AffineEncoder encoder) {
  return [enc = std::move(encoder)](std::size_t k, std::span<const Vector> m,
                                    std::span<const Vector> y) {
    const EncoderStage& st = enc.at(k);
    Vector x = st.offset;
    for (std::size_t i = 0; i <= k; ++i) x += st.source_gains[i] * m[i];
    for (std::size_t i = 0; i < k; ++i) x += st.feedback_gains[i] * y[i];
    return x;
  };
}

DecoderPolicy affine_decoder_policy(AffineDecoder decoder) {
  return [dec = std::move(decoder)](std::size_t k, std::span<const Vector> y) {
    const DecoderStage& st = dec.at(k);
    Vector u = st.offset;
    for (std::size_t i = 0; i <= k; ++i) u += st.gains[i] * y[i];
    return u;
  };
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::no_informative_affine: return "no-informative-affine";
    case Regime::second_stage_unused: return "m1-unused";
    case Regime::conditionally_informative: return "conditionally-informative";
    case Regime::uncovered: return "uncovered";
  }
  return "unknown";
}

TwoStageRegime classify_two_stage(const GameSpec& spec) {
  spec.validate();
  if (spec.horizon != 2) throw ArgumentError("two-stage classification requires horizon 2");
  const GaussMarkovSource& gm = spec.gauss_markov();
  if (gm.dim() != 1 || !spec.channel || spec.channel->dim() != 1)
    throw ShapeError("two-stage classification requires a scalar source and scalar channel");

  const double g = gm.transition()(0, 0);
  const double var_m0 = gm.initial_covariance()(0, 0);
  const double var_m1 = g * g * var_m0 + gm.process_noise_at(0)(0, 0);
  const double var_w0 = spec.channel->noise(0)(0, 0);
  const double var_w1 = spec.channel->noise(1)(0, 0);
  const double b = spec.bias(0);
  const double lambda = spec.lambda;

  TwoStageRegime out;
  out.first_ratio = (g * g + 1.0) * var_m0 / var_w0;
  out.second_ratio = var_m1 / var_w1;
  out.second_variance = var_m1;
  const double q0 = out.first_ratio, q1 = out.second_ratio;
  out.at_boundary = lambda == q0 || lambda == q1;

  if (lambda > std::max(q0, q1)) {
    out.regime = Regime::no_informative_affine;
    out.informative = false;
  } else if (q1 < lambda && lambda <= q0) {
    out.regime = Regime::second_stage_unused;
  } else if (q0 < lambda && lambda <= q1) {
    out.regime = Regime::conditionally_informative;
    if (var_m1 >= 4.0 * b * b) {
      const double root = std::sqrt(var_m1) * std::sqrt(var_m1 - 4.0 * b * b);
      out.window_low = std::max((var_m1 - 2.0 * b * b - root) / (2.0 * var_w1), q0);
      out.window_high = (var_m1 - 2.0 * b * b + root) / (2.0 * var_w1);
      out.informative = *out.window_low < lambda && lambda < *out.window_high;
      out.at_boundary = out.at_boundary || lambda == *out.window_low || lambda == *out.window_high;
    } else {
      out.informative = false;
    }
  } else {
    out.regime = Regime::uncovered;
  }
  return out;
}

}  // namespace dynsig::nash

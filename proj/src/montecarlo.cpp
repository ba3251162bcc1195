#include "dynsig/montecarlo.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

#include "dynsig/errors.hpp"

namespace dynsig::montecarlo {

namespace {

// Running mean and sum of squared deviations, per component.
struct Welford {
  std::uint64_t count = 0;
  Vector mean;
  Vector m2;

  void add(const Vector& x) {
    if (count == 0) {
      mean = Vector::Zero(x.size());
      m2 = Vector::Zero(x.size());
    }
    ++count;
    const Vector delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta.cwiseProduct(x - mean);
  }

  // Pairwise merge; applied in block order it is deterministic.
  void merge(const Welford& other) {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count), nb = static_cast<double>(other.count);
    const double n = na + nb;
    const Vector delta = other.mean - mean;
    mean += delta * (nb / n);
    m2 += other.m2 + delta.cwiseProduct(delta) * (na * nb / n);
    count += other.count;
  }
};

double z_score(double mean, double theory, double se) {
  if (se > 0.0) return (mean - theory) / se;
  return mean == theory ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(),
                                              mean - theory);
}

}  // namespace

MomentEstimate estimate_statistic(const GameSpec& spec, const EncoderPolicy& encoder,
                                  const DecoderPolicy& decoder, const Statistic& statistic,
                                  std::uint64_t samples, std::uint64_t seed,
                                  const SimulationOptions& options) {
  if (samples < 2) throw ArgumentError("Monte Carlo estimate needs at least 2 samples");
  if (options.block_size == 0) throw ArgumentError("block size must be positive");
  const TrajectorySampler sampler(spec);
  const std::uint64_t block = options.block_size;
  const std::uint64_t blocks = (samples + block - 1) / block;
  std::vector<Welford> acc(blocks);

  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, blocks));

  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      for (std::uint64_t b = next++; b < blocks; b = next++) {
        const std::uint64_t end = std::min(samples, (b + 1) * block);
        for (std::uint64_t i = b * block; i < end; ++i)
          acc[b].add(statistic(sampler.sample(encoder, decoder, seed, i)));
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = blocks;
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  Welford total;
  for (const Welford& w : acc) total.merge(w);
  const double n = static_cast<double>(total.count);
  MomentEstimate out;
  out.mean = total.mean;
  out.se = (total.m2 / (n - 1.0)).cwiseMax(0.0).cwiseSqrt() / std::sqrt(n);
  out.samples = total.count;
  return out;
}

CostEstimate estimate(const GameSpec& spec, const EncoderPolicy& encoder,
                      const DecoderPolicy& decoder, std::uint64_t samples, std::uint64_t seed,
                      const SimulationOptions& options) {
  const Statistic costs = [&spec](const Trajectory& t) {
    Vector v(2);
    v << eval_encoder_cost(t, spec), eval_decoder_cost(t, spec);
    return v;
  };
  const MomentEstimate m = estimate_statistic(spec, encoder, decoder, costs, samples, seed, options);
  CostEstimate out;
  out.mean_encoder = m.mean(0);
  out.mean_decoder = m.mean(1);
  out.se_encoder = m.se(0);
  out.se_decoder = m.se(1);
  out.samples = m.samples;
  out.seed = seed;
  return out;
}

Comparison compare_to_theory(const CostEstimate& estimate, double theory_encoder,
                             double theory_decoder, double bands) {
  Comparison c;
  c.z_encoder = z_score(estimate.mean_encoder, theory_encoder, estimate.se_encoder);
  c.z_decoder = z_score(estimate.mean_decoder, theory_decoder, estimate.se_decoder);
  c.encoder_ok = std::abs(c.z_encoder) <= bands;
  c.decoder_ok = std::abs(c.z_decoder) <= bands;
  return c;
}

}  // namespace dynsig::montecarlo

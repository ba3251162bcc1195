#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "dynsig/game.hpp"

namespace dynsig::montecarlo {

struct CostEstimate {
  double mean_encoder = 0.0;
  double mean_decoder = 0.0;
  double se_encoder = 0.0;  // sample stddev / sqrt(samples)
  double se_decoder = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
};

struct MomentEstimate {
  Vector mean;
  Vector se;
  std::uint64_t samples = 0;
};

struct SimulationOptions {
  // Samples per block. Blocks are the unit of work and of merging, so
  // results depend on block_size but not on the thread count.
  std::size_t block_size = 4096;
  unsigned threads = 0;  // 0: hardware concurrency
};

using Statistic = std::function<Vector(const Trajectory&)>;

// Mean and standard error of an arbitrary per-trajectory statistic.
// Sample i is drawn from the streams (seed, i, stage), so any sample can be
// regenerated alone. Throws ArgumentError for fewer than 2 samples.
MomentEstimate estimate_statistic(const GameSpec& spec, const EncoderPolicy& encoder,
                                  const DecoderPolicy& decoder, const Statistic& statistic,
                                  std::uint64_t samples, std::uint64_t seed,
                                  const SimulationOptions& options = {});

CostEstimate estimate(const GameSpec& spec, const EncoderPolicy& encoder,
                      const DecoderPolicy& decoder, std::uint64_t samples, std::uint64_t seed,
                      const SimulationOptions& options = {});

struct Comparison {
  double z_encoder = 0.0;
  double z_decoder = 0.0;
  bool encoder_ok = false;
  bool decoder_ok = false;

  bool passes() const { return encoder_ok && decoder_ok; }
};

// |mean - theory| <= bands * SE per cost. A zero SE passes only on exact
// equality.
Comparison compare_to_theory(const CostEstimate& estimate, double theory_encoder,
                             double theory_decoder, double bands = 3.0);

}  // namespace dynsig::montecarlo

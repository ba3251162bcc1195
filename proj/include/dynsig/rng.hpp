#pragma once

#include <array>
#include <cstdint>

namespace dynsig {

// Philox4x32-10 counter-based generator (Salmon et al., Random123).
// A block is a pure function of (key, counter), so any draw can be
// reproduced from its coordinates without replaying earlier draws.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter counter, Key key);
};

// Deterministic stream addressed by (seed, sample index, stage index).
// Draws within the stream are consumed sequentially; the fourth counter
// word indexes the block inside the stream.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t sample, std::uint32_t stage);

  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();

  // Standard normal via the Box-Muller transform; pairs are cached.
  double normal();

 private:
  void refill();

  Philox4x32::Key key_;
  Philox4x32::Counter counter_;
  Philox4x32::Counter buffer_{};
  int buffered_ = 0;  // remaining 64-bit words in buffer_ (0..2)
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dynsig

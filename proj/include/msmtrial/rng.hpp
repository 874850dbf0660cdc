#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace msmtrial {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011).
/// A stream is identified by (seed, stream_id); the block counter is the
/// draw index, so distinct stream ids can never produce overlapping
/// sequences. All outputs are pure integer arithmetic, identical on every
/// platform.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        stream_lo_(static_cast<std::uint32_t>(stream_id)),
        stream_hi_(static_cast<std::uint32_t>(stream_id >> 32)) {}

  /// Uniform double strictly inside (0, 1).
  double uniform() {
    const std::uint64_t bits = next64();
    return (static_cast<double>(bits >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  /// Exponential with the given rate.
  double exponential(double rate) { return -std::log(uniform()) / rate; }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Raw 128-bit block for the given counter (used by the stream-collision
  /// test); does not advance the stream.
  std::array<std::uint32_t, 4> block(std::uint64_t counter) const {
    return philox(counter);
  }

 private:
  std::uint64_t next64() {
    if (word_ == 0) {
      buf_ = philox(counter_++);
      word_ = 4;
    }
    const std::uint64_t hi = buf_[word_ - 1];
    const std::uint64_t lo = buf_[word_ - 2];
    word_ -= 2;
    return (hi << 32) | lo;
  }

  std::array<std::uint32_t, 4> philox(std::uint64_t counter) const {
    std::uint32_t c0 = static_cast<std::uint32_t>(counter);
    std::uint32_t c1 = static_cast<std::uint32_t>(counter >> 32);
    std::uint32_t c2 = stream_lo_;
    std::uint32_t c3 = stream_hi_;
    std::uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ULL * c0;
      const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0; c1 = n1; c2 = n2; c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    return {c0, c1, c2, c3};
  }

  std::uint32_t key0_, key1_, stream_lo_, stream_hi_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int word_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace msmtrial

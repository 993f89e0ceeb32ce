#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A stream is a
// pure function of (seed, replicate, stream id, position), so replicates can
// run in any order or on any thread and still draw identical numbers.

#include <array>
#include <cstdint>

#include "powermt/numerics.hpp"

namespace powermt {

class Philox4x32 {
public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      ctr = single_round(ctr, key);
    }
    return ctr;
  }

private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Counter single_round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Sequential view of one (seed, replicate, stream) Philox stream.
class StreamRng {
public:
  StreamRng(std::uint64_t seed, std::uint64_t replicate, std::uint32_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        rep_lo_(static_cast<std::uint32_t>(replicate)),
        rep_hi_(static_cast<std::uint32_t>(replicate >> 32)),
        stream_(stream) {}

  std::uint64_t next_u64() {
    if (lane_ == 0) {
      buffer_ = Philox4x32::block({block_, stream_, rep_lo_, rep_hi_}, key_);
      ++block_;
    }
    const std::uint64_t out = (std::uint64_t{buffer_[2 * lane_]} << 32) | buffer_[2 * lane_ + 1];
    lane_ ^= 1;
    return out;
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal by inversion.
  double normal() { return norm_quantile(uniform()); }

private:
  Philox4x32::Key key_;
  std::uint32_t rep_lo_;
  std::uint32_t rep_hi_;
  std::uint32_t stream_;
  std::uint32_t block_ = 0;
  int lane_ = 0;
  Philox4x32::Counter buffer_{};
};

}  // namespace powermt

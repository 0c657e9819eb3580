#pragma once

// Counter-based random streams (Philox4x32-10) with deterministic lane splitting.
//
// A stream is identified by (root_seed, lane). The root seed is the Philox key,
// the lane occupies the upper half of the 128-bit counter and the lower half is
// the block index. Two streams with the same (root_seed, lane) produce identical
// draws; different lanes never share a counter value.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>

namespace vrpg {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(product);
  hi = static_cast<std::uint32_t>(product >> 32);
}

// Philox4x32 with 10 rounds (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53;
  constexpr std::uint32_t kM1 = 0xCD9E8D57;
  constexpr std::uint32_t kW0 = 0x9E3779B9;
  constexpr std::uint32_t kW1 = 0xBB67AE85;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo32(kM0, ctr[0], lo0, hi0);
    mulhilo32(kM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

}  // namespace detail

class RngStream {
 public:
  explicit RngStream(std::uint64_t root_seed, std::uint64_t lane = 0)
      : root_seed_(root_seed), lane_(lane) {}

  std::uint64_t root_seed() const { return root_seed_; }
  std::uint64_t lane() const { return lane_; }
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64() {
    if (buffered_ == 0) refill();
    const std::uint64_t out = buffer_[2 - buffered_];
    --buffered_;
    ++draws_;
    return out;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_positive() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one draw per call, two uniforms consumed).
  double normal() {
    const double u1 = uniform_positive();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Index drawn from a probability vector by inverse CDF. Consumes one draw.
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("categorical: empty distribution");
    const double u = uniform();
    double cumulative = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) last_positive = static_cast<int>(i);
      cumulative += probs[i];
      if (u < cumulative && probs[i] > 0.0) return static_cast<int>(i);
    }
    if (last_positive < 0) throw std::invalid_argument("categorical: no positive mass");
    return last_positive;
  }

  /// Child stream on a distinct lane; does not advance this stream.
  RngStream split(std::uint64_t index) const {
    return RngStream(root_seed_, detail::splitmix64(detail::splitmix64(lane_) ^ (index + 1)));
  }

  /// Child stream whose lane is drawn from this stream (advances it by one draw).
  RngStream fork() { return RngStream(root_seed_, detail::splitmix64(next_u64())); }

 private:
  void refill() {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(lane_), static_cast<std::uint32_t>(lane_ >> 32)};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(root_seed_),
                                              static_cast<std::uint32_t>(root_seed_ >> 32)};
    const auto out = detail::philox4x32(ctr, key);
    buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    buffered_ = 2;
    ++block_;
  }

  std::uint64_t root_seed_;
  std::uint64_t lane_;
  std::uint64_t block_ = 0;
  std::uint64_t draws_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

}  // namespace vrpg

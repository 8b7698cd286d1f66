#pragma once

#include <array>
#include <cstdint>

namespace ovrp {

/// xoshiro256** 1.0 (Blackman & Vigna).
///
/// Stream discipline: the state for (seed, stream s) is obtained by seeding
/// four words from SplitMix64(seed) and then applying the canonical 2^128
/// jump s times. Streams are therefore non-overlapping and identical on
/// every platform.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();

  /// Uniform on the open interval (0, 1): 53 random bits, offset by half
  /// an ulp so that neither endpoint is produced.
  double uniform();

  /// Standard normal by inversion; consumes exactly one uniform.
  double normal();

  void jump();

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace ovrp

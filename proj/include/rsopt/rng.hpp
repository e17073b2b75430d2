// Counter-based random number generation. Every draw is a pure function of
// (key, counter), so streams can be split per realization/user/restart and
// replayed bit-exactly on any platform.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>

namespace rsopt {

// splitmix64 output function (Steele, Lea, Flood; the stream generator behind
// java.util.SplittableRandom).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Mixes a list of words into a single stream key.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> words) {
  std::uint64_t key = 0x6a09e667f3bcc909ull;
  for (std::uint64_t w : words) key = splitmix64(key ^ w);
  return key;
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static const char* algorithm() { return "splitmix64+box-muller"; }

  std::uint64_t next_u64() { return splitmix64(key_ + counter_++ * 0x9e3779b97f4a7c15ull); }

  // Uniform in (0, 1]; never returns 0 so log() below is safe.
  double next_unit() {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  // Standard complex Gaussian CN(0, 1) via Box-Muller (no rejection, so the
  // draw count per sample is fixed and the stream stays counter-addressable).
  std::complex<double> next_cnormal() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-std::log(u1));  // radius of CN(0,1): E|z|^2 = 1
    const double phi = 6.283185307179586476925286766559 * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  // Real standard normal.
  double next_normal() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rsopt

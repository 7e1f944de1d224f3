#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace cbdi {

/// splitmix64 finaliser; used to derive keys from (seed, path, ...) tuples.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

/// Philox4x32-10 (Salmon et al. 2011).  Pure function of (counter, key).
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  static Block generate(Block ctr, std::uint64_t key) {
    std::uint32_t k0 = static_cast<std::uint32_t>(key), k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
      }
      std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0, static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1, static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }
};

/// Two doubles in (0, 1) from one Philox block (53 random bits each).
inline std::array<double, 2> block_uniforms(const Philox4x32::Block& b) {
  auto to_open = [](std::uint32_t hi, std::uint32_t lo) {
    std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  };
  return {to_open(b[0], b[1]), to_open(b[2], b[3])};
}

/// Box-Muller pair from two open uniforms.
inline std::array<double, 2> box_muller(double u1, double u2) {
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

/// Sequential draws from the substream (key, domain, layer).  The counter is
/// (draw index, layer, domain), so distinct substreams never overlap and a
/// substream can be regenerated from scratch without touching its neighbours.
class CounterStream {
 public:
  CounterStream(std::uint64_t key, std::uint32_t domain, std::uint32_t layer)
      : key_(key), domain_(domain), layer_(layer) {}

  double uniform() {
    if (cached_ == 0) refill();
    return buf_[2 - cached_--];
  }
  double exponential() { return -std::log(uniform()); }
  double normal() {
    double u1 = uniform(), u2 = uniform();
    return box_muller(u1, u2)[0];
  }

 private:
  void refill() {
    Philox4x32::Block ctr{static_cast<std::uint32_t>(draw_), static_cast<std::uint32_t>(draw_ >> 32), layer_, domain_};
    buf_ = block_uniforms(Philox4x32::generate(ctr, key_));
    ++draw_;
    cached_ = 2;
  }

  std::uint64_t key_;
  std::uint32_t domain_, layer_;
  std::uint64_t draw_ = 0;
  std::array<double, 2> buf_{};
  int cached_ = 0;
};

}  // namespace cbdi

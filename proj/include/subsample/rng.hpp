#pragma once

#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>

#include "subsample/errors.hpp"

namespace subsample {

// xoshiro256** seeded through splitmix64. position() counts 64-bit outputs.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    seed_ = seed;
    position_ = 0;
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    ++position_;
    return result;
  }

  // 53 random bits centred in their cell: never 0, never 1.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  // UniformRandomBitGenerator, for std::shuffle and friends.
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t s_[4]{};
  std::uint64_t seed_ = 0;
  std::uint64_t position_ = 0;
};

template <class R>
concept UniformSource = requires(R& r) {
  { r.uniform01() } -> std::convertible_to<double>;
  { r.next_u64() } -> std::convertible_to<std::uint64_t>;
};

// Geo(p) on {0,1,...} by inversion. Saturates at uint64 max for tiny p.
inline std::uint64_t geometric_from_uniform(double u, double p) {
  if (p >= 1.0) return 0;
  const double g = std::floor(std::log(u) / std::log1p(-p));
  if (!(g < 0x1.0p63)) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(g);
}

// Inverse CDF of Geo(p)+1 truncated to [1, n].
inline std::uint64_t truncated_landing_from_uniform(double u, double p, std::uint64_t n) {
  if (n == 1 || p >= 1.0) return 1;
  const double l1p = std::log1p(-p);
  const double reach = -std::expm1(static_cast<double>(n) * l1p);  // 1-(1-p)^n
  const double j = std::ceil(std::log1p(-u * reach) / l1p);
  if (!(j >= 1.0)) return 1;
  if (j >= static_cast<double>(n)) return n;
  return static_cast<std::uint64_t>(j);
}

template <UniformSource R>
std::uint64_t geometric_skip(R& rng, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidProbability("geometric_skip needs 0 < p <= 1");
  if (p == 1.0) return 0;
  return geometric_from_uniform(rng.uniform01(), p);
}

template <UniformSource R>
std::uint64_t first_landing_truncated(R& rng, double p, std::uint64_t n) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidProbability("first_landing_truncated needs 0 < p <= 1");
  if (n == 0) throw Error("first_landing_truncated needs n >= 1");
  if (n == 1 || p == 1.0) return 1;
  return truncated_landing_from_uniform(rng.uniform01(), p, n);
}

// Uniform on [1, k]; Lemire's multiply-shift with rejection.
template <UniformSource R>
std::uint64_t uniform_int(R& rng, std::uint64_t k) {
  if (k == 0) throw Error("uniform_int needs k >= 1");
  std::uint64_t x = rng.next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * k;
  auto low = static_cast<std::uint64_t>(m);
  if (low < k) {
    const std::uint64_t threshold = (0 - k) % k;
    while (low < threshold) {
      x = rng.next_u64();
      m = static_cast<__uint128_t>(x) * k;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64) + 1;
}

template <UniformSource R>
bool bernoulli(R& rng, double p) {
  return rng.uniform01() < p;
}

}  // namespace subsample

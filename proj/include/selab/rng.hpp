#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace selab {

// Counter-based seeding: every random object is a pure function of a 64-bit
// root seed plus a list of index tags, so replicates, steps, and trials can be
// generated in any order (or in parallel) with identical results.

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Hash a root seed with index tags into a stream seed.
inline std::uint64_t sub_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = seed ^ 0x5a75bde0c5a11ab1ULL;
  for (std::uint64_t t : tags) {
    s ^= splitmix64(s) + (t + 1) * 0x9e3779b97f4a7c15ULL;
    (void)splitmix64(s);
  }
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) : Rng(sub_seed(seed, tags)) {}

  std::uint64_t next_u64() {
    auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in (0, 1]; never returns 0 so log() is safe.
  double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(kTwoPi * u2);
    have_spare_ = true;
    return r * std::cos(kTwoPi * u2);
  }

  void fill_normal(std::vector<double>& out, double scale) {
    for (auto& x : out) x = scale * normal();
  }

 private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Gaussian vector with entries N(0, 1/m): the 1/sqrt(m) internal scaling, so
/// E||v||^2 = 1 and all downstream inner products are plain Euclidean.
inline std::vector<double> gaussian_vector(std::size_t m, std::uint64_t seed,
                                           std::initializer_list<std::uint64_t> tags) {
  Rng rng(seed, tags);
  std::vector<double> v(m);
  rng.fill_normal(v, 1.0 / std::sqrt(static_cast<double>(m)));
  return v;
}

}  // namespace selab

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace confgen {

// SplitMix64. All randomness in the project flows through this generator so
// that runs are reproducible independent of platform RNG implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in the open interval (0, 1).
  double uniform01() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// A named-substream random source. Substreams are derived by hashing the
// parent seed with a label and an index, so the draw sequence for e.g.
// ("epoch", 3)/("molecule", 17) does not depend on loop order elsewhere.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : seed_(seed), rng_(mix(seed)) {}

  RandomStream sub(std::string_view name, std::uint64_t index = 0) const {
    std::uint64_t h = seed_ ^ 0xcbf29ce484222325ull;
    for (char c : name) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    h ^= index + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return RandomStream(mix(h));
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return rng_.next(); }

  double uniform01() { return rng_.uniform01(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(rng_.next() % span);
  }

  // Standard normal via Box-Muller (no rejection, fully deterministic).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = rng_.uniform01();
    const double u2 = rng_.uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.28318530717958647692 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  std::vector<double> normal_vector(std::size_t n) {
    std::vector<double> out(n);
    for (auto& x : out) x = normal();
    return out;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng_.next() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    SplitMix64 s(x);
    s.next();
    return s.next();
  }

  std::uint64_t seed_;
  SplitMix64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace confgen

#pragma once

#include <cmath>
#include <cstdint>

namespace firmnet {

// Counter-based generator: the n-th output is a pure function of (key, n),
// so streams are reproducible across platforms and splittable without
// jumping. The mixing function is the splitmix64 finalizer.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed ^ kKeyTweak)) {}

  std::uint64_t next_u64() { return at(counter_++); }

  // Derive an independent child stream. split(i) for distinct i gives
  // decorrelated streams regardless of how much the parent has been used.
  Rng split(std::uint64_t index) const {
    Rng child(0);
    child.key_ = mix64(mix64(key_ + kSplitTweak) ^ mix64(index + kIndexTweak));
    child.counter_ = 0;
    return child;
  }

  // Uniform on [0,1) with 53 random mantissa bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Always consumes exactly two words so the
  // call sequence stays aligned with the counter.
  double normal() {
    const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    const double u2 = double(next_u64() >> 11) * 0x1.0p-53;        // [0,1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Modulo bias is < 2^-53 for desk-scale n; acceptable here.
    return next_u64() % n;
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;
  static constexpr std::uint64_t kKeyTweak = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kSplitTweak = 0xD1B54A32D192ED03ull;
  static constexpr std::uint64_t kIndexTweak = 0x8CB92BA72F3D8DD7ull;

  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t at(std::uint64_t i) const { return mix64(key_ + i * 0x9E3779B97F4A7C15ull); }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace firmnet

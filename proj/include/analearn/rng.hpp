#pragma once

#include <cmath>
#include <cstdint>

namespace analearn {

/// SplitMix64 generator (Steele, Lea & Flood; the java.util.SplittableRandom
/// finalizer). Chosen as the project-wide RNG because its integer stream is
/// bit-identical on every platform, so datasets regenerate exactly from their
/// recorded seeds. Gaussian variates come from Box-Muller on the uniform
/// stream; uniform ints use modulo reduction (bias < 2^-57 at our bounds).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). bound must be >= 1.
  std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

  /// Standard normal via Box-Muller; the paired variate is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; has_spare_ = false; }

  /// Stateless mix used to derive independent per-item streams from a base
  /// seed, e.g. stream(seed, image_index, kSaltNoise).
  static std::uint64_t mix(std::uint64_t v) {
    v = (v ^ (v >> 30)) * 0xBF58476D1CE4E5B9ULL;
    v = (v ^ (v >> 27)) * 0x94D049BB133111EBULL;
    return v ^ (v >> 31);
  }

  static std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index,
                                     std::uint64_t salt) {
    std::uint64_t s = mix(seed + 0x9E3779B97F4A7C15ULL);
    s = mix(s ^ mix(index + 0xD1B54A32D192ED03ULL));
    s = mix(s ^ mix(salt + 0x8BB84B93962EACC9ULL));
    return s;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace analearn

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rslab {

// Counter-based splittable RNG. Every uniform draw is a pure function of
// (seed, path, step, substream), so ensembles are reproducible and
// order-independent regardless of worker count or scheduling.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t path) : seed_(seed), path_(path) {}

  std::uint64_t bits(std::uint64_t step, std::uint64_t substream) const {
    std::uint64_t x = mix(seed_ ^ 0x243f6a8885a308d3ULL);
    x = mix(x ^ (path_ * 0x9e3779b97f4a7c15ULL));
    x = mix(x ^ (step * 0xbf58476d1ce4e5b9ULL));
    x = mix(x ^ (substream * 0x94d049bb133111ebULL));
    return x;
  }

  // Uniform on [0, 1).
  double uniform(std::uint64_t step, std::uint64_t substream) const {
    return static_cast<double>(bits(step, substream) >> 11) * 0x1.0p-53;
  }

  // Uniform on [-1, 1].
  double symmetric(std::uint64_t step, std::uint64_t substream) const {
    return 2.0 * uniform(step, substream) - 1.0;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t path() const { return path_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t path_;
};

// Substream conventions shared by the simulators. A Markov transition
// consumes up to two uniforms (kSampleA, kSampleB); initial-state draws use
// kInit at step 0. Process noise uses kNoise.
inline constexpr std::uint64_t kSubSampleA = 0;
inline constexpr std::uint64_t kSubSampleB = 1;
inline constexpr std::uint64_t kSubNoise = 2;
inline constexpr std::uint64_t kSubInit = 7;

// Compensated (Kahan) running sum; keeps long partial sums deterministic
// to the last bit across platforms and optimization levels.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }
  void reset() { s_ = 0.0; c_ = 0.0; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

// FNV-1a over bytes; used for spec fingerprints recorded in output metadata.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Full-precision decimal rendering (17 significant digits) so CSV output
// round-trips to the exact double.
std::string format_full(double x);

// Pairwise tree reduction over per-item values; result is independent of
// how the items were produced (fixed association order keyed by index).
double tree_sum(const std::vector<double>& values);

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace rslab

#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace salstab {

// Counter-based generator built on the SplitMix64 finalizer: the i-th output
// is mix(key + GOLDEN * i), so any draw is addressable by (key, counter)
// without sequential state. Sub-streams are derived by hashing a stream id
// into the key, which keeps concurrent consumers decorrelated and the whole
// program reproducible from a single root seed.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  // Key for an independent sub-stream.
  static std::uint64_t derive(std::uint64_t key, std::uint64_t stream) {
    return mix(key ^ mix(stream + 0x165667b19e3779f9ULL));
  }

  std::uint64_t next_u64() {
    return mix(key_ + kGolden * ++counter_);
  }

  // Uniform on [0, 1) with 53 bits of mantissa.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on [-a, a].
  double next_symmetric(double a) { return (2.0 * next_double() - 1.0) * a; }

  // Uniform index in [0, n). Modulo bias is below 2^-50 for any n that fits
  // in a dataset here.
  std::size_t next_index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  void fill_gaussian(Eigen::VectorXd& out, double stddev) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      out[i] = stddev * next_gaussian();
    }
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace salstab

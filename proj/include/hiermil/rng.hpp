#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

#include "hiermil/common.hpp"

namespace hiermil {

// Identifier for the generation algorithm, recorded in dataset manifests.
inline constexpr const char* kRngAlgorithm = "mt19937_64+boxmuller/v1";

// Derives a child seed from a root seed, a purpose label and an index.
// Seeds for independent components (folds, per-fold training, per-class
// runs, per-image generation) all come from here so that one root seed
// reproduces an entire run.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t index = 0) {
  char bytes[16];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<char>((root >> (8 * i)) & 0xff);
    bytes[8 + i] = static_cast<char>((index >> (8 * i)) & 0xff);
  }
  std::uint64_t h = fnv1a64(label);
  return fnv1a64(std::string_view(bytes, sizeof(bytes)), h);
}

// Seeded generator with explicitly defined transforms. std::* distributions
// are implementation-defined, so everything that must reproduce byte-for-byte
// goes through this class instead.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is below 1e-15 for desk-scale n.
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(uniform_index(
                    static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  // Box-Muller, one value per call, fixed consumption of two uniforms.
  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      std::swap(p[i], p[static_cast<int>(uniform_index(i + 1))]);
    }
    return p;
  }

  // First k entries of a random permutation of [0, n).
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> p = permutation(n);
    p.resize(std::min(n, k));
    return p;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hiermil

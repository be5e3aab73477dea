#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace mtt {

// Seed-splitting helpers. Everything here avoids std::hash and the standard
// <random> distributions, whose outputs are implementation-defined; the raw
// mt19937_64 stream itself is fully specified by the standard, so runs are
// reproducible across builds.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Deterministic RNG with portable sampling built on raw mt19937_64 output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t u64() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
    // Rejection-free multiply-shift; bias is < 2^-64 per draw.
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  double normal() {
    // Box-Muller, one value per call (the spare is discarded to keep the
    // state a plain stream position).
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Gamma(k, 1) via Marsaglia-Tsang, boosted for k < 1.
  double gamma(double k) {
    if (k <= 0.0) throw std::invalid_argument("Rng::gamma: k must be positive");
    if (k < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(k + 1.0) * std::pow(u, 1.0 / k);
    }
    const double d = k - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = index(i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 gen_;
};

/// Per-example sub-seed: hash of (master seed, video id, frame index).
inline std::uint64_t sub_seed(std::uint64_t master, std::string_view video_id,
                              std::uint64_t frame_index) {
  return splitmix64(splitmix64(master ^ fnv1a64(video_id)) ^ frame_index);
}

}  // namespace mtt

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic random number generation. std::*_distribution is
// implementation-defined, so every mapping from engine output to a draw is
// spelled out here; identical seeds give identical streams on any platform
// with the same IEEE-754 doubles.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ltk/error.hpp"

namespace ltk {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// FNV-1a, for hashing names and canonical text into seed material.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Seed derivation: children streams are keyed by mixing tags into the parent
// seed, e.g. mix_seed(seed, kNoiseStream, epoch, batch, slot).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ull));
}

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

// Stream tags, one per independent consumer of randomness.
namespace seed_tag {
constexpr std::uint64_t class_template = 0x11;
constexpr std::uint64_t scene_sample = 0x12;
constexpr std::uint64_t device_noise = 0x13;
constexpr std::uint64_t device_profile = 0x14;
constexpr std::uint64_t layer_init = 0x21;
constexpr std::uint64_t epoch_shuffle = 0x31;
constexpr std::uint64_t latent_noise = 0x32;
constexpr std::uint64_t mixup = 0x33;
constexpr std::uint64_t cell = 0x41;
constexpr std::uint64_t target_init = 0x42;
}  // namespace seed_tag

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the second draw of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // 1 - u1 keeps the log argument in (0, 1].
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) raise(ErrorCategory::usage, "uniform_int: n must be positive");
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = eng_();
      if (r >= threshold) return r % n;
    }
  }

  // Gamma(shape, 1) via Marsaglia-Tsang, with the Johnk-style boost for
  // shape < 1.
  double gamma(double shape) {
    if (shape <= 0.0) raise(ErrorCategory::config, "gamma: shape must be positive");
    if (shape < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates with our own bounded draws.
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ltk

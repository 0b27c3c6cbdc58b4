#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace omnia::rng {

using Engine = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Child seed for (stream, index) under a master seed. Every random draw in
// the library goes through here, so per-image work gives the same result
// whether images are processed serially or in parallel.
constexpr std::uint64_t derive(std::uint64_t master, std::string_view stream,
                               std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ fnv1a(stream)) + index);
}

inline Engine engine(std::uint64_t master, std::string_view stream,
                     std::uint64_t index = 0) {
  return Engine(derive(master, stream, index));
}

// Uniform in [0, 1), built from the top 53 bits so the stream is identical
// across standard library implementations.
inline double uniform(Engine& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on the portable uniform stream.
inline double normal(Engine& gen) {
  const double u1 = 1.0 - uniform(gen);  // (0, 1]
  const double u2 = uniform(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Poisson draw by inversion; fine for the small means used here.
inline int poisson(Engine& gen, double mean) {
  if (mean <= 0.0) return 0;
  const double u = uniform(gen);
  double p = std::exp(-mean);
  double cdf = p;
  int k = 0;
  while (u > cdf && k < 1000) {
    ++k;
    p *= mean / k;
    cdf += p;
  }
  return k;
}

}  // namespace omnia::rng

#pragma once

// Seeded deterministic RNG and distribution sampling.
//
// Generator: xoshiro256++ (Blackman & Vigna), state initialized from the
// 64-bit seed via splitmix64. The generator is fully specified here so the
// same seed yields the same stream on every platform; std:: engines are
// never used for anything that ends up in a key or a golden file.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cyphertalk/errors.hpp"

namespace cyphertalk {

namespace detail {

inline uint64_t splitmix64(uint64_t& x) {
  uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = detail::splitmix64(sm);
  }

  uint64_t seed() const { return seed_; }

  // Independent stream for (seed, label). Labeled streams get distinct
  // splitmix-expanded states, so they do not collide with each other or
  // with the root stream.
  Rng stream(std::string_view label) const {
    return Rng(seed_ ^ detail::fnv1a64(label));
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit mantissa.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).  Rejection keeps the distribution exact.
  uint64_t below(uint64_t n) {
    if (n == 0) throw ConfigError("Rng::below: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller; the spare draw is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double sigma) { return gaussian() * sigma; }

  // Gamma(k, theta) via Marsaglia-Tsang, with the U^(1/k) boost for k < 1.
  double gamma(double k, double theta) {
    if (!(k > 0.0)) throw ConfigError("gamma: shape k must be > 0");
    if (!(theta > 0.0)) throw ConfigError("gamma: scale theta must be > 0");
    if (k < 1.0) {
      double u;
      do {
        u = uniform();
      } while (u <= 0.0);
      return gamma(k + 1.0, theta) * std::pow(u, 1.0 / k);
    }
    const double d = k - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = gaussian();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * theta;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
        return d * v * theta;
    }
  }

  // Laplace(0, b) via inverse CDF.
  double laplace(double b) {
    if (!(b > 0.0)) throw ConfigError("laplace: scale must be > 0");
    const double u = uniform() - 0.5;
    const double sign = u < 0.0 ? -1.0 : 1.0;
    return -b * sign * std::log(1.0 - 2.0 * std::fabs(u));
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t seed_;
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Distribution request used by key generation.
struct DistSpec {
  enum class Kind { Uniform, Gaussian, Gamma, GaussianEps, LaplaceEps };
  Kind kind = Kind::Uniform;
  double sigma = 1.0;    // Gaussian
  double k = 1.0;        // Gamma shape
  double theta = 1.0;    // Gamma scale
  double epsilon = 1.0;  // GaussianEps / LaplaceEps scale
};

inline std::vector<double> sample(const DistSpec& dist, size_t n, Rng& rng) {
  if (n < 1) throw ConfigError("sample: n must be >= 1");
  std::vector<double> out(n);
  switch (dist.kind) {
    case DistSpec::Kind::Uniform:
      for (auto& v : out) v = rng.uniform();
      break;
    case DistSpec::Kind::Gaussian:
      if (!(dist.sigma >= 0.0)) throw ConfigError("sample: sigma must be >= 0");
      for (auto& v : out) v = rng.gaussian(dist.sigma);
      break;
    case DistSpec::Kind::Gamma:
      if (!(dist.k > 0.0)) throw ConfigError("sample: gamma shape k must be > 0");
      if (!(dist.theta > 0.0))
        throw ConfigError("sample: gamma scale theta must be > 0");
      for (auto& v : out) v = rng.gamma(dist.k, dist.theta);
      break;
    case DistSpec::Kind::GaussianEps:
      if (!(dist.epsilon >= 0.0))
        throw ConfigError("sample: epsilon must be >= 0");
      for (auto& v : out) v = rng.gaussian(dist.epsilon);
      break;
    case DistSpec::Kind::LaplaceEps:
      if (!(dist.epsilon > 0.0)) throw ConfigError("sample: epsilon must be > 0");
      for (auto& v : out) v = rng.laplace(dist.epsilon);
      break;
  }
  return out;
}

}  // namespace cyphertalk

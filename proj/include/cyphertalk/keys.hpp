#pragma once

// Key pair generation and the CTKY key file format: vertical shaking rounds
// (operator + hyperparameters + sampled material) and the horizontal
// vocabulary permutation table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cyphertalk/errors.hpp"
#include "cyphertalk/io.hpp"
#include "cyphertalk/matrix.hpp"
#include "cyphertalk/rng.hpp"

namespace cyphertalk {

enum class VsOp : uint8_t {
  Addv = 0,
  Inflate = 1,
  Tilt = 2,
  DxFixp = 3,
  Gaussian = 4,
  Laplace = 5,
};

inline const char* vs_op_name(VsOp op) {
  switch (op) {
    case VsOp::Addv: return "addv";
    case VsOp::Inflate: return "inflate";
    case VsOp::Tilt: return "tilt";
    case VsOp::DxFixp: return "dx-fixp";
    case VsOp::Gaussian: return "gaussian";
    case VsOp::Laplace: return "laplace";
  }
  return "?";
}

inline VsOp vs_op_from_name(const std::string& s) {
  for (uint8_t i = 0; i <= 5; ++i)
    if (s == vs_op_name(static_cast<VsOp>(i))) return static_cast<VsOp>(i);
  throw ConfigError("unknown vertical operator: " + s);
}

// Hyperparameters for one operator. Only the fields an operator uses are
// meaningful; the rest ride along with their defaults.
struct VsOpts {
  double delta = 1.0;    // overall scale
  double sigma = 0.1;    // Inflate / Tilt noise stddev
  double k = 2.0;        // DxFixp gamma shape
  double theta = 1.0;    // DxFixp gamma scale
  double epsilon = 0.1;  // Gaussian / Laplace scale
};

// Diagonal entries below this magnitude would destroy columns beyond
// recovery; Inflate clamps and Tilt resamples against it.
inline constexpr double kInvertibilityFloor = 0.05;

struct VsRound {
  VsOp op = VsOp::Addv;
  VsOpts opts;
  // Sampled material. Addv/DxFixp/Gaussian/Laplace: one d-vector.
  // Inflate: one d-vector of diagonal entries. Tilt: {v, u} with
  // T = I + delta * v u^T.
  std::vector<Vector> material;

  bool operator==(const VsRound& o) const {
    return op == o.op && opts.delta == o.opts.delta &&
           opts.sigma == o.opts.sigma && opts.k == o.opts.k &&
           opts.theta == o.opts.theta && opts.epsilon == o.opts.epsilon &&
           material == o.material;
  }
};

struct HorizontalKey {
  std::vector<uint32_t> tab;

  bool is_bijection() const {
    std::vector<uint32_t> s = tab;
    std::sort(s.begin(), s.end());
    for (uint32_t i = 0; i < s.size(); ++i)
      if (s[i] != i) return false;
    return true;
  }

  HorizontalKey inverse() const {
    HorizontalKey inv;
    inv.tab.resize(tab.size());
    for (uint32_t i = 0; i < tab.size(); ++i) inv.tab[tab[i]] = i;
    return inv;
  }

  bool is_identity() const {
    for (uint32_t i = 0; i < tab.size(); ++i)
      if (tab[i] != i) return false;
    return true;
  }

  bool operator==(const HorizontalKey& o) const { return tab == o.tab; }
};

struct KeyPair {
  std::vector<VsRound> rounds;
  HorizontalKey hs;
  uint32_t vocab_size = 0;
  uint32_t embed_dim = 0;
  uint64_t seed = 0;

  bool operator==(const KeyPair& o) const {
    return rounds == o.rounds && hs == o.hs && vocab_size == o.vocab_size &&
           embed_dim == o.embed_dim && seed == o.seed;
  }
};

namespace detail {

inline Vector unit_sphere_vector(size_t d, Rng& rng) {
  Vector v(d);
  double n;
  do {
    for (auto& x : v) x = rng.gaussian();
    n = norm2(v);
  } while (n < 1e-12);
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace detail

inline VsRound generate_vs_round(VsOp op, const VsOpts& opts, size_t d,
                                 Rng& rng) {
  VsRound r;
  r.op = op;
  r.opts = opts;
  switch (op) {
    case VsOp::Addv: {
      Vector v = sample({DistSpec::Kind::Uniform}, d, rng);
      for (auto& x : v) x *= opts.delta;
      r.material = {std::move(v)};
      break;
    }
    case VsOp::Inflate: {
      // Entries 1 + delta*N(0, sigma^2), magnitude clamped away from zero.
      DistSpec spec{DistSpec::Kind::Gaussian};
      spec.sigma = opts.sigma;
      Vector diag = sample(spec, d, rng);
      for (auto& x : diag) {
        x = 1.0 + opts.delta * x;
        if (std::fabs(x) < kInvertibilityFloor)
          x = (x < 0.0 ? -1.0 : 1.0) * kInvertibilityFloor;
      }
      r.material = {std::move(diag)};
      break;
    }
    case VsOp::Tilt: {
      // T = I + delta * v u^T; resample v until T is safely invertible.
      Vector u = detail::unit_sphere_vector(d, rng);
      DistSpec spec{DistSpec::Kind::Gaussian};
      spec.sigma = opts.sigma;
      Vector v;
      for (;;) {
        v = sample(spec, d, rng);
        if (std::fabs(1.0 + opts.delta * dot(u, v)) >= kInvertibilityFloor)
          break;
      }
      r.material = {std::move(v), std::move(u)};
      break;
    }
    case VsOp::DxFixp: {
      // Fixed perturbation: uniform direction, gamma-distributed norm.
      Vector dir = detail::unit_sphere_vector(d, rng);
      const double norm = rng.gamma(opts.k, opts.theta);
      for (auto& x : dir) x *= norm * opts.delta;
      r.material = {std::move(dir)};
      break;
    }
    case VsOp::Gaussian: {
      DistSpec spec{DistSpec::Kind::GaussianEps};
      spec.epsilon = opts.epsilon;
      Vector v = sample(spec, d, rng);
      for (auto& x : v) x *= opts.delta;
      r.material = {std::move(v)};
      break;
    }
    case VsOp::Laplace: {
      DistSpec spec{DistSpec::Kind::LaplaceEps};
      spec.epsilon = opts.epsilon;
      Vector v = sample(spec, d, rng);
      for (auto& x : v) x *= opts.delta;
      r.material = {std::move(v)};
      break;
    }
  }
  return r;
}

inline std::vector<VsRound> generate_vertical_key(
    size_t n, const std::vector<VsOp>& allowed_ops,
    const std::map<VsOp, VsOpts>& opts, size_t d, Rng& rng) {
  if (n > 0 && allowed_ops.empty())
    throw ConfigError("generate_vertical_key: allowed_ops is empty");
  if (d < 1) throw ConfigError("generate_vertical_key: d must be >= 1");
  std::vector<VsRound> rounds;
  rounds.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const VsOp op = allowed_ops[rng.below(allowed_ops.size())];
    auto it = opts.find(op);
    rounds.push_back(
        generate_vs_round(op, it == opts.end() ? VsOpts{} : it->second, d, rng));
  }
  return rounds;
}

// Fisher-Yates over 0..V-1.
inline HorizontalKey generate_horizontal_key(size_t V, Rng& rng) {
  if (V < 1) throw ConfigError("generate_horizontal_key: V must be >= 1");
  HorizontalKey hs;
  hs.tab.resize(V);
  for (uint32_t i = 0; i < V; ++i) hs.tab[i] = i;
  for (size_t i = V - 1; i > 0; --i) {
    const size_t j = rng.below(i + 1);
    std::swap(hs.tab[i], hs.tab[j]);
  }
  return hs;
}

struct KeyGenConfig {
  size_t vs_n = 0;
  std::vector<VsOp> allowed_ops;
  std::map<VsOp, VsOpts> opts;
};

inline KeyPair generate_keypair(const KeyGenConfig& cfg, size_t V, size_t d,
                                uint64_t seed) {
  KeyPair kp;
  kp.vocab_size = static_cast<uint32_t>(V);
  kp.embed_dim = static_cast<uint32_t>(d);
  kp.seed = seed;
  Rng root(seed);
  Rng vs_rng = root.stream("vs-key");
  Rng hs_rng = root.stream("hs-key");
  kp.rounds = generate_vertical_key(cfg.vs_n, cfg.allowed_ops, cfg.opts, d, vs_rng);
  kp.hs = generate_horizontal_key(V, hs_rng);
  return kp;
}

namespace detail {

inline void validate_keypair(const KeyPair& kp) {
  if (kp.hs.tab.size() != kp.vocab_size)
    throw FormatError(FormatError::Kind::Invariant, "hs.tab length != vocab size");
  if (!kp.hs.is_bijection())
    throw FormatError(FormatError::Kind::Invariant,
                      "hs.tab is not a bijection on the vocabulary");
  const size_t d = kp.embed_dim;
  for (const auto& r : kp.rounds) {
    const size_t want_vecs = r.op == VsOp::Tilt ? 2 : 1;
    if (r.material.size() != want_vecs)
      throw FormatError(FormatError::Kind::Invariant, "round material count");
    for (const auto& v : r.material)
      if (v.size() != d)
        throw FormatError(FormatError::Kind::Invariant,
                          "round material dimension != embed dim");
    if (r.op == VsOp::Inflate) {
      for (double e : r.material[0])
        if (std::fabs(e) < kInvertibilityFloor)
          throw FormatError(FormatError::Kind::Invariant,
                            "Inflate diagonal entry below invertibility floor");
    }
    if (r.op == VsOp::Tilt) {
      const double det = 1.0 + r.opts.delta * dot(r.material[1], r.material[0]);
      if (std::fabs(det) < kInvertibilityFloor)
        throw FormatError(FormatError::Kind::Invariant,
                          "Tilt matrix not safely invertible");
    }
  }
}

}  // namespace detail

inline constexpr uint16_t kKeyFileVersion = 1;

inline Bytes keypair_serialize(const KeyPair& kp) {
  detail::validate_keypair(kp);
  ByteWriter w;
  w.magic("CTKY");
  w.u16(kKeyFileVersion);
  w.u32(kp.vocab_size);
  w.u32(kp.embed_dim);
  w.u64(kp.seed);
  w.u16(static_cast<uint16_t>(kp.rounds.size()));
  for (const auto& r : kp.rounds) {
    w.u8(static_cast<uint8_t>(r.op));
    w.f64(r.opts.delta);
    w.f64(r.opts.sigma);
    w.f64(r.opts.k);
    w.f64(r.opts.theta);
    w.f64(r.opts.epsilon);
    w.u8(static_cast<uint8_t>(r.material.size()));
    for (const auto& v : r.material) w.f64_vec(v);
  }
  w.u32_vec(kp.hs.tab);
  w.crc_trailer();
  return w.bytes();
}

inline KeyPair keypair_deserialize(const Bytes& bytes) {
  ByteReader r(bytes);
  r.verify_crc_trailer();
  r.expect_magic("CTKY");
  const uint16_t version = r.u16();
  if (version != kKeyFileVersion)
    throw FormatError(FormatError::Kind::BadVersion, "unsupported key file version");
  KeyPair kp;
  kp.vocab_size = r.u32();
  kp.embed_dim = r.u32();
  kp.seed = r.u64();
  const uint16_t n = r.u16();
  kp.rounds.resize(n);
  for (auto& round : kp.rounds) {
    const uint8_t op = r.u8();
    if (op > 5)
      throw FormatError(FormatError::Kind::Invariant, "unknown operator id");
    round.op = static_cast<VsOp>(op);
    round.opts.delta = r.f64();
    round.opts.sigma = r.f64();
    round.opts.k = r.f64();
    round.opts.theta = r.f64();
    round.opts.epsilon = r.f64();
    const uint8_t nvec = r.u8();
    round.material.resize(nvec);
    for (auto& v : round.material) v = r.f64_vec();
  }
  kp.hs.tab = r.u32_vec();
  detail::validate_keypair(kp);
  return kp;
}

inline void keypair_save(const KeyPair& kp, const std::string& path) {
  write_file(path, keypair_serialize(kp));
}

inline KeyPair keypair_load(const std::string& path) {
  return keypair_deserialize(read_file(path));
}

}  // namespace cyphertalk

#pragma once

// Tiny from-scratch language model M = {O, T, E}: token embedding E, a
// 1-2 block transformer-style body T (single-head dot-product mixing +
// tanh feed-forward, residuals, RMS norm), output projection O for lm mode
// and an optional classifier head for task mode. Forward, cross-entropy
// loss with analytic gradients, SGD step, and the CTKM checkpoint format.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cyphertalk/errors.hpp"
#include "cyphertalk/io.hpp"
#include "cyphertalk/matrix.hpp"
#include "cyphertalk/rng.hpp"

namespace cyphertalk {

enum class Mode { Lm, Task };

struct ModelDims {
  uint32_t V = 256;   // vocab size
  uint32_t d = 32;    // embedding dim
  uint32_t layers = 1;
  uint32_t h = 64;    // feed-forward hidden dim
  uint32_t C = 2;     // classifier classes; 0 = no head

  bool operator==(const ModelDims& o) const {
    return V == o.V && d == o.d && layers == o.layers && h == o.h && C == o.C;
  }
};

struct Block {
  Matrix Wm;   // d x d mixing weights
  Matrix W1;   // d x h
  Matrix W2;   // h x d
  Vector g1;   // pre-mixing RMS-norm scale
  Vector g2;   // pre-FF RMS-norm scale
};

struct LanguageModel {
  ModelDims dims;
  bool tied = false;   // O shares E's storage
  Matrix E;            // V x d
  Matrix O;            // V x d; unused storage when tied
  std::vector<Block> blocks;
  Matrix head;         // C x d; empty when C == 0

  Matrix& out_weights() { return tied ? E : O; }
  const Matrix& out_weights() const { return tied ? E : O; }
  bool has_head() const { return head.rows() > 0; }
};

// Ragged batch; sequence lengths double as the validity mask.
struct Batch {
  std::vector<std::vector<uint32_t>> X;
  std::vector<std::vector<uint32_t>> Ylm;  // lm mode targets (empty = Y=X)
  std::vector<uint32_t> Ytask;             // task mode labels
};

struct Grads {
  Matrix E;
  Matrix O;
  std::vector<Block> blocks;
  Matrix head;
};

// Parameter groups for freezing.
enum : uint32_t {
  kFreezeNone = 0,
  kFreezeE = 1u << 0,
  kFreezeO = 1u << 1,
  kFreezeBody = 1u << 2,
  kFreezeHead = 1u << 3,
  kFreezeAll = kFreezeE | kFreezeO | kFreezeBody | kFreezeHead,
};

inline constexpr double kRmsEps = 1e-8;

inline LanguageModel init_model(const ModelDims& dims, bool tied,
                                uint64_t seed) {
  LanguageModel m;
  m.dims = dims;
  m.tied = tied;
  Rng root(seed);
  auto fill = [](Matrix& mat, double sigma, Rng rng) {
    for (auto& v : mat.data()) v = rng.gaussian(sigma);
  };
  m.E = Matrix(dims.V, dims.d);
  fill(m.E, 0.1, root.stream("E"));
  if (!tied) {
    m.O = Matrix(dims.V, dims.d);
    fill(m.O, 0.1, root.stream("O"));
  }
  m.blocks.resize(dims.layers);
  const double ws = 1.0 / std::sqrt(double(dims.d));
  for (uint32_t l = 0; l < dims.layers; ++l) {
    auto& b = m.blocks[l];
    const std::string tag = "block" + std::to_string(l);
    b.Wm = Matrix(dims.d, dims.d);
    fill(b.Wm, ws, root.stream(tag + ".Wm"));
    b.W1 = Matrix(dims.d, dims.h);
    fill(b.W1, ws, root.stream(tag + ".W1"));
    b.W2 = Matrix(dims.h, dims.d);
    fill(b.W2, 1.0 / std::sqrt(double(dims.h)), root.stream(tag + ".W2"));
    b.g1.assign(dims.d, 1.0);
    b.g2.assign(dims.d, 1.0);
  }
  if (dims.C > 0) {
    m.head = Matrix(dims.C, dims.d);
    fill(m.head, 0.1, root.stream("head"));
  }
  return m;
}

inline Grads zero_grads(const LanguageModel& m) {
  Grads g;
  g.E = Matrix(m.dims.V, m.dims.d);
  if (!m.tied) g.O = Matrix(m.dims.V, m.dims.d);
  g.blocks.resize(m.blocks.size());
  for (size_t l = 0; l < m.blocks.size(); ++l) {
    g.blocks[l].Wm = Matrix(m.dims.d, m.dims.d);
    g.blocks[l].W1 = Matrix(m.dims.d, m.dims.h);
    g.blocks[l].W2 = Matrix(m.dims.h, m.dims.d);
    g.blocks[l].g1.assign(m.dims.d, 0.0);
    g.blocks[l].g2.assign(m.dims.d, 0.0);
  }
  if (m.has_head()) g.head = Matrix(m.dims.C, m.dims.d);
  return g;
}

namespace detail {

using Rows = std::vector<Vector>;  // one d-vector per position

inline Vector rmsnorm(const Vector& v, const Vector& g, double& r_out) {
  double ms = 0.0;
  for (double x : v) ms += x * x;
  const double r = std::sqrt(ms / double(v.size()) + kRmsEps);
  r_out = r;
  Vector n(v.size());
  for (size_t j = 0; j < v.size(); ++j) n[j] = v[j] / r * g[j];
  return n;
}

// dn -> (dv accumulated, dg accumulated)
inline void rmsnorm_backward(const Vector& v, const Vector& g, double r,
                             const Vector& dn, Vector& dv, Vector& dg) {
  const size_t d = v.size();
  double s = 0.0;  // v . (g o dn)
  for (size_t j = 0; j < d; ++j) s += v[j] * g[j] * dn[j];
  const double r3 = r * r * r;
  for (size_t j = 0; j < d; ++j) {
    dv[j] += g[j] * dn[j] / r - v[j] * s / (double(d) * r3);
    dg[j] += dn[j] * v[j] / r;
  }
}

inline void softmax_inplace(Vector& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double sum = 0.0;
  for (auto& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (auto& x : v) x /= sum;
}

struct BlockCache {
  Rows h_in;          // block input
  Rows n1;            // rmsnorm(h_in)
  std::vector<double> r1;
  Rows p;             // Wm n_u per position
  std::vector<Vector> scores;  // softmax rows S_t
  Rows h_mid;         // after attention residual
  Rows n2;
  std::vector<double> r2;
  Rows f;             // tanh(n2 W1), h-dim rows
};

struct SeqCache {
  std::vector<BlockCache> blocks;
  Rows h_out;
  Vector pooled;  // task mode
};

// Forward one sequence through the body; caches everything backward needs.
inline Rows body_forward(const LanguageModel& m,
                         const std::vector<uint32_t>& ids, SeqCache* cache) {
  const size_t L = ids.size();
  const size_t d = m.dims.d;
  const double inv_sqrt_d = 1.0 / std::sqrt(double(d));
  Rows H(L);
  for (size_t t = 0; t < L; ++t) {
    if (ids[t] >= m.dims.V)
      throw InputError("token id " + std::to_string(ids[t]) +
                       " out of range at position " + std::to_string(t));
    H[t].assign(m.E.row(ids[t]), m.E.row(ids[t]) + d);
  }
  if (cache) cache->blocks.resize(m.blocks.size());
  for (size_t l = 0; l < m.blocks.size(); ++l) {
    const Block& b = m.blocks[l];
    BlockCache* bc = cache ? &cache->blocks[l] : nullptr;
    if (bc) bc->h_in = H;

    Rows n1(L);
    std::vector<double> r1(L);
    for (size_t t = 0; t < L; ++t) n1[t] = rmsnorm(H[t], b.g1, r1[t]);

    Rows p(L);
    for (size_t u = 0; u < L; ++u) p[u] = matvec(b.Wm, n1[u]);

    std::vector<Vector> S(L);
    Rows att(L);
    for (size_t t = 0; t < L; ++t) {
      Vector s(L);
      for (size_t u = 0; u < L; ++u) s[u] = dot(n1[t], p[u]) * inv_sqrt_d;
      softmax_inplace(s);
      Vector a(d, 0.0);
      for (size_t u = 0; u < L; ++u) axpy(s[u], n1[u], a);
      S[t] = std::move(s);
      att[t] = std::move(a);
    }
    for (size_t t = 0; t < L; ++t) axpy(1.0, att[t], H[t]);
    if (bc) {
      bc->n1 = std::move(n1);
      bc->r1 = std::move(r1);
      bc->p = std::move(p);
      bc->scores = std::move(S);
      bc->h_mid = H;
    }

    Rows n2(L);
    std::vector<double> r2(L);
    for (size_t t = 0; t < L; ++t) n2[t] = rmsnorm(H[t], b.g2, r2[t]);
    Rows f(L);
    for (size_t t = 0; t < L; ++t) {
      Vector z = matvec_t(b.W1, n2[t]);  // W1 is d x h; z = W1^T n2
      for (auto& x : z) x = std::tanh(x);
      f[t] = std::move(z);
      Vector ff = matvec_t(b.W2, f[t]);  // W2 is h x d; ff = W2^T f
      axpy(1.0, ff, H[t]);
    }
    if (bc) {
      bc->n2 = std::move(n2);
      bc->r2 = std::move(r2);
      bc->f = std::move(f);
    }
  }
  if (cache) cache->h_out = H;
  return H;
}

// Backward through the body given dH over output rows; accumulates into g.
inline void body_backward(const LanguageModel& m,
                          const std::vector<uint32_t>& ids,
                          const SeqCache& cache, Rows dH, Grads& g) {
  const size_t L = ids.size();
  const size_t d = m.dims.d;
  const double inv_sqrt_d = 1.0 / std::sqrt(double(d));
  for (size_t li = m.blocks.size(); li-- > 0;) {
    const Block& b = m.blocks[li];
    const BlockCache& bc = cache.blocks[li];
    Block& gb = g.blocks[li];

    // FF sub-block: h_out = h_mid + W2^T tanh(W1^T n2)
    Rows dH_mid(L, Vector(d, 0.0));
    for (size_t t = 0; t < L; ++t) {
      axpy(1.0, dH[t], dH_mid[t]);  // residual
      // dff = dH[t]; df = W2 dff, through tanh, dz; dn2 = W1 dz
      Vector df = matvec(b.W2, dH[t]);
      const Vector& f = bc.f[t];
      Vector dz(f.size());
      for (size_t j = 0; j < f.size(); ++j) dz[j] = df[j] * (1.0 - f[j] * f[j]);
      // gW2 += f outer dH[t]; gW1 += n2 outer dz
      for (size_t j = 0; j < f.size(); ++j) {
        double* w2r = gb.W2.row(j);
        const double fj = f[j];
        for (size_t c = 0; c < d; ++c) w2r[c] += fj * dH[t][c];
      }
      const Vector& n2 = bc.n2[t];
      for (size_t j = 0; j < d; ++j) {
        double* w1r = gb.W1.row(j);
        const double nj = n2[j];
        for (size_t c = 0; c < dz.size(); ++c) w1r[c] += nj * dz[c];
      }
      Vector dn2 = matvec(b.W1, dz);
      rmsnorm_backward(bc.h_mid[t], b.g2, bc.r2[t], dn2, dH_mid[t], gb.g2);
    }

    // Attention sub-block: h_mid = h_in + sum_u S_tu n1_u
    Rows dH_in(L, Vector(d, 0.0));
    Rows dn1(L, Vector(d, 0.0));
    std::vector<Vector> ds(L, Vector(L, 0.0));
    for (size_t t = 0; t < L; ++t) {
      axpy(1.0, dH_mid[t], dH_in[t]);  // residual
      const Vector& dA = dH_mid[t];
      const Vector& S = bc.scores[t];
      Vector dS(L);
      double sdot = 0.0;
      for (size_t u = 0; u < L; ++u) {
        dS[u] = dot(dA, bc.n1[u]);
        sdot += S[u] * dS[u];
      }
      for (size_t u = 0; u < L; ++u) {
        axpy(S[u], dA, dn1[u]);
        ds[t][u] = S[u] * (dS[u] - sdot);
      }
    }
    // Score gradients: s_tu = n1_t . (Wm n1_u) / sqrt(d)
    for (size_t t = 0; t < L; ++t) {
      Vector wt(d, 0.0);  // sum_u ds_tu n1_u
      for (size_t u = 0; u < L; ++u) axpy(ds[t][u], bc.n1[u], wt);
      Vector wmwt = matvec(b.Wm, wt);
      axpy(inv_sqrt_d, wmwt, dn1[t]);
      const Vector& nt = bc.n1[t];
      for (size_t rr = 0; rr < d; ++rr) {
        double* gr = gb.Wm.row(rr);
        const double ntr = nt[rr] * inv_sqrt_d;
        for (size_t c = 0; c < d; ++c) gr[c] += ntr * wt[c];
      }
    }
    for (size_t u = 0; u < L; ++u) {
      Vector ru(d, 0.0);  // sum_t ds_tu n1_t
      bool any = false;
      for (size_t t = 0; t < L; ++t) {
        if (ds[t][u] != 0.0) any = true;
        axpy(ds[t][u], bc.n1[t], ru);
      }
      if (any) {
        Vector v = matvec_t(b.Wm, ru);  // Wm^T ru
        axpy(inv_sqrt_d, v, dn1[u]);
      }
    }
    for (size_t t = 0; t < L; ++t)
      rmsnorm_backward(bc.h_in[t], b.g1, bc.r1[t], dn1[t], dH_in[t], gb.g1);

    dH = std::move(dH_in);
  }
  // Embedding
  for (size_t t = 0; t < L; ++t) {
    double* er = g.E.row(ids[t]);
    for (size_t c = 0; c < d; ++c) er[c] += dH[t][c];
  }
}

}  // namespace detail

// Logits for one sequence: per-position V-dim rows (lm) or a single C-dim
// row (task).
inline std::vector<Vector> forward(const LanguageModel& m,
                                   const std::vector<uint32_t>& ids,
                                   Mode mode) {
  if (ids.empty()) throw InputError("forward: empty sequence");
  if (mode == Mode::Task && !m.has_head())
    throw ConfigError("forward: task mode requires a classifier head");
  detail::Rows H = detail::body_forward(m, ids, nullptr);
  if (mode == Mode::Lm) {
    const Matrix& O = m.out_weights();
    std::vector<Vector> logits(H.size());
    for (size_t t = 0; t < H.size(); ++t) logits[t] = matvec(O, H[t]);
    return logits;
  }
  Vector pooled(m.dims.d, 0.0);
  for (const auto& h : H) axpy(1.0 / double(H.size()), h, pooled);
  return {matvec(m.head, pooled)};
}

struct LossResult {
  double loss = 0.0;
  Grads grads;
};

// Mean-over-sequences cross-entropy (lm: also mean over positions) with
// analytic gradients. Frozen groups get zeroed gradients.
inline LossResult loss_and_grads(const LanguageModel& m, const Batch& batch,
                                 Mode mode, uint32_t freeze = kFreezeNone) {
  const size_t B = batch.X.size();
  if (B == 0) throw InputError("loss_and_grads: empty batch");
  if (mode == Mode::Task) {
    if (!m.has_head())
      throw ConfigError("loss_and_grads: task mode requires a classifier head");
    if (batch.Ytask.size() != B)
      throw InputError("loss_and_grads: label count != batch size");
  }
  LossResult res;
  res.grads = zero_grads(m);
  const double inv_b = 1.0 / double(B);
  for (size_t s = 0; s < B; ++s) {
    const auto& ids = batch.X[s];
    if (ids.empty()) throw InputError("loss_and_grads: empty sequence in batch");
    detail::SeqCache cache;
    detail::Rows H = detail::body_forward(m, ids, &cache);
    const size_t L = ids.size();
    detail::Rows dH(L, Vector(m.dims.d, 0.0));
    if (mode == Mode::Lm) {
      const Matrix& O = m.out_weights();
      Matrix& gO = m.tied ? res.grads.E : res.grads.O;
      const auto& targets = batch.Ylm.empty() ? ids : batch.Ylm[s];
      if (targets.size() != L)
        throw InputError("loss_and_grads: target length != input length");
      const double scale = inv_b / double(L);
      for (size_t t = 0; t < L; ++t) {
        if (targets[t] >= m.dims.V)
          throw InputError("loss_and_grads: target id out of range");
        Vector logits = matvec(O, H[t]);
        detail::softmax_inplace(logits);
        const double p = std::max(logits[targets[t]], 1e-300);
        res.loss += -std::log(p) * scale;
        // dlogits = (softmax - onehot) * scale
        logits[targets[t]] -= 1.0;
        for (size_t v = 0; v < m.dims.V; ++v) {
          const double dl = logits[v] * scale;
          if (dl == 0.0) continue;
          const double* orow = O.row(v);
          double* gorow = gO.row(v);
          for (size_t c = 0; c < m.dims.d; ++c) {
            dH[t][c] += dl * orow[c];
            gorow[c] += dl * H[t][c];
          }
        }
      }
    } else {
      const uint32_t y = batch.Ytask[s];
      if (y >= m.dims.C) throw InputError("loss_and_grads: label out of range");
      Vector pooled(m.dims.d, 0.0);
      for (const auto& h : H) axpy(1.0 / double(L), h, pooled);
      Vector logits = matvec(m.head, pooled);
      detail::softmax_inplace(logits);
      const double p = std::max(logits[y], 1e-300);
      res.loss += -std::log(p) * inv_b;
      logits[y] -= 1.0;
      Vector dpool(m.dims.d, 0.0);
      for (size_t c2 = 0; c2 < m.dims.C; ++c2) {
        const double dl = logits[c2] * inv_b;
        const double* hr = m.head.row(c2);
        double* ghr = res.grads.head.row(c2);
        for (size_t c = 0; c < m.dims.d; ++c) {
          dpool[c] += dl * hr[c];
          ghr[c] += dl * pooled[c];
        }
      }
      for (size_t t = 0; t < L; ++t) axpy(1.0 / double(L), dpool, dH[t]);
    }
    detail::body_backward(m, ids, cache, std::move(dH), res.grads);
  }
  if (!std::isfinite(res.loss))
    throw NumericError("loss_and_grads: non-finite loss");
  // Zero out frozen groups so callers can treat grads as authoritative.
  auto zero_mat = [](Matrix& mm) { std::fill(mm.data().begin(), mm.data().end(), 0.0); };
  if (freeze & kFreezeE) zero_mat(res.grads.E);
  if ((freeze & kFreezeO) && !m.tied) zero_mat(res.grads.O);
  if ((freeze & kFreezeO) && m.tied && (freeze & kFreezeE)) zero_mat(res.grads.E);
  if (freeze & kFreezeBody) {
    for (auto& b : res.grads.blocks) {
      zero_mat(b.Wm);
      zero_mat(b.W1);
      zero_mat(b.W2);
      std::fill(b.g1.begin(), b.g1.end(), 0.0);
      std::fill(b.g2.begin(), b.g2.end(), 0.0);
    }
  }
  if ((freeze & kFreezeHead) && m.has_head()) zero_mat(res.grads.head);
  return res;
}

inline void sgd_step(LanguageModel& m, const Grads& g, double alpha,
                     uint32_t freeze = kFreezeNone) {
  if (!(alpha > 0.0)) throw ConfigError("sgd_step: alpha must be > 0");
  auto step_mat = [alpha](Matrix& w, const Matrix& gw) {
    if (w.rows() != gw.rows() || w.cols() != gw.cols())
      throw Error("sgd_step: gradient shape mismatch");
    auto& wd = w.data();
    const auto& gd = gw.data();
    for (size_t i = 0; i < wd.size(); ++i) wd[i] -= alpha * gd[i];
  };
  const bool e_frozen = freeze & kFreezeE;
  const bool o_frozen = freeze & kFreezeO;
  if (m.tied) {
    // Shared storage updates once; frozen if either alias is frozen.
    if (!e_frozen && !o_frozen) step_mat(m.E, g.E);
  } else {
    if (!e_frozen) step_mat(m.E, g.E);
    if (!o_frozen) step_mat(m.O, g.O);
  }
  if (!(freeze & kFreezeBody)) {
    for (size_t l = 0; l < m.blocks.size(); ++l) {
      step_mat(m.blocks[l].Wm, g.blocks[l].Wm);
      step_mat(m.blocks[l].W1, g.blocks[l].W1);
      step_mat(m.blocks[l].W2, g.blocks[l].W2);
      for (size_t j = 0; j < m.blocks[l].g1.size(); ++j) {
        m.blocks[l].g1[j] -= alpha * g.blocks[l].g1[j];
        m.blocks[l].g2[j] -= alpha * g.blocks[l].g2[j];
      }
    }
  }
  if (!(freeze & kFreezeHead) && m.has_head()) step_mat(m.head, g.head);
}

inline constexpr uint16_t kCheckpointVersion = 1;

inline Bytes checkpoint_serialize(const LanguageModel& m) {
  ByteWriter w;
  w.magic("CTKM");
  w.u16(kCheckpointVersion);
  w.u32(m.dims.V);
  w.u32(m.dims.d);
  w.u32(m.dims.layers);
  w.u32(m.dims.h);
  w.u32(m.dims.C);
  w.u8(m.tied ? 1 : 0);
  w.f64_vec(m.E.data());
  if (!m.tied) w.f64_vec(m.O.data());
  for (const auto& b : m.blocks) {
    w.f64_vec(b.Wm.data());
    w.f64_vec(b.W1.data());
    w.f64_vec(b.W2.data());
    w.f64_vec(b.g1);
    w.f64_vec(b.g2);
  }
  if (m.dims.C > 0) w.f64_vec(m.head.data());
  w.crc_trailer();
  return w.bytes();
}

inline LanguageModel checkpoint_deserialize(const Bytes& bytes) {
  ByteReader r(bytes);
  r.verify_crc_trailer();
  r.expect_magic("CTKM");
  if (r.u16() != kCheckpointVersion)
    throw FormatError(FormatError::Kind::BadVersion,
                      "unsupported checkpoint version");
  LanguageModel m;
  m.dims.V = r.u32();
  m.dims.d = r.u32();
  m.dims.layers = r.u32();
  m.dims.h = r.u32();
  m.dims.C = r.u32();
  m.tied = r.u8() != 0;
  auto load_mat = [&r](size_t rows, size_t cols) {
    Matrix mm(rows, cols);
    Vector v = r.f64_vec();
    if (v.size() != rows * cols)
      throw FormatError(FormatError::Kind::Invariant, "tensor size mismatch");
    mm.data() = std::move(v);
    return mm;
  };
  m.E = load_mat(m.dims.V, m.dims.d);
  if (!m.tied) m.O = load_mat(m.dims.V, m.dims.d);
  m.blocks.resize(m.dims.layers);
  for (auto& b : m.blocks) {
    b.Wm = load_mat(m.dims.d, m.dims.d);
    b.W1 = load_mat(m.dims.d, m.dims.h);
    b.W2 = load_mat(m.dims.h, m.dims.d);
    b.g1 = r.f64_vec();
    b.g2 = r.f64_vec();
    if (b.g1.size() != m.dims.d || b.g2.size() != m.dims.d)
      throw FormatError(FormatError::Kind::Invariant, "norm scale size mismatch");
  }
  if (m.dims.C > 0) m.head = load_mat(m.dims.C, m.dims.d);
  return m;
}

inline void checkpoint_save(const LanguageModel& m, const std::string& path) {
  write_file(path, checkpoint_serialize(m));
}

inline LanguageModel checkpoint_load(const std::string& path) {
  return checkpoint_deserialize(read_file(path));
}

// CRC of the checkpoint payload. The serialized stream ends with its own
// CRC trailer, which makes the whole-stream CRC a constant, so hash the
// bytes before the trailer.
inline uint32_t model_hash(const LanguageModel& m) {
  Bytes b = checkpoint_serialize(m);
  b.resize(b.size() - 4);
  return crc32_of(b);
}

}  // namespace cyphertalk

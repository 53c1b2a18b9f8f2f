#pragma once

// Vertical and horizontal shaking of the model's representation layers,
// plus the full key-implantation loop (shake rounds interleaved with
// awareness + functional recovery).

#include <cstdint>
#include <string>
#include <vector>

#include "cyphertalk/errors.hpp"
#include "cyphertalk/keys.hpp"
#include "cyphertalk/model.hpp"
#include "cyphertalk/recovery.hpp"

namespace cyphertalk {

namespace detail {

inline void vs_apply_matrix(Matrix& W, const VsRound& round, bool inverse) {
  const size_t d = W.cols();
  switch (round.op) {
    case VsOp::Addv:
    case VsOp::DxFixp:
    case VsOp::Gaussian:
    case VsOp::Laplace: {
      const Vector& v = round.material[0];
      const double sign = inverse ? -1.0 : 1.0;
      for (size_t r = 0; r < W.rows(); ++r) {
        double* row = W.row(r);
        for (size_t c = 0; c < d; ++c) row[c] += sign * v[c];
      }
      break;
    }
    case VsOp::Inflate: {
      const Vector& diag = round.material[0];
      for (size_t r = 0; r < W.rows(); ++r) {
        double* row = W.row(r);
        for (size_t c = 0; c < d; ++c)
          row[c] = inverse ? row[c] / diag[c] : row[c] * diag[c];
      }
      break;
    }
    case VsOp::Tilt: {
      // T = I + delta v u^T, applied as row -> row T.
      const Vector& v = round.material[0];
      const Vector& u = round.material[1];
      const double delta = round.opts.delta;
      const double det = 1.0 + delta * dot(u, v);
      for (size_t r = 0; r < W.rows(); ++r) {
        double* row = W.row(r);
        double rv = 0.0;
        for (size_t c = 0; c < d; ++c) rv += row[c] * v[c];
        // Sherman-Morrison for the inverse direction.
        const double coeff = inverse ? -delta * rv / det : delta * rv;
        for (size_t c = 0; c < d; ++c) row[c] += coeff * u[c];
      }
      break;
    }
  }
}

}  // namespace detail

// Applies one vertical round to E and O (once when tied). skip_output
// leaves O untouched for task models whose output layer is never decoded.
inline void vs_shake(LanguageModel& m, const VsRound& round,
                     bool skip_output = false) {
  for (const auto& v : round.material)
    if (v.size() != m.dims.d)
      throw InputError("vs_shake: key material dimension != model embed dim");
  detail::vs_apply_matrix(m.E, round, false);
  if (!m.tied && !skip_output) detail::vs_apply_matrix(m.O, round, false);
}

// Exact inverse of vs_shake (additive subtract, diagonal divide,
// Sherman-Morrison for Tilt).
inline void vs_unshake(LanguageModel& m, const VsRound& round,
                       bool skip_output = false) {
  for (const auto& v : round.material)
    if (v.size() != m.dims.d)
      throw InputError("vs_unshake: key material dimension != model embed dim");
  detail::vs_apply_matrix(m.E, round, true);
  if (!m.tied && !skip_output) detail::vs_apply_matrix(m.O, round, true);
}

// Row convention: new row tab[i] = old row i, so the embedding for original
// token i lives at encoded id tab[i].
inline void hs_shake(LanguageModel& m, const HorizontalKey& hs) {
  if (hs.tab.size() != m.dims.V)
    throw InputError("hs_shake: permutation length != vocab size");
  auto permute_rows = [&hs](Matrix& W) {
    Matrix out(W.rows(), W.cols());
    for (size_t i = 0; i < W.rows(); ++i) {
      const double* src = W.row(i);
      double* dst = out.row(hs.tab[i]);
      std::copy(src, src + W.cols(), dst);
    }
    W = std::move(out);
  };
  permute_rows(m.E);
  if (!m.tied) permute_rows(m.O);
}

inline void hs_unshake(LanguageModel& m, const HorizontalKey& hs) {
  hs_shake(m, hs.inverse());
}

struct ImplantConfig {
  RecoverConfig recover;
  // Alg-style literal mode re-applies hs every round; the default applies
  // it once, which is identical for vs_n <= 1.
  bool hs_once = true;
  bool skip_output = false;
};

struct ImplantReport {
  std::vector<std::vector<double>> awareness_traces;   // per round
  std::vector<std::vector<double>> functional_traces;  // per round
};

// Full implantation loop: per vertical round, shake (vertical then
// horizontal), then awareness and functional recovery. With no vertical
// rounds the model is only horizontally shaken and no training runs.
inline ImplantReport implant(LanguageModel& m, const KeyPair& kp,
                             const AdaptDataset& adapt,
                             const ImplantConfig& cfg) {
  check_key_model(m, kp);
  ImplantReport report;
  if (kp.rounds.empty()) {
    if (!kp.hs.is_identity()) hs_shake(m, kp.hs);
    return report;
  }
  if (adapt.size() == 0)
    throw InputError("implant: vertical rounds require adaptation data");
  for (size_t i = 0; i < kp.rounds.size(); ++i) {
    try {
      vs_shake(m, kp.rounds[i], cfg.skip_output);
      if (i == 0 || !cfg.hs_once) hs_shake(m, kp.hs);
      report.awareness_traces.push_back(
          awareness_recover(m, adapt, kp, cfg.recover));
      report.functional_traces.push_back(
          functional_recover(m, adapt, kp, cfg.recover));
    } catch (const Error& e) {
      throw Error("implant round " + std::to_string(i) + ": " + e.what());
    }
  }
  return report;
}

}  // namespace cyphertalk

#pragma once

// Test-only parameter flattening used by the finite-difference oracle.
// Stays independent of the analytic backward path it is checking.

#include <algorithm>
#include <cmath>
#include <vector>

#include "cyphertalk/grad_check.hpp"
#include "cyphertalk/model.hpp"

namespace cyphertalk::testutil {

inline Vector pack_params(const LanguageModel& m) {
  Vector out;
  auto push_mat = [&out](const Matrix& mm) {
    out.insert(out.end(), mm.data().begin(), mm.data().end());
  };
  push_mat(m.E);
  if (!m.tied) push_mat(m.O);
  for (const auto& b : m.blocks) {
    push_mat(b.Wm);
    push_mat(b.W1);
    push_mat(b.W2);
    out.insert(out.end(), b.g1.begin(), b.g1.end());
    out.insert(out.end(), b.g2.begin(), b.g2.end());
  }
  if (m.has_head()) push_mat(m.head);
  return out;
}

inline void unpack_params(LanguageModel& m, const Vector& flat) {
  size_t pos = 0;
  auto pull_mat = [&](Matrix& mm) {
    std::copy(flat.begin() + pos, flat.begin() + pos + mm.size(),
              mm.data().begin());
    pos += mm.size();
  };
  pull_mat(m.E);
  if (!m.tied) pull_mat(m.O);
  for (auto& b : m.blocks) {
    pull_mat(b.Wm);
    pull_mat(b.W1);
    pull_mat(b.W2);
    std::copy(flat.begin() + pos, flat.begin() + pos + b.g1.size(), b.g1.begin());
    pos += b.g1.size();
    std::copy(flat.begin() + pos, flat.begin() + pos + b.g2.size(), b.g2.begin());
    pos += b.g2.size();
  }
  if (m.has_head()) pull_mat(m.head);
}

inline Vector pack_grads(const LanguageModel& m, const Grads& g) {
  Vector out;
  auto push_mat = [&out](const Matrix& mm) {
    out.insert(out.end(), mm.data().begin(), mm.data().end());
  };
  push_mat(g.E);
  if (!m.tied) push_mat(g.O);
  for (const auto& b : g.blocks) {
    push_mat(b.Wm);
    push_mat(b.W1);
    push_mat(b.W2);
    out.insert(out.end(), b.g1.begin(), b.g1.end());
    out.insert(out.end(), b.g2.begin(), b.g2.end());
  }
  if (m.has_head()) push_mat(g.head);
  return out;
}

// Max relative error between analytic and finite-difference gradients over
// every parameter coordinate.
inline double max_grad_rel_error(const LanguageModel& model, const Batch& batch,
                                 Mode mode, double h = 1e-5) {
  LanguageModel probe = model;
  const Vector x0 = pack_params(probe);
  auto f = [&probe, &batch, mode](const Vector& x) {
    unpack_params(probe, x);
    return loss_and_grads(probe, batch, mode).loss;
  };
  const Vector fd = finite_diff_grad(f, x0, h);
  unpack_params(probe, x0);
  const Grads analytic = loss_and_grads(probe, batch, mode).grads;
  const Vector an = pack_grads(probe, analytic);
  double worst = 0.0;
  for (size_t i = 0; i < an.size(); ++i) {
    const double denom = std::max({std::fabs(an[i]), std::fabs(fd[i]), 1e-6});
    worst = std::max(worst, std::fabs(an[i] - fd[i]) / denom);
  }
  return worst;
}

}  // namespace cyphertalk::testutil

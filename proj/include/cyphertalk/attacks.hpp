#pragma once

// Desk-scale security evaluation: nearest-neighbor embedding inversion and
// a linear-probe sensitive-attribute attack.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "cyphertalk/errors.hpp"
#include "cyphertalk/keys.hpp"
#include "cyphertalk/matrix.hpp"
#include "cyphertalk/rng.hpp"

namespace cyphertalk {

enum class AttackMetric { Cosine, L2 };

namespace detail {

inline size_t nearest_row(const Matrix& table, const double* q, size_t d,
                          AttackMetric metric) {
  size_t best = 0;
  double best_score = metric == AttackMetric::Cosine ? -2.0 : 1e300;
  double qn = 0.0;
  if (metric == AttackMetric::Cosine) {
    for (size_t c = 0; c < d; ++c) qn += q[c] * q[c];
    qn = std::sqrt(qn) + 1e-30;
  }
  for (size_t j = 0; j < table.rows(); ++j) {
    const double* tr = table.row(j);
    if (metric == AttackMetric::Cosine) {
      double num = 0.0, tn = 0.0;
      for (size_t c = 0; c < d; ++c) {
        num += q[c] * tr[c];
        tn += tr[c] * tr[c];
      }
      const double cosv = num / (qn * (std::sqrt(tn) + 1e-30));
      if (cosv > best_score) {
        best_score = cosv;
        best = j;
      }
    } else {
      double dist = 0.0;
      for (size_t c = 0; c < d; ++c) {
        const double diff = q[c] - tr[c];
        dist += diff * diff;
      }
      if (dist < best_score) {
        best_score = dist;
        best = j;
      }
    }
  }
  return best;
}

}  // namespace detail

// Row i of observed_E is matched against public_E; success when the nearest
// public row is row i. The evaluator knows the correspondence; the attacker
// does not.
inline double inversion_attack(const Matrix& public_E, const Matrix& observed_E,
                               AttackMetric metric) {
  if (public_E.rows() != observed_E.rows() ||
      public_E.cols() != observed_E.cols())
    throw InputError("inversion_attack: dimension mismatch");
  const size_t d = public_E.cols();
  size_t hits = 0;
  for (size_t i = 0; i < observed_E.rows(); ++i) {
    if (detail::nearest_row(public_E, observed_E.row(i), d, metric) == i)
      ++hits;
  }
  return double(hits) / double(observed_E.rows());
}

// Combined setting: observed_E came from a horizontally shaken model, so
// the attacker's nearest-neighbor match doubles as their guess of the
// original id behind encoded slot tab[i].
inline double inversion_attack_combined(const Matrix& public_E,
                                        const Matrix& observed_E,
                                        const HorizontalKey& hs,
                                        AttackMetric metric) {
  if (hs.tab.size() != observed_E.rows())
    throw InputError("inversion_attack_combined: permutation length mismatch");
  const size_t d = public_E.cols();
  size_t hits = 0;
  for (size_t i = 0; i < observed_E.rows(); ++i) {
    if (detail::nearest_row(public_E, observed_E.row(hs.tab[i]), d, metric) == i)
      ++hits;
  }
  return double(hits) / double(observed_E.rows());
}

struct ProbeConfig {
  uint32_t epochs = 100;
  double alpha = 0.5;
  uint64_t seed = 0;
};

// Multinomial logistic-regression probe: trained on (train_x, train_y),
// accuracy reported on (test_x, test_y). Lower accuracy = safer embeddings.
inline double attribute_attack(const std::vector<Vector>& train_x,
                               const std::vector<uint32_t>& train_y,
                               const std::vector<Vector>& test_x,
                               const std::vector<uint32_t>& test_y,
                               uint32_t num_classes,
                               const ProbeConfig& cfg = {}) {
  if (train_x.empty() || train_x.size() != train_y.size() ||
      test_x.size() != test_y.size())
    throw InputError("attribute_attack: bad split sizes");
  std::set<uint32_t> classes(train_y.begin(), train_y.end());
  if (classes.size() < 2)
    throw ConfigError("attribute_attack: train split has a single class");
  const size_t d = train_x[0].size();
  // Standardize with train-split statistics so the probe is insensitive to
  // the embedding scale.
  Vector mean(d, 0.0), sd(d, 0.0);
  for (const auto& x : train_x)
    for (size_t j = 0; j < d; ++j) mean[j] += x[j] / double(train_x.size());
  for (const auto& x : train_x)
    for (size_t j = 0; j < d; ++j) {
      const double c = x[j] - mean[j];
      sd[j] += c * c / double(train_x.size());
    }
  for (size_t j = 0; j < d; ++j) sd[j] = std::sqrt(sd[j]) + 1e-12;
  auto standardize = [&](const std::vector<Vector>& xs) {
    std::vector<Vector> out = xs;
    for (auto& x : out)
      for (size_t j = 0; j < d; ++j) x[j] = (x[j] - mean[j]) / sd[j];
    return out;
  };
  const std::vector<Vector> tr = standardize(train_x);
  const std::vector<Vector> te = standardize(test_x);
  Matrix W(num_classes, d);
  Vector bias(num_classes, 0.0);
  Rng rng(cfg.seed);
  for (auto& v : W.data()) v = rng.gaussian(0.01);
  const double inv_n = 1.0 / double(train_x.size());
  for (uint32_t e = 0; e < cfg.epochs; ++e) {
    Matrix gW(num_classes, d);
    Vector gb(num_classes, 0.0);
    for (size_t i = 0; i < train_x.size(); ++i) {
      Vector logits = matvec(W, tr[i]);
      for (size_t c = 0; c < num_classes; ++c) logits[c] += bias[c];
      double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (auto& l : logits) {
        l = std::exp(l - mx);
        sum += l;
      }
      for (size_t c = 0; c < num_classes; ++c) {
        double dl = (logits[c] / sum - (c == train_y[i] ? 1.0 : 0.0)) * inv_n;
        gb[c] += dl;
        double* gr = gW.row(c);
        for (size_t j = 0; j < d; ++j) gr[j] += dl * tr[i][j];
      }
    }
    for (size_t c = 0; c < num_classes; ++c) {
      double* wr = W.row(c);
      const double* gr = gW.row(c);
      for (size_t j = 0; j < d; ++j) wr[j] -= cfg.alpha * gr[j];
      bias[c] -= cfg.alpha * gb[c];
    }
  }
  size_t hits = 0;
  for (size_t i = 0; i < test_x.size(); ++i) {
    Vector logits = matvec(W, te[i]);
    for (size_t c = 0; c < num_classes; ++c) logits[c] += bias[c];
    size_t best = 0;
    for (size_t c = 1; c < num_classes; ++c)
      if (logits[c] > logits[best]) best = c;
    if (best == test_y[i]) ++hits;
  }
  return test_x.empty() ? 0.0 : double(hits) / double(test_x.size());
}

struct AttackRecord {
  std::string attack;
  std::string setting;
  double rate = 0.0;
};

// Line-delimited report: "attack=<name> setting=<name> rate=<value>".
inline void attack_report_save(const std::vector<AttackRecord>& recs,
                               const std::string& path) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw Error("cannot open attack report: " + path);
  for (const auto& r : recs)
    f << "attack=" << r.attack << " setting=" << r.setting << " rate=" << r.rate
      << '\n';
}

}  // namespace cyphertalk

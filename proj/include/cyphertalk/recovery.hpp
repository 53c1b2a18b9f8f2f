#pragma once

// Adaptation phase after shaking: awareness recovery (self-reconstruction,
// Y = X) teaches the model its transformed representation space, then
// functional recovery (Y = labels) restores task utility. Both train on
// hs-encoded data.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "cyphertalk/dataset.hpp"
#include "cyphertalk/keys.hpp"
#include "cyphertalk/model.hpp"
#include "cyphertalk/privacy.hpp"

namespace cyphertalk {

struct RecoverConfig {
  uint32_t awareness_epochs = 3;
  uint32_t functional_epochs = 3;
  double alpha = 0.05;
  uint32_t batch_size = 32;
  uint32_t freeze = kFreezeNone;
  bool label_perm = true;
  double holdout_fraction = 0.1;
  // Stop awareness early once an epoch improves the loss by less than this
  // relative amount.
  double plateau_rel = 1e-3;
};

struct MetricRecord {
  uint32_t epoch = 0;
  std::string phase;
  double loss = 0.0;
  double accuracy = 0.0;
};

inline void metrics_save(const std::vector<MetricRecord>& recs,
                         const std::string& path) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw Error("cannot open metrics log: " + path);
  for (const auto& r : recs)
    f << r.epoch << ' ' << r.phase << ' ' << r.loss << ' ' << r.accuracy
      << '\n';
}

// Per-position self-reconstruction through the shaken E and O. Returns the
// per-epoch mean training loss.
inline std::vector<double> awareness_recover(LanguageModel& m,
                                             const AdaptDataset& raw,
                                             const KeyPair& kp,
                                             const RecoverConfig& cfg) {
  check_key_model(m, kp);
  std::vector<double> trace;
  if (cfg.awareness_epochs == 0) return trace;
  std::vector<std::vector<uint32_t>> enc;
  enc.reserve(raw.size());
  for (const auto& x : raw.X) enc.push_back(encode_ids(x, kp.hs));
  for (uint32_t e = 0; e < cfg.awareness_epochs; ++e) {
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t i = 0; i < enc.size(); i += cfg.batch_size) {
      const size_t end = std::min(enc.size(), i + cfg.batch_size);
      Batch b;
      b.X.assign(enc.begin() + i, enc.begin() + end);
      LossResult res = loss_and_grads(m, b, Mode::Lm, cfg.freeze);
      sgd_step(m, res.grads, cfg.alpha, cfg.freeze);
      epoch_loss += res.loss;
      ++batches;
    }
    trace.push_back(epoch_loss / double(batches));
    if (trace.size() >= 2) {
      const double prev = trace[trace.size() - 2];
      if (prev > 0.0 && (prev - trace.back()) / prev < cfg.plateau_rel) break;
    }
  }
  return trace;
}

// Supervised training on encoded (X, Y). Returns per-epoch accuracy on a
// held-out tail split of the data.
inline std::vector<double> functional_recover(LanguageModel& m,
                                              const AdaptDataset& raw,
                                              const KeyPair& kp,
                                              const RecoverConfig& cfg) {
  check_key_model(m, kp);
  if (!raw.has_labels())
    throw InputError("functional_recover: dataset has no task labels");
  std::vector<double> trace;
  if (cfg.functional_epochs == 0) return trace;
  const LabelCodec labels(kp, m.dims.C, cfg.label_perm);
  AdaptDataset enc;
  enc.X.reserve(raw.size());
  for (const auto& x : raw.X) enc.X.push_back(encode_ids(x, kp.hs));
  for (uint32_t y : raw.labels) enc.labels.push_back(labels.encode(y));
  const size_t holdout =
      std::min(enc.size() - 1,
               static_cast<size_t>(double(enc.size()) * cfg.holdout_fraction));
  const size_t train_n = enc.size() - holdout;
  for (uint32_t e = 0; e < cfg.functional_epochs; ++e) {
    for (size_t i = 0; i < train_n; i += cfg.batch_size) {
      const size_t end = std::min(train_n, i + cfg.batch_size);
      tune_encoded_batch(m, to_batch(enc, i, end, Mode::Task), cfg.alpha,
                         cfg.freeze);
    }
    size_t hits = 0;
    for (size_t i = train_n; i < enc.size(); ++i) {
      const auto logits = forward(m, enc.X[i], Mode::Task);
      size_t best = 0;
      for (size_t c = 1; c < logits[0].size(); ++c)
        if (logits[0][c] > logits[0][best]) best = c;
      if (best == enc.labels[i]) ++hits;
    }
    trace.push_back(holdout ? double(hits) / double(holdout) : 0.0);
  }
  return trace;
}

}  // namespace cyphertalk

#pragma once

// Client-side codec and the private tuning / private inference flows.
// Raw token ids never cross the encode boundary: everything a server sees
// is hs-mapped, and (optionally) class labels are permuted too.

#include <cstdint>
#include <string>
#include <vector>

#include "cyphertalk/dataset.hpp"
#include "cyphertalk/errors.hpp"
#include "cyphertalk/keys.hpp"
#include "cyphertalk/model.hpp"

namespace cyphertalk {

inline std::vector<uint32_t> encode_ids(const std::vector<uint32_t>& ids,
                                        const HorizontalKey& hs) {
  std::vector<uint32_t> out(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= hs.tab.size())
      throw InputError("encode_ids: id out of range at position " +
                       std::to_string(i));
    out[i] = hs.tab[ids[i]];
  }
  return out;
}

inline std::vector<uint32_t> decode_ids(const std::vector<uint32_t>& ids,
                                        const HorizontalKey& hs) {
  const HorizontalKey inv = hs.inverse();
  std::vector<uint32_t> out(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= inv.tab.size())
      throw InputError("decode_ids: id out of range at position " +
                       std::to_string(i));
    out[i] = inv.tab[ids[i]];
  }
  return out;
}

// Client-held C-ary permutation so class labels on the wire are shaken as
// well. Derived from the key seed, so it travels with the KeyPair without
// extending the key file format.
class LabelCodec {
 public:
  LabelCodec() = default;
  LabelCodec(const KeyPair& kp, uint32_t num_classes, bool enabled = true) {
    if (!enabled || num_classes == 0) return;
    Rng rng = Rng(kp.seed).stream("label-perm");
    perm_ = generate_horizontal_key(num_classes, rng);
  }

  bool enabled() const { return !perm_.tab.empty(); }

  uint32_t encode(uint32_t label) const {
    if (!enabled()) return label;
    if (label >= perm_.tab.size()) throw InputError("label out of range");
    return perm_.tab[label];
  }

  uint32_t decode(uint32_t label) const {
    if (!enabled()) return label;
    if (label >= perm_.tab.size()) throw InputError("label out of range");
    return perm_.inverse().tab[label];
  }

 private:
  HorizontalKey perm_;
};

// Regex-free sensitive-attribute scrubber hook: raw text passes through the
// hook before tokenization. The default redactor blanks digit runs; callers
// can install their own.
using ScrubHook = std::string (*)(const std::string&);

inline std::string default_scrub(const std::string& text) {
  std::string out = text;
  for (auto& c : out)
    if (c >= '0' && c <= '9') c = '#';
  return out;
}

struct TuneConfig {
  double alpha = 0.05;
  uint32_t epochs = 3;
  uint32_t batch_size = 32;
  bool label_perm = true;
  // Representation layers stay frozen during private tuning; the key lives
  // in them.
  uint32_t freeze = kFreezeE | kFreezeO;
};

inline void check_key_model(const LanguageModel& m, const KeyPair& kp) {
  if (kp.vocab_size != m.dims.V || kp.embed_dim != m.dims.d)
    throw InputError("key/model dimension mismatch");
}

// One SGD pass over already-encoded data; shared by local private_tune and
// the server's TUNE_BATCH path so the two stay bit-identical.
inline void tune_encoded_batch(LanguageModel& m, const Batch& batch,
                               double alpha, uint32_t freeze) {
  LossResult res = loss_and_grads(m, batch, Mode::Task, freeze);
  sgd_step(m, res.grads, alpha, freeze);
}

inline void private_tune(LanguageModel& m, const AdaptDataset& raw,
                         const KeyPair& kp, const TuneConfig& cfg) {
  check_key_model(m, kp);
  if (!raw.has_labels())
    throw InputError("private_tune: dataset has no task labels");
  if (cfg.epochs == 0) return;
  const LabelCodec labels(kp, m.dims.C, cfg.label_perm);
  // Encode once, client side; only encoded batches reach the update path.
  AdaptDataset enc;
  enc.X.reserve(raw.size());
  for (const auto& x : raw.X) enc.X.push_back(encode_ids(x, kp.hs));
  enc.labels.reserve(raw.size());
  for (uint32_t y : raw.labels) enc.labels.push_back(labels.encode(y));
  for (uint32_t e = 0; e < cfg.epochs; ++e) {
    for (size_t i = 0; i < enc.size(); i += cfg.batch_size) {
      const size_t end = std::min(enc.size(), i + cfg.batch_size);
      tune_encoded_batch(m, to_batch(enc, i, end, Mode::Task), cfg.alpha,
                         cfg.freeze);
    }
  }
}

struct InferResult {
  std::vector<uint32_t> token_ids;  // lm mode, decoded
  uint32_t label = 0;               // task mode, decoded
};

inline InferResult private_infer(const LanguageModel& m,
                                 const std::vector<uint32_t>& ids,
                                 const KeyPair& kp, Mode mode,
                                 bool label_perm = true) {
  check_key_model(m, kp);
  const auto enc = encode_ids(ids, kp.hs);
  const auto logits = forward(m, enc, mode);
  InferResult res;
  if (mode == Mode::Lm) {
    std::vector<uint32_t> pred(logits.size());
    for (size_t t = 0; t < logits.size(); ++t) {
      size_t best = 0;
      for (size_t v = 1; v < logits[t].size(); ++v)
        if (logits[t][v] > logits[t][best]) best = v;
      pred[t] = static_cast<uint32_t>(best);
    }
    res.token_ids = decode_ids(pred, kp.hs);
  } else {
    size_t best = 0;
    for (size_t c = 1; c < logits[0].size(); ++c)
      if (logits[0][c] > logits[0][best]) best = c;
    const LabelCodec labels(kp, m.dims.C, label_perm);
    res.label = labels.decode(static_cast<uint32_t>(best));
  }
  return res;
}

// Held-out accuracy of the private path (encode -> forward -> decode).
inline double private_eval_accuracy(const LanguageModel& m,
                                    const AdaptDataset& raw, const KeyPair& kp,
                                    bool label_perm = true) {
  size_t hits = 0;
  for (size_t i = 0; i < raw.size(); ++i) {
    if (private_infer(m, raw.X[i], kp, Mode::Task, label_perm).label ==
        raw.labels[i])
      ++hits;
  }
  return raw.size() ? double(hits) / double(raw.size()) : 0.0;
}

// Plain (non-private) accuracy, for baselines.
inline double eval_accuracy(const LanguageModel& m, const AdaptDataset& ds) {
  size_t hits = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto logits = forward(m, ds.X[i], Mode::Task);
    size_t best = 0;
    for (size_t c = 1; c < logits[0].size(); ++c)
      if (logits[0][c] > logits[0][best]) best = c;
    if (best == ds.labels[i]) ++hits;
  }
  return ds.size() ? double(hits) / double(ds.size()) : 0.0;
}

}  // namespace cyphertalk

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cyphertalk/recovery.hpp"
#include "cyphertalk/shaking.hpp"

using namespace cyphertalk;

static KeyPair identity_key(uint32_t V, uint32_t d) {
  KeyPair kp;
  kp.vocab_size = V;
  kp.embed_dim = d;
  kp.hs.tab.resize(V);
  for (uint32_t i = 0; i < V; ++i) kp.hs.tab[i] = i;
  return kp;
}

static AdaptDataset small_task(uint32_t V, size_t n, uint64_t seed) {
  SyntheticTaskConfig cfg;
  cfg.V = V;
  cfg.C = 2;
  cfg.signature_tokens = 8;
  cfg.seq_len = 8;
  Rng rng(seed);
  return make_synthetic_task(cfg, n, rng);
}

TEST_CASE("zero epochs leave the model unchanged with an empty trace") {
  ModelDims dims;
  dims.V = 64;
  dims.d = 16;
  dims.layers = 1;
  dims.h = 24;
  dims.C = 2;
  LanguageModel m = init_model(dims, false, 1);
  const Bytes before = checkpoint_serialize(m);
  KeyPair kp = identity_key(64, 16);
  AdaptDataset ds = small_task(64, 32, 2);
  RecoverConfig cfg;
  cfg.awareness_epochs = 0;
  cfg.functional_epochs = 0;
  CHECK(awareness_recover(m, ds, kp, cfg).empty());
  CHECK(functional_recover(m, ds, kp, cfg).empty());
  CHECK(checkpoint_serialize(m) == before);
}

TEST_CASE("identity key awareness reaches 99% self-reconstruction") {
  ModelDims dims;
  dims.V = 64;
  dims.d = 16;
  dims.layers = 1;
  dims.h = 32;
  dims.C = 2;
  LanguageModel m = init_model(dims, false, 3);
  KeyPair kp = identity_key(64, 16);
  AdaptDataset ds = small_task(64, 256, 4);
  RecoverConfig cfg;
  cfg.awareness_epochs = 15;
  cfg.alpha = 0.3;
  cfg.plateau_rel = 0.0;  // run all epochs
  awareness_recover(m, ds, kp, cfg);
  size_t hits = 0, total = 0;
  for (const auto& x : ds.X) {
    const auto logits = forward(m, x, Mode::Lm);
    for (size_t t = 0; t < x.size(); ++t) {
      size_t best = 0;
      for (size_t v = 1; v < logits[t].size(); ++v)
        if (logits[t][v] > logits[t][best]) best = v;
      if (best == x[t]) ++hits;
      ++total;
    }
  }
  CHECK(double(hits) / double(total) >= 0.99);
}

TEST_CASE("awareness loss decreases on a shaken model") {
  ModelDims dims;
  dims.V = 64;
  dims.d = 16;
  dims.layers = 1;
  dims.h = 32;
  dims.C = 2;
  LanguageModel m = init_model(dims, false, 5);
  Rng rng(6);
  VsOpts opts;
  opts.delta = 1.0;
  VsRound r = generate_vs_round(VsOp::Addv, opts, 16, rng);
  vs_shake(m, r);
  KeyPair kp = identity_key(64, 16);
  AdaptDataset ds = small_task(64, 256, 7);
  RecoverConfig cfg;
  cfg.awareness_epochs = 3;
  cfg.alpha = 0.2;
  cfg.plateau_rel = 0.0;
  auto trace = awareness_recover(m, ds, kp, cfg);
  REQUIRE(trace.size() >= 2);
  CHECK(trace.back() < trace.front());
  for (double l : trace) CHECK(std::isfinite(l));
}

TEST_CASE("recovery never mutates frozen layers") {
  ModelDims dims;
  dims.V = 64;
  dims.d = 16;
  dims.layers = 1;
  dims.h = 32;
  dims.C = 2;
  LanguageModel m = init_model(dims, false, 8);
  const Matrix e_before = m.E;
  const Matrix o_before = m.O;
  KeyPair kp = identity_key(64, 16);
  AdaptDataset ds = small_task(64, 64, 9);
  RecoverConfig cfg;
  cfg.awareness_epochs = 1;
  cfg.functional_epochs = 1;
  cfg.freeze = kFreezeE | kFreezeO;
  awareness_recover(m, ds, kp, cfg);
  functional_recover(m, ds, kp, cfg);
  CHECK(m.E == e_before);
  CHECK(m.O == o_before);
}

TEST_CASE("identity key recovery equals ordinary fine-tuning") {
  ModelDims dims;
  dims.V = 64;
  dims.d = 16;
  dims.layers = 1;
  dims.h = 32;
  dims.C = 2;
  AdaptDataset ds = small_task(64, 128, 10);
  RecoverConfig cfg;
  cfg.awareness_epochs = 0;
  cfg.functional_epochs = 2;
  cfg.label_perm = false;
  cfg.holdout_fraction = 0.0;

  LanguageModel recovered = init_model(dims, false, 11);
  KeyPair kp = identity_key(64, 16);
  functional_recover(recovered, ds, kp, cfg);

  LanguageModel plain = init_model(dims, false, 11);
  for (uint32_t e = 0; e < 2; ++e)
    for (size_t i = 0; i < ds.size(); i += cfg.batch_size) {
      Batch b = to_batch(ds, i, std::min(ds.size(), i + cfg.batch_size),
                         Mode::Task);
      auto res = loss_and_grads(plain, b, Mode::Task);
      sgd_step(plain, res.grads, cfg.alpha);
    }
  CHECK(checkpoint_serialize(recovered) == checkpoint_serialize(plain));
}

TEST_CASE("functional recovery requires labels") {
  ModelDims dims;
  dims.V = 64;
  dims.d = 16;
  dims.layers = 1;
  dims.h = 32;
  dims.C = 2;
  LanguageModel m = init_model(dims, false, 12);
  KeyPair kp = identity_key(64, 16);
  AdaptDataset lm_only;
  lm_only.X = {{1, 2, 3}};
  CHECK_THROWS_AS(functional_recover(m, lm_only, kp, {}), InputError);
}

TEST_CASE("metrics log format") {
  const std::string path = "/tmp/ct_metrics_test.log";
  std::remove(path.c_str());
  metrics_save({{1, "awareness", 0.5, 0.0}, {2, "functional", 0.25, 0.9}}, path);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "1 awareness 0.5 0");
  std::getline(f, line);
  CHECK(line == "2 functional 0.25 0.9");
  std::remove(path.c_str());
}

#pragma once

// Desk-scale experiment harness: builds the synthetic task, trains the
// baseline, runs shake/recover/tune/attack experiments. Shared by the
// acceptance suite and the CLI bench command.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cyphertalk/attacks.hpp"
#include "cyphertalk/dataset.hpp"
#include "cyphertalk/model.hpp"
#include "cyphertalk/privacy.hpp"
#include "cyphertalk/recovery.hpp"
#include "cyphertalk/shaking.hpp"

namespace cyphertalk::experiments {

// Recovery uses a gentler step than baseline training so the 3-epoch vs
// 10-epoch comparison is meaningful rather than instantly saturated.
inline constexpr double kRecoverAlpha = 0.05;

struct BenchProfile {
  ModelDims dims{256, 32, 1, 64, 4};
  size_t train_n = 5000;
  size_t test_n = 1000;
  uint32_t base_epochs = 4;
  double alpha = 0.2;
  uint32_t batch_size = 32;
  uint64_t data_seed = 1001;
  uint64_t model_seed = 2002;
  uint64_t key_seed = 3003;
};

struct TaskData {
  AdaptDataset train;
  AdaptDataset test;
};

inline TaskData make_task(const BenchProfile& p) {
  SyntheticTaskConfig cfg;
  cfg.V = p.dims.V;
  cfg.C = p.dims.C;
  Rng train_rng = Rng(p.data_seed).stream("train");
  Rng test_rng = Rng(p.data_seed).stream("test");
  return {make_synthetic_task(cfg, p.train_n, train_rng),
          make_synthetic_task(cfg, p.test_n, test_rng)};
}

inline void plain_train(LanguageModel& m, const AdaptDataset& ds,
                        uint32_t epochs, double alpha, uint32_t batch_size) {
  for (uint32_t e = 0; e < epochs; ++e)
    for (size_t i = 0; i < ds.size(); i += batch_size) {
      Batch b = to_batch(ds, i, std::min(ds.size(), i + batch_size), Mode::Task);
      auto res = loss_and_grads(m, b, Mode::Task);
      sgd_step(m, res.grads, alpha);
    }
}

// The "original model": task-trained on the clean split.
inline LanguageModel make_base_model(const BenchProfile& p,
                                     const TaskData& data) {
  LanguageModel m = init_model(p.dims, false, p.model_seed);
  plain_train(m, data.train, p.base_epochs, p.alpha, p.batch_size);
  return m;
}

// Per-operator hyperparameters used by the recovery benchmark.
inline std::map<VsOp, VsOpts> bench_operator_opts() {
  std::map<VsOp, VsOpts> opts;
  VsOpts addv;
  addv.delta = 1.0;
  opts[VsOp::Addv] = addv;
  VsOpts inflate;
  inflate.sigma = 0.1;
  opts[VsOp::Inflate] = inflate;
  VsOpts tilt;
  tilt.sigma = 0.1;
  opts[VsOp::Tilt] = tilt;
  VsOpts dxfixp;
  dxfixp.k = 2.0;
  dxfixp.theta = 1.0;
  opts[VsOp::DxFixp] = dxfixp;
  VsOpts gauss;
  gauss.epsilon = 0.1;
  opts[VsOp::Gaussian] = gauss;
  VsOpts lap;
  lap.epsilon = 0.1;
  opts[VsOp::Laplace] = lap;
  return opts;
}

inline KeyPair single_op_key(const BenchProfile& p, VsOp op) {
  KeyGenConfig cfg;
  cfg.vs_n = 1;
  cfg.allowed_ops = {op};
  cfg.opts = bench_operator_opts();
  return generate_keypair(cfg, p.dims.V, p.dims.d, p.key_seed);
}

// Default full key: three vertical rounds drawn from all six operators at
// stronger settings than the per-operator recovery matrix, so the implanted
// embedding is far from the public one while still recoverable.
inline KeyPair default_key(const BenchProfile& p) {
  KeyGenConfig cfg;
  cfg.vs_n = 3;
  cfg.allowed_ops = {VsOp::Addv,   VsOp::Inflate,  VsOp::Tilt,
                     VsOp::DxFixp, VsOp::Gaussian, VsOp::Laplace};
  VsOpts strong;
  strong.delta = 1.0;
  strong.sigma = 0.5;
  strong.epsilon = 1.0;
  for (VsOp op : cfg.allowed_ops) cfg.opts[op] = strong;
  return generate_keypair(cfg, p.dims.V, p.dims.d, p.key_seed);
}

struct RecoveryResult {
  std::string op;
  double baseline_acc = 0.0;
  double recovered_acc_3ep = 0.0;
  double recovered_acc_10ep = 0.0;
};

// Shake the base model with one operator, recover, and measure private
// test accuracy after 3 and after 10 functional epochs.
inline RecoveryResult run_operator_recovery(const BenchProfile& p,
                                            const TaskData& data,
                                            const LanguageModel& base,
                                            double baseline_acc, VsOp op) {
  RecoveryResult res;
  res.op = vs_op_name(op);
  res.baseline_acc = baseline_acc;
  const KeyPair kp = single_op_key(p, op);

  ImplantConfig cfg3;
  cfg3.recover.awareness_epochs = 3;
  cfg3.recover.functional_epochs = 3;
  cfg3.recover.alpha = kRecoverAlpha;
  cfg3.recover.batch_size = p.batch_size;
  cfg3.recover.plateau_rel = 0.0;
  LanguageModel m3 = base;
  implant(m3, kp, data.train, cfg3);
  res.recovered_acc_3ep = private_eval_accuracy(m3, data.test, kp);

  ImplantConfig cfg10 = cfg3;
  cfg10.recover.functional_epochs = 10;
  LanguageModel m10 = base;
  implant(m10, kp, data.train, cfg10);
  res.recovered_acc_10ep = private_eval_accuracy(m10, data.test, kp);
  return res;
}

struct TuneParityResult {
  double private_acc = 0.0;
  double plain_acc = 0.0;
  bool representation_frozen = false;
};

// 3-epoch private tuning of the implanted model vs non-private fine-tuning
// of the unshaken model under the identical schedule.
inline TuneParityResult run_tune_parity(const BenchProfile& p,
                                        const TaskData& data,
                                        const LanguageModel& base,
                                        const KeyPair& kp,
                                        const LanguageModel& implanted) {
  TuneParityResult res;
  TuneConfig cfg;
  cfg.alpha = kRecoverAlpha;  // identical schedule on both sides
  cfg.epochs = 3;
  cfg.batch_size = p.batch_size;

  LanguageModel priv = implanted;
  const Matrix e_before = priv.E;
  const Matrix o_before = priv.O;
  private_tune(priv, data.train, kp, cfg);
  res.representation_frozen = priv.E == e_before && priv.O == o_before;
  res.private_acc = private_eval_accuracy(priv, data.test, kp);

  LanguageModel plain = base;
  plain_train(plain, data.train, cfg.epochs, cfg.alpha, cfg.batch_size);
  res.plain_acc = eval_accuracy(plain, data.test);
  return res;
}

struct InversionResult {
  double unshaken_rate = 0.0;
  double implanted_rate = 0.0;   // combined setting: recover original ids
  double content_only_rate = 0.0;  // attacker ignores the id mapping
};

inline InversionResult run_inversion(const LanguageModel& base,
                                     const LanguageModel& implanted,
                                     const KeyPair& kp) {
  InversionResult res;
  res.unshaken_rate = inversion_attack(base.E, base.E, AttackMetric::Cosine);
  res.implanted_rate =
      inversion_attack_combined(base.E, implanted.E, kp.hs, AttackMetric::Cosine);
  // Content-only variant: undo the permutation first, then match rows.
  Matrix unperm(implanted.E.rows(), implanted.E.cols());
  for (size_t i = 0; i < unperm.rows(); ++i) {
    const double* src = implanted.E.row(kp.hs.tab[i]);
    std::copy(src, src + unperm.cols(), unperm.row(i));
  }
  res.content_only_rate = inversion_attack(base.E, unperm, AttackMetric::Cosine);
  return res;
}

struct AttributeProbeResult {
  double plain_acc = 0.0;
  double private_acc = 0.0;
};

namespace detail {

inline Vector pooled_embedding(const Matrix& E, const std::vector<uint32_t>& ids) {
  Vector v(E.cols(), 0.0);
  for (uint32_t id : ids)
    for (size_t c = 0; c < E.cols(); ++c) v[c] += E(id, c) / double(ids.size());
  return v;
}

}  // namespace detail

// The task label doubles as the planted sensitive attribute. The attacker
// trains a probe on public-model embeddings of a labeled surrogate corpus;
// in the private setting it is evaluated on embeddings the implanted model
// produces for encoded victim inputs (the attacker holds no key).
inline AttributeProbeResult run_attribute_probe(const TaskData& data,
                                                const LanguageModel& base,
                                                const LanguageModel& implanted,
                                                const KeyPair& kp) {
  AttributeProbeResult res;
  std::vector<Vector> surrogate_x, victim_plain_x, victim_priv_x;
  std::vector<uint32_t> surrogate_y, victim_y;
  for (size_t i = 0; i < data.train.size(); ++i) {
    surrogate_x.push_back(detail::pooled_embedding(base.E, data.train.X[i]));
    surrogate_y.push_back(data.train.labels[i]);
  }
  for (size_t i = 0; i < data.test.size(); ++i) {
    victim_plain_x.push_back(detail::pooled_embedding(base.E, data.test.X[i]));
    victim_priv_x.push_back(detail::pooled_embedding(
        implanted.E, encode_ids(data.test.X[i], kp.hs)));
    victim_y.push_back(data.test.labels[i]);
  }
  const uint32_t C = static_cast<uint32_t>(base.head.rows());
  res.plain_acc =
      attribute_attack(surrogate_x, surrogate_y, victim_plain_x, victim_y, C);
  res.private_acc =
      attribute_attack(surrogate_x, surrogate_y, victim_priv_x, victim_y, C);
  return res;
}

}  // namespace cyphertalk::experiments

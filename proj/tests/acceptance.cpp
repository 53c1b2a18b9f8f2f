// Acceptance suite: one printed pass/fail line per criterion. Exits nonzero
// if any criterion fails. Tolerances are pinned here, not configurable.

#include <cstdio>
#include <exception>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cyphertalk/experiments.hpp"
#include "cyphertalk/netservice.hpp"
#include "model_test_util.hpp"

using namespace cyphertalk;
namespace ex = cyphertalk::experiments;

namespace {

int g_failures = 0;

void run_criterion(const char* id, const char* name,
                   const std::function<std::pair<bool, std::string>()>& body) {
  bool ok = false;
  std::string detail;
  try {
    auto res = body();
    ok = res.first;
    detail = res.second;
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  std::printf("%s %s: %s%s%s\n", id, name, ok ? "PASS" : "FAIL",
              detail.empty() ? "" : " | ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

uint32_t payload_crc(const Bytes& b) {
  Bytes body(b.begin(), b.end() - 4);
  return crc32_of(body);
}

// ---- AC-1: horizontal equivalence, bit-exact --------------------------------

std::pair<bool, std::string> ac1() {
  ModelDims dims;
  dims.V = 256;
  dims.d = 32;
  dims.layers = 1;
  dims.h = 64;
  dims.C = 4;
  LanguageModel m = init_model(dims, false, 11);
  KeyGenConfig kcfg;  // vs_n = 0: horizontal only
  KeyPair kp = generate_keypair(kcfg, 256, 32, 12);
  LanguageModel shaken = m;
  AdaptDataset empty;
  implant(shaken, kp, empty, {});

  Rng rng(13);
  size_t mismatches = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<uint32_t> ids;
    const size_t len = 1 + rng.below(16);
    for (size_t t = 0; t < len; ++t)
      ids.push_back(static_cast<uint32_t>(rng.below(256)));
    const auto enc = encode_ids(ids, kp.hs);
    const auto lm = forward(m, ids, Mode::Lm);
    const auto lm_s = forward(shaken, enc, Mode::Lm);
    for (size_t t = 0; t < len; ++t)
      for (uint32_t v = 0; v < 256; ++v)
        if (lm_s[t][kp.hs.tab[v]] != lm[t][v]) ++mismatches;
    const auto tk = forward(m, ids, Mode::Task);
    const auto tk_s = forward(shaken, enc, Mode::Task);
    if (tk_s[0] != tk[0]) ++mismatches;
  }
  return {mismatches == 0,
          "1000 inputs, " + std::to_string(mismatches) + " logit mismatches"};
}

// ---- AC-2: codec and permutation roundtrips, exact --------------------------

std::pair<bool, std::string> ac2() {
  Rng rng(21);
  auto hs = generate_horizontal_key(256, rng);
  std::vector<uint32_t> all(256);
  for (uint32_t i = 0; i < 256; ++i) all[i] = i;
  const bool codec_ok = decode_ids(encode_ids(all, hs), hs) == all;

  ModelDims dims;
  dims.V = 256;
  dims.d = 32;
  dims.layers = 1;
  dims.h = 64;
  dims.C = 4;
  LanguageModel m = init_model(dims, false, 22);
  const Bytes before = checkpoint_serialize(m);
  hs_shake(m, hs);
  const bool changed = checkpoint_serialize(m) != before;
  hs_unshake(m, hs);
  const bool restored = checkpoint_serialize(m) == before;
  return {codec_ok && changed && restored,
          std::string("codec=") + (codec_ok ? "ok" : "bad") +
              " checkpoint_restored=" + (restored ? "yes" : "no")};
}

// ---- AC-3..AC-6 share the bench profile -------------------------------------

struct BenchState {
  ex::BenchProfile profile;
  ex::TaskData data;
  LanguageModel base;
  double baseline_acc = 0.0;
  KeyPair full_key;
  LanguageModel implanted;  // default full key, recovered
};

BenchState make_bench_state() {
  BenchState st;
  st.data = ex::make_task(st.profile);
  st.base = ex::make_base_model(st.profile, st.data);
  st.baseline_acc = eval_accuracy(st.base, st.data.test);
  st.full_key = ex::default_key(st.profile);
  st.implanted = st.base;
  ImplantConfig icfg;
  icfg.recover.awareness_epochs = 3;
  icfg.recover.functional_epochs = 3;
  icfg.recover.alpha = ex::kRecoverAlpha;
  icfg.recover.batch_size = st.profile.batch_size;
  icfg.recover.plateau_rel = 0.0;
  implant(st.implanted, st.full_key, st.data.train, icfg);
  return st;
}

std::pair<bool, std::string> ac3(const BenchState& st) {
  const VsOp ops[] = {VsOp::Addv,   VsOp::Inflate,  VsOp::Tilt,
                      VsOp::DxFixp, VsOp::Gaussian, VsOp::Laplace};
  bool ok = true;
  std::ostringstream detail;
  double margin_sum = 0.0;
  for (VsOp op : ops) {
    const auto r = ex::run_operator_recovery(st.profile, st.data, st.base,
                                             st.baseline_acc, op);
    const bool within = r.recovered_acc_3ep >= st.baseline_acc - 0.02;
    margin_sum += r.recovered_acc_10ep - r.recovered_acc_3ep;
    if (!within) ok = false;
    detail << r.op << "=" << fmt(r.recovered_acc_3ep) << "/"
           << fmt(r.recovered_acc_10ep) << (within ? " " : "(!) ");
  }
  const double mean_margin = margin_sum / 6.0;
  if (!(mean_margin > 0.0)) ok = false;
  detail << "baseline=" << fmt(st.baseline_acc)
         << " mean_10ep_margin=" << fmt(mean_margin);
  return {ok, detail.str()};
}

std::pair<bool, std::string> ac4(const BenchState& st) {
  const auto r = ex::run_tune_parity(st.profile, st.data, st.base, st.full_key,
                                     st.implanted);
  const bool parity = r.private_acc >= r.plain_acc - 0.03;
  return {parity && r.representation_frozen,
          "private=" + fmt(r.private_acc) + " plain=" + fmt(r.plain_acc) +
              " representation_frozen=" +
              (r.representation_frozen ? "yes" : "no")};
}

std::pair<bool, std::string> ac5(const BenchState& st) {
  const auto r = ex::run_inversion(st.base, st.implanted, st.full_key);
  const bool ok = r.unshaken_rate == 1.0 && r.implanted_rate <= 0.10 &&
                  r.implanted_rate < r.unshaken_rate;
  return {ok, "unshaken=" + fmt(r.unshaken_rate) +
                  " implanted=" + fmt(r.implanted_rate) +
                  " content_only=" + fmt(r.content_only_rate)};
}

std::pair<bool, std::string> ac6(const BenchState& st) {
  const auto r =
      ex::run_attribute_probe(st.data, st.base, st.implanted, st.full_key);
  const double drop = r.plain_acc - r.private_acc;
  return {drop >= 0.20, "plain=" + fmt(r.plain_acc) +
                            " private=" + fmt(r.private_acc) +
                            " drop=" + fmt(drop)};
}

// ---- AC-7: wire privacy boundary --------------------------------------------

std::pair<bool, std::string> ac7() {
  ModelDims dims;
  dims.V = 64;
  dims.d = 16;
  dims.layers = 1;
  dims.h = 24;
  dims.C = 2;
  LanguageModel m = init_model(dims, false, 71);
  KeyGenConfig kcfg;
  KeyPair kp = generate_keypair(kcfg, 64, 16, 72);
  if (kp.hs.is_identity()) return {false, "key unexpectedly identity"};
  LanguageModel implanted = m;
  AdaptDataset empty;
  implant(implanted, kp, empty, {});

  SyntheticTaskConfig tcfg;
  tcfg.V = 64;
  tcfg.C = 2;
  tcfg.signature_tokens = 8;
  tcfg.seq_len = 8;
  Rng drng(73);
  AdaptDataset ds = make_synthetic_task(tcfg, 32, drng);
  TuneConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;

  LanguageModel local = implanted;
  private_tune(local, ds, kp, cfg);

  Server server(implanted, "127.0.0.1", 0);
  std::vector<std::vector<uint8_t>> frames;
  ClientSession client(kp, "127.0.0.1", server.port(), &frames);
  const uint32_t remote_crc = client.tune(ds, cfg);
  client.infer(ds.X[0], Mode::Task);
  server.stop();

  size_t leaks = 0;
  auto render = [](const std::vector<uint32_t>& ids) {
    std::string s = "[";
    for (size_t i = 0; i < ids.size(); ++i)
      s += (i ? "," : "") + std::to_string(ids[i]);
    s += "]";
    return s;
  };
  for (const auto& x : ds.X) {
    const std::string raw = render(x);
    for (const auto& frame : frames) {
      const std::string body(frame.begin(), frame.end());
      if (body.find(raw) != std::string::npos) ++leaks;
    }
  }
  const bool hash_ok = remote_crc == model_hash(local);
  return {leaks == 0 && hash_ok && !frames.empty(),
          std::to_string(frames.size()) + " frames, " + std::to_string(leaks) +
              " raw-id leaks, remote_hash_matches_local=" +
              (hash_ok ? "yes" : "no")};
}

// ---- AC-8: numerical soundness + determinism goldens ------------------------

std::pair<bool, std::string> ac8() {
  double worst = 0.0;
  Rng rng(81);
  for (int mode_i = 0; mode_i < 2; ++mode_i) {
    const Mode mode = mode_i == 0 ? Mode::Lm : Mode::Task;
    for (int rep = 0; rep < 20; ++rep) {
      ModelDims dims;
      dims.V = 10 + static_cast<uint32_t>(rng.below(6));
      dims.d = 4 + static_cast<uint32_t>(rng.below(3));
      dims.layers = 1 + static_cast<uint32_t>(rng.below(2));
      dims.h = 5 + static_cast<uint32_t>(rng.below(4));
      dims.C = 2 + static_cast<uint32_t>(rng.below(2));
      const bool tied = rng.below(2) == 0;
      LanguageModel m = init_model(dims, tied, rng.next_u64());
      Batch b;
      const size_t nseq = 1 + rng.below(2);
      for (size_t s = 0; s < nseq; ++s) {
        std::vector<uint32_t> ids;
        const size_t len = 2 + rng.below(3);
        for (size_t t = 0; t < len; ++t)
          ids.push_back(static_cast<uint32_t>(rng.below(dims.V)));
        b.X.push_back(ids);
        if (mode == Mode::Task)
          b.Ytask.push_back(static_cast<uint32_t>(rng.below(dims.C)));
      }
      worst = std::max(worst, testutil::max_grad_rel_error(m, b, mode));
    }
  }
  const bool grads_ok = worst < 1e-4;

  // Determinism goldens, each computed twice in a row.
  bool goldens_ok = true;
  for (int run = 0; run < 2; ++run) {
    Rng g(7);
    auto v = sample({DistSpec::Kind::Uniform}, 3, g);
    if (v[0] != 0.055360436478333108 || v[1] != 0.17211585444811772 ||
        v[2] != 0.71757612835865936)
      goldens_ok = false;
    KeyGenConfig kcfg;
    kcfg.vs_n = 3;
    kcfg.allowed_ops = {VsOp::Addv, VsOp::Gaussian};
    auto kp = generate_keypair(kcfg, 16, 4, 42);
    if (payload_crc(keypair_serialize(kp)) != 1306333594u) goldens_ok = false;
    ModelDims dims;
    dims.V = 16;
    dims.d = 8;
    dims.layers = 1;
    dims.h = 16;
    dims.C = 2;
    if (model_hash(init_model(dims, false, 5)) != 3785679589u)
      goldens_ok = false;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max_grad_rel_err=%.3g goldens=%s", worst,
                goldens_ok ? "stable" : "drifted");
  return {grads_ok && goldens_ok, buf};
}

}  // namespace

int main() {
  run_criterion("AC-1", "horizontal equivalence", ac1);
  run_criterion("AC-2", "codec/permutation roundtrips", ac2);
  BenchState st = make_bench_state();
  run_criterion("AC-3", "recovery efficacy", [&st] { return ac3(st); });
  run_criterion("AC-4", "private tuning parity", [&st] { return ac4(st); });
  run_criterion("AC-5", "inversion attack reduction", [&st] { return ac5(st); });
  run_criterion("AC-6", "attribute-probe reduction", [&st] { return ac6(st); });
  run_criterion("AC-7", "wire privacy boundary", ac7);
  run_criterion("AC-8", "numerical soundness", ac8);
  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}

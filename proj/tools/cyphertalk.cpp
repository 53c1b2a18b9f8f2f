// Command-line front end: keygen | implant | tune | infer | attack | bench |
// serve. Every command validates its configuration up front, writes its
// artifacts into a run directory alongside a reproducibility manifest, and
// exits with a per-error-class code.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cyphertalk/experiments.hpp"
#include "cyphertalk/netservice.hpp"

using namespace cyphertalk;
namespace ex = cyphertalk::experiments;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes per error class.
enum : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitInput = 3,
  kExitFormat = 4,
  kExitTransport = 5,
  kExitNumeric = 6,
};

// Run directory with a manifest sufficient to reproduce the run: the
// effective config (hashed), the seeds, and a CRC per written artifact.
class RunDir {
 public:
  explicit RunDir(const std::string& path) : dir_(path) {
    fs::create_directories(dir_);
  }

  std::string path(const std::string& name) const {
    return (fs::path(dir_) / name).string();
  }

  void add_artifact(const std::string& name, const Bytes& bytes) {
    write_file(path(name), bytes);
    artifacts_.emplace_back(name, crc32_of(bytes));
  }

  void note_artifact(const std::string& name) {
    std::ifstream f(path(name), std::ios::binary);
    Bytes b((std::istreambuf_iterator<char>(f)),
            std::istreambuf_iterator<char>());
    artifacts_.emplace_back(name, crc32_of(b));
  }

  void write_manifest(const std::string& command, const json& config) {
    const std::string cfg = config.dump(2);
    Bytes cfg_bytes(cfg.begin(), cfg.end());
    std::ofstream f(path("manifest.txt"), std::ios::trunc);
    f << "command " << command << '\n';
    f << "config_crc32 " << crc32_of(cfg_bytes) << '\n';
    for (auto& [k, v] : config.items())
      f << "config." << k << ' ' << v.dump() << '\n';
    for (auto& [name, crc] : artifacts_)
      f << "artifact " << name << " crc32 " << crc << '\n';
    std::ofstream cf(path("config.json"), std::ios::trunc);
    cf << cfg << '\n';
  }

 private:
  std::string dir_;
  std::vector<std::pair<std::string, uint32_t>> artifacts_;
};

VsOp parse_op(const std::string& name) {
  for (int i = 0; i < 6; ++i)
    if (vs_op_name(static_cast<VsOp>(i)) == name) return static_cast<VsOp>(i);
  throw ConfigError("unknown operator: " + name);
}

std::vector<uint32_t> parse_ids(const std::string& s) {
  std::istringstream ss(s);
  std::vector<uint32_t> ids;
  long long v;
  while (ss >> v) {
    if (v < 0) throw InputError("negative token id");
    ids.push_back(static_cast<uint32_t>(v));
  }
  if (ids.empty()) throw InputError("no token ids given");
  return ids;
}

// Config files are INI-style, with one `[command]` section per subcommand
// and a `version = 1` schema tag; `--config` goes before the command name
// and any flag given on the command line overrides the file.
void attach_config(CLI::App* cmd, int& version) {
  cmd->add_option("--version", version, "config schema version")
      ->check(CLI::IsMember({1}))
      ->capture_default_str();
}

// ---------------------------------------------------------------------------

int cmd_keygen(uint64_t seed, uint32_t vocab, uint32_t dim, uint32_t vs_n,
               const std::vector<std::string>& op_names, const VsOpts& opts,
               const std::string& out) {
  KeyGenConfig cfg;
  cfg.vs_n = vs_n;
  if (op_names.empty()) {
    cfg.allowed_ops = {VsOp::Addv,   VsOp::Inflate,  VsOp::Tilt,
                       VsOp::DxFixp, VsOp::Gaussian, VsOp::Laplace};
  } else {
    for (const auto& n : op_names) cfg.allowed_ops.push_back(parse_op(n));
  }
  for (VsOp op : cfg.allowed_ops) cfg.opts[op] = opts;
  const KeyPair kp = generate_keypair(cfg, vocab, dim, seed);
  RunDir run(out);
  run.add_artifact("key.ctky", keypair_serialize(kp));
  json jc{{"seed", seed},  {"vocab", vocab}, {"dim", dim},
          {"vs_n", vs_n},  {"delta", opts.delta}, {"sigma", opts.sigma},
          {"k", opts.k},   {"theta", opts.theta}, {"epsilon", opts.epsilon}};
  jc["ops"] = op_names;
  run.write_manifest("keygen", jc);
  std::cout << "wrote " << run.path("key.ctky") << " (" << kp.rounds.size()
            << " vertical rounds)\n";
  return kExitOk;
}

int cmd_implant(const std::string& key_path, const std::string& model_path,
                uint64_t seed, bool have_seed, uint32_t vocab, uint32_t dim,
                uint32_t layers, uint32_t hidden, uint32_t classes,
                const std::string& data_path, uint32_t aware_epochs,
                uint32_t func_epochs, double alpha, uint32_t batch,
                const std::string& out) {
  const KeyPair kp = keypair_load(key_path);
  LanguageModel m;
  if (!model_path.empty()) {
    m = checkpoint_load(model_path);
  } else {
    if (!have_seed)
      throw ConfigError("implant: --seed is required when initializing a model");
    ModelDims dims;
    dims.V = vocab;
    dims.d = dim;
    dims.layers = layers;
    dims.h = hidden;
    dims.C = classes;
    m = init_model(dims, false, seed);
  }
  AdaptDataset data;
  if (!data_path.empty()) data = dataset_load(data_path);
  ImplantConfig cfg;
  cfg.recover.awareness_epochs = aware_epochs;
  cfg.recover.functional_epochs = func_epochs;
  cfg.recover.alpha = alpha;
  cfg.recover.batch_size = batch;
  const ImplantReport report = implant(m, kp, data, cfg);

  RunDir run(out);
  run.add_artifact("model.ctkm", checkpoint_serialize(m));
  std::vector<MetricRecord> recs;
  for (size_t r = 0; r < report.awareness_traces.size(); ++r) {
    for (size_t e = 0; e < report.awareness_traces[r].size(); ++e)
      recs.push_back({uint32_t(e + 1), "awareness",
                      report.awareness_traces[r][e], 0.0});
    for (size_t e = 0; e < report.functional_traces[r].size(); ++e)
      recs.push_back({uint32_t(e + 1), "functional", 0.0,
                      report.functional_traces[r][e]});
  }
  metrics_save(recs, run.path("metrics.log"));
  run.note_artifact("metrics.log");
  json jc{{"key", key_path},       {"model", model_path},
          {"data", data_path},     {"awareness_epochs", aware_epochs},
          {"functional_epochs", func_epochs}, {"alpha", alpha},
          {"batch", batch}};
  if (model_path.empty()) jc["seed"] = seed;
  run.write_manifest("implant", jc);
  std::cout << "implanted model -> " << run.path("model.ctkm")
            << " crc32=" << model_hash(m) << '\n';
  return kExitOk;
}

int cmd_tune(const std::string& key_path, const std::string& model_path,
             const std::string& data_path, uint32_t epochs, double alpha,
             uint32_t batch, const std::string& host, uint16_t port,
             const std::string& out) {
  const KeyPair kp = keypair_load(key_path);
  const AdaptDataset data = dataset_load(data_path);
  TuneConfig cfg;
  cfg.epochs = epochs;
  cfg.alpha = alpha;
  cfg.batch_size = batch;
  json jc{{"key", key_path}, {"model", model_path}, {"data", data_path},
          {"epochs", epochs}, {"alpha", alpha},     {"batch", batch}};
  RunDir run(out);
  if (!host.empty()) {
    ClientSession client(kp, host, port);
    const uint32_t crc = client.tune(data, cfg);
    jc["server"] = host + ":" + std::to_string(port);
    run.write_manifest("tune", jc);
    std::cout << "remote tune done, server checkpoint crc32=" << crc << '\n';
    return kExitOk;
  }
  LanguageModel m = checkpoint_load(model_path);
  private_tune(m, data, kp, cfg);
  run.add_artifact("model.ctkm", checkpoint_serialize(m));
  run.write_manifest("tune", jc);
  std::cout << "tuned model -> " << run.path("model.ctkm")
            << " crc32=" << model_hash(m) << '\n';
  return kExitOk;
}

int cmd_infer(const std::string& key_path, const std::string& model_path,
              const std::string& ids_str, const std::string& mode_str,
              const std::string& host, uint16_t port) {
  const KeyPair kp = keypair_load(key_path);
  const auto ids = parse_ids(ids_str);
  const Mode mode = mode_str == "lm" ? Mode::Lm : Mode::Task;
  InferResult res;
  if (!host.empty()) {
    ClientSession client(kp, host, port);
    res = client.infer(ids, mode);
  } else {
    const LanguageModel m = checkpoint_load(model_path);
    res = private_infer(m, ids, kp, mode);
  }
  if (mode == Mode::Lm) {
    for (size_t t = 0; t < res.token_ids.size(); ++t)
      std::cout << (t ? " " : "") << res.token_ids[t];
    std::cout << '\n';
  } else {
    std::cout << "label " << res.label << '\n';
  }
  return kExitOk;
}

int cmd_attack(const std::string& public_path, const std::string& observed_path,
               const std::string& key_path, const std::string& metric_str,
               const std::string& out) {
  const LanguageModel pub = checkpoint_load(public_path);
  const LanguageModel obs = checkpoint_load(observed_path);
  const AttackMetric metric =
      metric_str == "l2" ? AttackMetric::L2 : AttackMetric::Cosine;
  std::vector<AttackRecord> recs;
  recs.push_back(
      {"inversion", "plain", inversion_attack(pub.E, obs.E, metric)});
  if (!key_path.empty()) {
    const KeyPair kp = keypair_load(key_path);
    recs.push_back({"inversion", "combined",
                    inversion_attack_combined(pub.E, obs.E, kp.hs, metric)});
  }
  RunDir run(out);
  attack_report_save(recs, run.path("attack_report.txt"));
  run.note_artifact("attack_report.txt");
  json jc{{"public", public_path}, {"observed", observed_path},
          {"key", key_path},       {"metric", metric_str}};
  run.write_manifest("attack", jc);
  for (const auto& r : recs)
    std::cout << "attack=" << r.attack << " setting=" << r.setting
              << " rate=" << r.rate << '\n';
  return kExitOk;
}

int cmd_bench(uint64_t seed, const std::string& out) {
  ex::BenchProfile p;
  p.data_seed = seed;
  p.model_seed = seed + 1;
  p.key_seed = seed + 2;
  RunDir run(out);
  std::ostringstream summary;
  std::ostringstream csv;
  csv << "section,name,metric,value\n";

  std::cout << "building task and baseline model...\n";
  const ex::TaskData data = ex::make_task(p);
  const LanguageModel base = ex::make_base_model(p, data);
  const double baseline = eval_accuracy(base, data.test);
  summary << "baseline accuracy " << baseline << '\n';
  csv << "baseline,base,accuracy," << baseline << '\n';

  const VsOp ops[] = {VsOp::Addv,   VsOp::Inflate,  VsOp::Tilt,
                      VsOp::DxFixp, VsOp::Gaussian, VsOp::Laplace};
  summary << "\nrecovery (3-epoch / 10-epoch accuracy vs baseline)\n";
  for (VsOp op : ops) {
    std::cout << "recovery: " << vs_op_name(op) << "...\n";
    const auto r = ex::run_operator_recovery(p, data, base, baseline, op);
    summary << "  " << r.op << " " << r.recovered_acc_3ep << " / "
            << r.recovered_acc_10ep << '\n';
    csv << "recovery," << r.op << ",acc_3ep," << r.recovered_acc_3ep << '\n';
    csv << "recovery," << r.op << ",acc_10ep," << r.recovered_acc_10ep << '\n';
  }

  std::cout << "implanting full key...\n";
  const KeyPair kp = ex::default_key(p);
  LanguageModel implanted = base;
  ImplantConfig icfg;
  icfg.recover.awareness_epochs = 3;
  icfg.recover.functional_epochs = 3;
  icfg.recover.alpha = ex::kRecoverAlpha;
  icfg.recover.batch_size = p.batch_size;
  icfg.recover.plateau_rel = 0.0;
  implant(implanted, kp, data.train, icfg);

  std::cout << "tuning parity...\n";
  const auto tp = ex::run_tune_parity(p, data, base, kp, implanted);
  summary << "\nprivate tuning " << tp.private_acc << " vs plain "
          << tp.plain_acc << " (representation frozen: "
          << (tp.representation_frozen ? "yes" : "no") << ")\n";
  csv << "tune,private,accuracy," << tp.private_acc << '\n';
  csv << "tune,plain,accuracy," << tp.plain_acc << '\n';

  const auto inv = ex::run_inversion(base, implanted, kp);
  summary << "\ninversion rate: unshaken " << inv.unshaken_rate
          << ", implanted " << inv.implanted_rate << ", content-only "
          << inv.content_only_rate << '\n';
  csv << "inversion,unshaken,rate," << inv.unshaken_rate << '\n';
  csv << "inversion,implanted,rate," << inv.implanted_rate << '\n';
  csv << "inversion,content_only,rate," << inv.content_only_rate << '\n';

  std::cout << "attribute probe...\n";
  const auto probe = ex::run_attribute_probe(data, base, implanted, kp);
  summary << "attribute probe: plain " << probe.plain_acc << ", private "
          << probe.private_acc << '\n';
  csv << "attribute,plain,accuracy," << probe.plain_acc << '\n';
  csv << "attribute,private,accuracy," << probe.private_acc << '\n';

  {
    std::ofstream f(run.path("summary.txt"), std::ios::trunc);
    f << summary.str();
    std::ofstream c(run.path("results.csv"), std::ios::trunc);
    c << csv.str();
  }
  run.note_artifact("summary.txt");
  run.note_artifact("results.csv");
  run.write_manifest("bench", json{{"seed", seed}});
  std::cout << summary.str();
  return kExitOk;
}

int cmd_serve(const std::string& checkpoint, const std::string& host,
              uint16_t port) {
  std::string path = checkpoint;
  if (path.empty()) {
    const char* env = std::getenv("CYPHERTALK_CHECKPOINT");
    if (env) path = env;
  }
  if (path.empty())
    throw ConfigError(
        "serve: pass --checkpoint or set CYPHERTALK_CHECKPOINT");
  LanguageModel m = checkpoint_load(path);
  Server server(std::move(m), host, port);
  std::cout << "serving " << path << " on " << host << ":" << server.port()
            << '\n'
            << std::flush;
  for (;;) std::this_thread::sleep_for(std::chrono::seconds(3600));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shake/recover/tune/infer pipeline for keyed language models"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "INI config file with one [command] section per subcommand");
  int version = 1;

  // keygen
  auto* keygen = app.add_subcommand("keygen", "generate a shaking key pair");
  uint64_t kg_seed = 0;
  uint32_t kg_vocab = 256, kg_dim = 32, kg_vsn = 2;
  std::vector<std::string> kg_ops;
  VsOpts kg_opts;
  std::string kg_out = "run";
  attach_config(keygen, version);
  keygen->add_option("--seed", kg_seed, "key seed")->required();
  keygen->add_option("--vocab", kg_vocab, "vocab size")->capture_default_str();
  keygen->add_option("--dim", kg_dim, "embedding dim")->capture_default_str();
  keygen->add_option("--vs-n", kg_vsn, "vertical rounds")->capture_default_str();
  keygen->add_option("--ops", kg_ops,
                     "allowed operators (addv inflate tilt dxfixp gaussian "
                     "laplace); default all");
  keygen->add_option("--delta", kg_opts.delta)->capture_default_str();
  keygen->add_option("--sigma", kg_opts.sigma)->capture_default_str();
  keygen->add_option("--k", kg_opts.k)->capture_default_str();
  keygen->add_option("--theta", kg_opts.theta)->capture_default_str();
  keygen->add_option("--epsilon", kg_opts.epsilon)->capture_default_str();
  keygen->add_option("--out", kg_out, "run directory")->capture_default_str();

  // implant
  auto* implant_cmd = app.add_subcommand("implant", "implant a key into a model");
  std::string im_key, im_model, im_data, im_out = "run";
  uint64_t im_seed = 0;
  uint32_t im_vocab = 256, im_dim = 32, im_layers = 1, im_hidden = 64,
           im_classes = 4, im_aware = 3, im_func = 3, im_batch = 32;
  double im_alpha = 0.05;
  attach_config(implant_cmd, version);
  implant_cmd->add_option("--key", im_key, "key file")->required();
  implant_cmd->add_option("--model", im_model,
                          "input checkpoint; omit to initialize from --seed");
  auto* im_seed_opt = implant_cmd->add_option("--seed", im_seed, "init seed");
  implant_cmd->add_option("--vocab", im_vocab)->capture_default_str();
  implant_cmd->add_option("--dim", im_dim)->capture_default_str();
  implant_cmd->add_option("--layers", im_layers)->capture_default_str();
  implant_cmd->add_option("--hidden", im_hidden)->capture_default_str();
  implant_cmd->add_option("--classes", im_classes)->capture_default_str();
  implant_cmd->add_option("--data", im_data, "adaptation dataset");
  implant_cmd->add_option("--awareness-epochs", im_aware)->capture_default_str();
  implant_cmd->add_option("--functional-epochs", im_func)->capture_default_str();
  implant_cmd->add_option("--alpha", im_alpha)->capture_default_str();
  implant_cmd->add_option("--batch", im_batch)->capture_default_str();
  implant_cmd->add_option("--out", im_out)->capture_default_str();

  // tune
  auto* tune = app.add_subcommand("tune", "private fine-tuning");
  std::string tn_key, tn_model, tn_data, tn_host, tn_out = "run";
  uint32_t tn_epochs = 3, tn_batch = 32;
  uint16_t tn_port = 0;
  double tn_alpha = 0.05;
  attach_config(tune, version);
  tune->add_option("--key", tn_key)->required();
  tune->add_option("--model", tn_model, "local checkpoint (local mode)");
  tune->add_option("--data", tn_data)->required();
  tune->add_option("--epochs", tn_epochs)->capture_default_str();
  tune->add_option("--alpha", tn_alpha)->capture_default_str();
  tune->add_option("--batch", tn_batch)->capture_default_str();
  tune->add_option("--host", tn_host, "server host (remote mode)");
  tune->add_option("--port", tn_port, "server port");
  tune->add_option("--out", tn_out)->capture_default_str();

  // infer
  auto* infer = app.add_subcommand("infer", "private inference");
  std::string in_key, in_model, in_ids, in_mode = "task", in_host;
  uint16_t in_port = 0;
  attach_config(infer, version);
  infer->add_option("--key", in_key)->required();
  infer->add_option("--model", in_model, "local checkpoint (local mode)");
  infer->add_option("--ids", in_ids, "space-separated token ids")->required();
  infer->add_option("--mode", in_mode)->check(CLI::IsMember({"task", "lm"}));
  infer->add_option("--host", in_host, "server host (remote mode)");
  infer->add_option("--port", in_port, "server port");

  // attack
  auto* attack = app.add_subcommand("attack", "embedding inversion evaluation");
  std::string at_pub, at_obs, at_key, at_metric = "cosine", at_out = "run";
  attach_config(attack, version);
  attack->add_option("--public", at_pub, "public checkpoint")->required();
  attack->add_option("--observed", at_obs, "observed checkpoint")->required();
  attack->add_option("--key", at_key, "key file (combined setting)");
  attack->add_option("--metric", at_metric)
      ->check(CLI::IsMember({"cosine", "l2"}));
  attack->add_option("--out", at_out)->capture_default_str();

  // bench
  auto* bench = app.add_subcommand("bench", "full experiment matrix");
  uint64_t bn_seed = 0;
  std::string bn_out = "run";
  attach_config(bench, version);
  bench->add_option("--seed", bn_seed, "experiment seed")->required();
  bench->add_option("--out", bn_out)->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "host an implanted checkpoint");
  std::string sv_ckpt, sv_host = "127.0.0.1";
  uint16_t sv_port = 7447;
  attach_config(serve, version);
  serve->add_option("--checkpoint", sv_ckpt,
                    "checkpoint path (or CYPHERTALK_CHECKPOINT)");
  serve->add_option("--host", sv_host)->capture_default_str();
  serve->add_option("--port", sv_port)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*keygen)
      return cmd_keygen(kg_seed, kg_vocab, kg_dim, kg_vsn, kg_ops, kg_opts,
                        kg_out);
    if (*implant_cmd)
      return cmd_implant(im_key, im_model, im_seed, im_seed_opt->count() > 0,
                         im_vocab, im_dim, im_layers, im_hidden, im_classes,
                         im_data, im_aware, im_func, im_alpha, im_batch,
                         im_out);
    if (*tune) {
      if (tn_host.empty() && tn_model.empty())
        throw ConfigError("tune: pass --model (local) or --host/--port");
      return cmd_tune(tn_key, tn_model, tn_data, tn_epochs, tn_alpha, tn_batch,
                      tn_host, tn_port, tn_out);
    }
    if (*infer) {
      if (in_host.empty() && in_model.empty())
        throw ConfigError("infer: pass --model (local) or --host/--port");
      return cmd_infer(in_key, in_model, in_ids, in_mode, in_host, in_port);
    }
    if (*attack)
      return cmd_attack(at_pub, at_obs, at_key, at_metric, at_out);
    if (*bench) return cmd_bench(bn_seed, bn_out);
    if (*serve) return cmd_serve(sv_ckpt, sv_host, sv_port);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return kExitTransport;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}

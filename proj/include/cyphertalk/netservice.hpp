#pragma once

// Client/server split: the server hosts an implanted model and runs
// inference/tuning on encoded ids only; the client holds the KeyPair and
// does every encode/decode. Inference reads an immutable snapshot; tune
// batches are serialized through a single writer.

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cyphertalk/keys.hpp"
#include "cyphertalk/model.hpp"
#include "cyphertalk/privacy.hpp"
#include "cyphertalk/wire.hpp"

namespace cyphertalk {

class Server {
 public:
  Server(LanguageModel model, const std::string& host, uint16_t port)
      : snapshot_(std::make_shared<const LanguageModel>(std::move(model))),
        port_(port) {
    listener_ = tcp_listen(host, port_);
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  ~Server() { stop(); }

  uint16_t port() const { return port_; }
  uint64_t steps() const { return steps_.load(); }

  LanguageModel model_copy() const {
    return *std::atomic_load(&snapshot_);
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    // close() alone does not wake a thread parked in accept()/recv();
    // shutdown() does.
    if (listener_.fd >= 0) ::shutdown(listener_.fd, SHUT_RDWR);
    if (accept_thread_.joinable()) accept_thread_.join();
    listener_.close_fd();
    std::lock_guard<std::mutex> lk(conns_mu_);
    for (auto& c : conns_)
      if (c->fd >= 0) ::shutdown(c->fd, SHUT_RDWR);
    for (auto& t : conn_threads_)
      if (t.joinable()) t.join();
  }

 private:
  using json = nlohmann::json;

  void accept_loop() {
    for (;;) {
      const int fd = ::accept(listener_.fd, nullptr, nullptr);
      if (fd < 0) break;  // listener shut down
      auto sock = std::make_shared<Socket>(fd);
      std::lock_guard<std::mutex> lk(conns_mu_);
      conns_.push_back(sock);
      conn_threads_.emplace_back([this, sock] { session(*sock); });
    }
  }

  void session(Socket& sock) {
    WireMessage msg;
    for (;;) {
      try {
        if (!recv_msg(sock.fd, msg)) return;
      } catch (const TransportError&) {
        return;  // oversized frame or dead peer: drop the connection
      }
      WireMessage resp;
      try {
        resp = handle(msg);
      } catch (const std::exception& e) {
        resp.kind = MsgKind::ErrorMsg;
        resp.body = json{{"code", "bad_request"}, {"msg", e.what()}}.dump();
      }
      try {
        send_msg(sock.fd, resp);
      } catch (const TransportError&) {
        return;
      }
    }
  }

  WireMessage handle(const WireMessage& msg) {
    switch (msg.kind) {
      case MsgKind::StatusReq: {
        auto m = std::atomic_load(&snapshot_);
        json j{{"V", m->dims.V},     {"d", m->dims.d}, {"layers", m->dims.layers},
               {"h", m->dims.h},     {"C", m->dims.C}, {"tied", m->tied},
               {"steps", steps_.load()}, {"crc", model_hash(*m)}};
        return {MsgKind::StatusResp, j.dump()};
      }
      case MsgKind::InferReq: {
        const json j = json::parse(msg.body);
        const std::vector<uint32_t> ids = j.at("ids").get<std::vector<uint32_t>>();
        const Mode mode = j.at("mode").get<std::string>() == "lm" ? Mode::Lm
                                                                  : Mode::Task;
        auto m = std::atomic_load(&snapshot_);
        const auto logits = forward(*m, ids, mode);
        json out;
        if (mode == Mode::Lm) {
          std::vector<uint32_t> pred(logits.size());
          for (size_t t = 0; t < logits.size(); ++t) {
            size_t best = 0;
            for (size_t v = 1; v < logits[t].size(); ++v)
              if (logits[t][v] > logits[t][best]) best = v;
            pred[t] = static_cast<uint32_t>(best);
          }
          out["ids"] = pred;
        } else {
          size_t best = 0;
          for (size_t c = 1; c < logits[0].size(); ++c)
            if (logits[0][c] > logits[0][best]) best = c;
          out["label"] = static_cast<uint32_t>(best);
        }
        return {MsgKind::InferResp, out.dump()};
      }
      case MsgKind::TuneBatch: {
        const json j = json::parse(msg.body);
        Batch batch;
        batch.X = j.at("X").get<std::vector<std::vector<uint32_t>>>();
        batch.Ytask = j.at("Y").get<std::vector<uint32_t>>();
        const double alpha = j.at("alpha").get<double>();
        const uint32_t freeze = j.value("freeze", kFreezeE | kFreezeO);
        uint64_t step;
        uint32_t crc;
        {
          // Single-writer: batches apply strictly in arrival order.
          std::lock_guard<std::mutex> lk(tune_mu_);
          auto next = std::make_shared<LanguageModel>(*std::atomic_load(&snapshot_));
          tune_encoded_batch(*next, batch, alpha, freeze);
          std::atomic_store(&snapshot_,
                            std::shared_ptr<const LanguageModel>(next));
          step = ++steps_;
          crc = model_hash(*next);
        }
        return {MsgKind::TuneAck, json{{"step", step}, {"crc", crc}}.dump()};
      }
      default:
        return {MsgKind::ErrorMsg,
                json{{"code", "bad_kind"}, {"msg", "unknown message kind"}}.dump()};
    }
  }

  std::shared_ptr<const LanguageModel> snapshot_;
  uint16_t port_;
  Socket listener_;
  std::thread accept_thread_;
  std::mutex tune_mu_;
  std::mutex conns_mu_;
  std::vector<std::shared_ptr<Socket>> conns_;
  std::vector<std::thread> conn_threads_;
  std::atomic<uint64_t> steps_{0};
  std::atomic<bool> stopping_{false};
};

struct ServerStatus {
  ModelDims dims;
  bool tied = false;
  uint64_t steps = 0;
  uint32_t crc = 0;
};

// Client handle: all ids are encoded before transmission and decoded after
// receipt; raw ids never enter a WireMessage. Not shareable across threads.
class ClientSession {
 public:
  ClientSession(KeyPair kp, const std::string& host, uint16_t port,
                std::vector<std::vector<uint8_t>>* capture = nullptr)
      : kp_(std::move(kp)), capture_(capture) {
    sock_ = tcp_connect(host, port);
    // Handshake: refuse to send any data to an incompatible model.
    const ServerStatus st = status();
    if (st.dims.V != kp_.vocab_size || st.dims.d != kp_.embed_dim)
      throw InputError("client/server model dimension mismatch");
    num_classes_ = st.dims.C;
  }

  ServerStatus status() {
    const auto resp = roundtrip({MsgKind::StatusReq, "{}"});
    expect_kind(resp, MsgKind::StatusResp);
    const auto j = nlohmann::json::parse(resp.body);
    ServerStatus st;
    st.dims.V = j.at("V");
    st.dims.d = j.at("d");
    st.dims.layers = j.at("layers");
    st.dims.h = j.at("h");
    st.dims.C = j.at("C");
    st.tied = j.at("tied");
    st.steps = j.at("steps");
    st.crc = j.at("crc");
    return st;
  }

  InferResult infer(const std::vector<uint32_t>& raw_ids, Mode mode) {
    nlohmann::json body{{"ids", encode_ids(raw_ids, kp_.hs)},
                        {"mode", mode == Mode::Lm ? "lm" : "task"}};
    const auto resp = roundtrip({MsgKind::InferReq, body.dump()});
    expect_kind(resp, MsgKind::InferResp);
    const auto j = nlohmann::json::parse(resp.body);
    InferResult res;
    if (mode == Mode::Lm) {
      res.token_ids = decode_ids(j.at("ids").get<std::vector<uint32_t>>(), kp_.hs);
    } else {
      const LabelCodec labels(kp_, num_classes_, label_perm_);
      res.label = labels.decode(j.at("label").get<uint32_t>());
    }
    return res;
  }

  // Streams the dataset as encoded TUNE_BATCH frames; every batch is acked
  // before the next is sent. Returns the server checkpoint CRC after the
  // last acked step.
  uint32_t tune(const AdaptDataset& raw, const TuneConfig& cfg) {
    if (!raw.has_labels()) throw InputError("tune: dataset has no labels");
    const LabelCodec labels(kp_, num_classes_, cfg.label_perm);
    uint32_t last_crc = 0;
    for (uint32_t e = 0; e < cfg.epochs; ++e) {
      for (size_t i = 0; i < raw.size(); i += cfg.batch_size) {
        const size_t end = std::min(raw.size(), i + cfg.batch_size);
        nlohmann::json body;
        auto& X = body["X"] = nlohmann::json::array();
        auto& Y = body["Y"] = nlohmann::json::array();
        for (size_t s = i; s < end; ++s) {
          X.push_back(encode_ids(raw.X[s], kp_.hs));
          Y.push_back(labels.encode(raw.labels[s]));
        }
        body["alpha"] = cfg.alpha;
        body["freeze"] = cfg.freeze;
        const auto resp = roundtrip({MsgKind::TuneBatch, body.dump()});
        expect_kind(resp, MsgKind::TuneAck);
        last_crc = nlohmann::json::parse(resp.body).at("crc").get<uint32_t>();
      }
    }
    return last_crc;
  }

 private:
  WireMessage roundtrip(const WireMessage& msg) {
    if (capture_) capture_->push_back(frame_bytes(msg));
    send_msg(sock_.fd, msg);
    WireMessage resp;
    if (!recv_msg(sock_.fd, resp))
      throw TransportError("server closed connection");
    if (capture_) capture_->push_back(frame_bytes(resp));
    return resp;
  }

  static void expect_kind(const WireMessage& msg, MsgKind want) {
    if (msg.kind == MsgKind::ErrorMsg)
      throw Error("server error: " + msg.body);
    if (msg.kind != want) throw TransportError("unexpected message kind");
  }

  KeyPair kp_;
  Socket sock_;
  uint32_t num_classes_ = 0;
  bool label_perm_ = true;
  std::vector<std::vector<uint8_t>>* capture_;
};

}  // namespace cyphertalk

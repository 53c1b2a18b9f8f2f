#pragma once

// Adaptation datasets: the line-delimited on-disk format and the synthetic
// desk-scale classification task used by recovery and the benchmarks.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cyphertalk/errors.hpp"
#include "cyphertalk/model.hpp"
#include "cyphertalk/rng.hpp"

namespace cyphertalk {

// (X, Y) pairs. Task mode uses labels; lm mode uses Ylm (empty Ylm means
// Y = X, the awareness form).
struct AdaptDataset {
  std::vector<std::vector<uint32_t>> X;
  std::vector<uint32_t> labels;
  std::vector<std::vector<uint32_t>> Ylm;

  size_t size() const { return X.size(); }
  bool has_labels() const { return !labels.empty(); }
};

// Format: one record per line, UTF-8.
//   task mode: "id id id\tlabel"
//   lm mode:   "id id id\tid id id"
inline void dataset_save(const AdaptDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for write: " + path);
  for (size_t i = 0; i < ds.X.size(); ++i) {
    for (size_t t = 0; t < ds.X[i].size(); ++t)
      f << (t ? " " : "") << ds.X[i][t];
    f << '\t';
    if (ds.has_labels()) {
      f << ds.labels[i];
    } else {
      const auto& y = ds.Ylm.empty() ? ds.X[i] : ds.Ylm[i];
      for (size_t t = 0; t < y.size(); ++t) f << (t ? " " : "") << y[t];
    }
    f << '\n';
  }
}

inline AdaptDataset dataset_load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open: " + path);
  AdaptDataset ds;
  std::string line;
  size_t lineno = 0;
  // The first record decides whether the file is task mode (single integer
  // after the tab) or lm mode (id sequence after the tab).
  int mode = -1;  // -1 undecided, 0 task, 1 lm
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(FormatError::Kind::Invariant,
                        "dataset line " + std::to_string(lineno) + ": no tab");
    std::vector<uint32_t> ids;
    {
      std::istringstream ss(line.substr(0, tab));
      uint32_t v;
      while (ss >> v) ids.push_back(v);
    }
    std::string rhs = line.substr(tab + 1);
    std::istringstream ss(rhs);
    std::vector<uint32_t> ys;
    uint32_t v;
    while (ss >> v) ys.push_back(v);
    if (ys.empty())
      throw FormatError(FormatError::Kind::Invariant,
                        "dataset line " + std::to_string(lineno) + ": empty Y");
    ds.X.push_back(std::move(ids));
    if (mode == -1)
      mode = (ys.size() == 1 && rhs.find(' ') == std::string::npos) ? 0 : 1;
    if (mode == 0) {
      if (ys.size() != 1)
        throw FormatError(FormatError::Kind::Invariant,
                          "dataset line " + std::to_string(lineno) +
                              ": expected a single label");
      ds.labels.push_back(ys[0]);
    } else {
      ds.Ylm.push_back(std::move(ys));
    }
  }
  return ds;
}

struct SyntheticTaskConfig {
  uint32_t V = 256;
  uint32_t C = 4;
  uint32_t seq_len = 12;
  uint32_t signature_tokens = 16;  // per-class signature block size
  uint32_t true_hits = 4;          // signature tokens from the true class
  uint32_t distractor_hits = 2;    // signature tokens from one other class
};

// Class c owns tokens [c*signature_tokens, (c+1)*signature_tokens); the
// label is the class whose signature tokens dominate the sequence. The
// remaining positions are filler from the top half of the vocabulary.
inline AdaptDataset make_synthetic_task(const SyntheticTaskConfig& cfg,
                                        size_t n, Rng& rng) {
  if (cfg.C * cfg.signature_tokens > cfg.V / 2)
    throw ConfigError("make_synthetic_task: signature blocks exceed half vocab");
  AdaptDataset ds;
  ds.X.reserve(n);
  ds.labels.reserve(n);
  const uint32_t filler_base = cfg.V / 2;
  for (size_t i = 0; i < n; ++i) {
    const uint32_t label = static_cast<uint32_t>(rng.below(cfg.C));
    uint32_t other = static_cast<uint32_t>(rng.below(cfg.C));
    if (other == label) other = (other + 1) % cfg.C;
    std::vector<uint32_t> ids;
    ids.reserve(cfg.seq_len);
    for (uint32_t j = 0; j < cfg.true_hits; ++j)
      ids.push_back(label * cfg.signature_tokens +
                    static_cast<uint32_t>(rng.below(cfg.signature_tokens)));
    for (uint32_t j = 0; j < cfg.distractor_hits; ++j)
      ids.push_back(other * cfg.signature_tokens +
                    static_cast<uint32_t>(rng.below(cfg.signature_tokens)));
    while (ids.size() < cfg.seq_len)
      ids.push_back(filler_base +
                    static_cast<uint32_t>(rng.below(cfg.V - filler_base)));
    // Shuffle positions so the signal is not positional.
    for (size_t a = ids.size() - 1; a > 0; --a)
      std::swap(ids[a], ids[rng.below(a + 1)]);
    ds.X.push_back(std::move(ids));
    ds.labels.push_back(label);
  }
  return ds;
}

inline Batch to_batch(const AdaptDataset& ds, size_t begin, size_t end,
                      Mode mode) {
  Batch b;
  for (size_t i = begin; i < end; ++i) {
    b.X.push_back(ds.X[i]);
    if (mode == Mode::Task) {
      b.Ytask.push_back(ds.labels[i]);
    } else if (!ds.Ylm.empty()) {
      b.Ylm.push_back(ds.Ylm[i]);
    }
  }
  return b;
}

}  // namespace cyphertalk

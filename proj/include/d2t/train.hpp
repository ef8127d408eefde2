#pragma once

// Pretraining and fine-tuning loops (plain SGD with global-norm clipping at
// 1.0), dev-BLEU checkpoint selection, and the binary checkpoint format:
//
//   magic "D2TF" | u32 version=1 | u64 header length | JSON header
//   | raw little-endian f32 tensor payload | 32-byte SHA-256
//
// The header carries the model config, step, dev BLEU, provenance, and the
// tensor manifest (name/shape/offset); the hash covers header and payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2t/common.hpp"
#include "d2t/decode.hpp"
#include "d2t/metrics.hpp"
#include "d2t/model.hpp"
#include "d2t/span.hpp"
#include "d2t/tokenizer.hpp"

namespace d2t {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

enum class TrainMode { Pretrain, Finetune };

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 8;
  int max_steps = 0;
  int eval_every = 100;
  uint64_t seed = 0;
  TrainMode mode = TrainMode::Finetune;
  // 0 = plain cross-entropy. Smoothing keeps rarely-targeted vocabulary rows
  // reachable, which matters when fine-tuning must preserve pretrained
  // knowledge of tokens absent from the fine-tuning targets.
  double label_smoothing = 0.0;

  void validate() const {
    if (learning_rate < 0.0) throw ValidationError("train config: learning_rate must be >= 0");
    if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
    if (max_steps < 0) throw ValidationError("train config: max_steps must be >= 0");
    if (eval_every < 1) throw ValidationError("train config: eval_every must be >= 1");
    if (max_steps > 0 && max_steps < eval_every) {
      throw ValidationError("train config: max_steps must be >= eval_every");
    }
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
      throw ValidationError("train config: label_smoothing must be in [0, 1)");
    }
  }
};

inline constexpr double kGradClipNorm = 1.0;

struct Provenance {
  std::optional<std::string> pretrained_from;  // content hash of the start checkpoint
  std::string dataset;
  TrainConfig tcfg;
  std::string vocab_hash;
};

struct ModelCheckpoint {
  ModelConfig cfg;
  Params<float> params;
  int64_t step = 0;
  std::optional<double> dev_bleu;
  Provenance provenance;
};

// ----------------------------- persistence -----------------------------

namespace detail {

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"layers", c.layers},     {"d_model", c.d_model},
          {"n_heads", c.n_heads},   {"d_ff", c.d_ff},
          {"vocab_size", c.vocab_size}, {"max_len", c.max_len},
          {"dropout_rate", c.dropout_rate}, {"size_tag", size_tag_name(c.size_tag)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<float>();
  c.size_tag = size_tag_from_string(j.at("size_tag").get<std::string>());
  return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"max_steps", t.max_steps},
          {"eval_every", t.eval_every},
          {"seed", t.seed},
          {"mode", t.mode == TrainMode::Pretrain ? "pretrain" : "finetune"},
          {"label_smoothing", t.label_smoothing}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.batch_size = j.at("batch_size").get<int>();
  t.max_steps = j.at("max_steps").get<int>();
  t.eval_every = j.at("eval_every").get<int>();
  t.seed = j.at("seed").get<uint64_t>();
  t.mode = j.at("mode").get<std::string>() == "pretrain" ? TrainMode::Pretrain
                                                         : TrainMode::Finetune;
  if (j.contains("label_smoothing")) t.label_smoothing = j["label_smoothing"].get<double>();
  return t;
}

struct CheckpointBlob {
  std::string header;   // JSON bytes
  std::string payload;  // raw f32 tensors
};

inline CheckpointBlob checkpoint_blob(const ModelCheckpoint& ckpt) {
  CheckpointBlob blob;
  nlohmann::json manifest = nlohmann::json::array();
  int64_t offset = 0;
  visit_params(ckpt.params, [&](const std::string& name, const auto& m) {
    manifest.push_back({{"name", name},
                        {"shape", {m.rows(), m.cols()}},
                        {"offset", offset}});
    const size_t bytes = static_cast<size_t>(m.size()) * sizeof(float);
    blob.payload.append(reinterpret_cast<const char*>(m.data()), bytes);
    offset += static_cast<int64_t>(bytes);
  });

  nlohmann::json header;
  header["cfg"] = model_config_to_json(ckpt.cfg);
  header["step"] = ckpt.step;
  if (ckpt.dev_bleu) {
    header["dev_bleu"] = *ckpt.dev_bleu;
  } else {
    header["dev_bleu"] = nullptr;
  }
  nlohmann::json prov;
  prov["pretrained_from"] =
      ckpt.provenance.pretrained_from ? nlohmann::json(*ckpt.provenance.pretrained_from)
                                      : nlohmann::json(nullptr);
  prov["dataset"] = ckpt.provenance.dataset;
  prov["train_config"] = train_config_to_json(ckpt.provenance.tcfg);
  prov["vocab_hash"] = ckpt.provenance.vocab_hash;
  header["provenance"] = std::move(prov);
  header["tensors"] = std::move(manifest);
  blob.header = header.dump();
  return blob;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'D', '2', 'T', 'F'};
inline constexpr uint32_t kCheckpointVersion = 1;

// Content hash of a checkpoint as it would appear on disk (header+payload).
inline std::string checkpoint_content_hash(const ModelCheckpoint& ckpt) {
  const auto blob = detail::checkpoint_blob(ckpt);
  std::string all = blob.header + blob.payload;
  return sha256_hex(all);
}

inline void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  const auto blob = detail::checkpoint_blob(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 4);
  const uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint64_t header_len = blob.header.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(blob.header.data(), static_cast<std::streamsize>(blob.header.size()));
  out.write(blob.payload.data(), static_cast<std::streamsize>(blob.payload.size()));
  const std::string all = blob.header + blob.payload;
  const auto hash = sha256_bytes(all.data(), all.size());
  out.write(reinterpret_cast<const char*>(hash.data()), static_cast<std::streamsize>(hash.size()));
  if (!out) throw IoError("short write to checkpoint: " + path);
}

inline ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const auto read_exact = [&](char* dst, size_t n, const char* what) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) {
      throw CheckpointError(CheckpointErrorKind::Truncated,
                            std::string("checkpoint truncated while reading ") + what + ": " +
                                path);
    }
  };

  char magic[4];
  read_exact(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::BadMagic, "not a checkpoint file: " + path);
  }
  uint32_t version = 0;
  read_exact(reinterpret_cast<char*>(&version), sizeof(version), "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::Version,
                          "unsupported checkpoint version " + std::to_string(version) + ": " +
                              path);
  }
  uint64_t header_len = 0;
  read_exact(reinterpret_cast<char*>(&header_len), sizeof(header_len), "header length");
  std::string header(header_len, '\0');
  read_exact(header.data(), header_len, "header");

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::Corrupt,
                          std::string("checkpoint header unreadable: ") + e.what());
  }

  ModelCheckpoint ckpt;
  ckpt.cfg = detail::model_config_from_json(h.at("cfg"));
  ckpt.cfg.validate();
  ckpt.step = h.at("step").get<int64_t>();
  if (!h.at("dev_bleu").is_null()) ckpt.dev_bleu = h.at("dev_bleu").get<double>();
  const auto& prov = h.at("provenance");
  if (!prov.at("pretrained_from").is_null()) {
    ckpt.provenance.pretrained_from = prov.at("pretrained_from").get<std::string>();
  }
  ckpt.provenance.dataset = prov.at("dataset").get<std::string>();
  ckpt.provenance.tcfg = detail::train_config_from_json(prov.at("train_config"));
  ckpt.provenance.vocab_hash = prov.at("vocab_hash").get<std::string>();

  ckpt.params = zeros_like_params<float>(ckpt.cfg);
  int64_t payload_bytes = 0;
  visit_params(ckpt.params, [&](const std::string&, const auto& m) {
    payload_bytes += m.size() * static_cast<int64_t>(sizeof(float));
  });
  std::string payload(static_cast<size_t>(payload_bytes), '\0');
  read_exact(payload.data(), payload.size(), "tensor payload");

  // Verify the manifest against the config-derived shapes, then copy.
  const auto& manifest = h.at("tensors");
  size_t tensor_idx = 0;
  bool manifest_ok = manifest.is_array();
  visit_params(ckpt.params, [&](const std::string& name, auto& m) {
    if (!manifest_ok || tensor_idx >= manifest.size()) {
      manifest_ok = false;
      return;
    }
    const auto& entry = manifest[tensor_idx++];
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    const auto offset = entry.at("offset").get<int64_t>();
    if (entry.at("name").get<std::string>() != name || shape.size() != 2 ||
        shape[0] != m.rows() || shape[1] != m.cols() ||
        offset + m.size() * static_cast<int64_t>(sizeof(float)) > payload_bytes) {
      manifest_ok = false;
      return;
    }
    std::memcpy(m.data(), payload.data() + offset,
                static_cast<size_t>(m.size()) * sizeof(float));
  });
  if (!manifest_ok || tensor_idx != manifest.size()) {
    throw CheckpointError(CheckpointErrorKind::Corrupt,
                          "checkpoint tensor manifest does not match its config: " + path);
  }

  std::array<uint8_t, 32> stored_hash{};
  read_exact(reinterpret_cast<char*>(stored_hash.data()), stored_hash.size(), "hash");
  const std::string all = header + payload;
  if (sha256_bytes(all.data(), all.size()) != stored_hash) {
    throw CheckpointError(CheckpointErrorKind::Corrupt,
                          "checkpoint content hash mismatch (corrupt file): " + path);
  }
  return ckpt;
}

// ----------------------------- batching helpers -----------------------------

namespace detail {

// Per-epoch seeded shuffle with windowed length bucketing: randomness drives
// the epoch order, nearby items are sorted by length to cap padding waste.
inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch,
                                       const std::vector<int64_t>& lengths, int window) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::mix(seed, static_cast<uint64_t>(epoch) + 0xE70C4ull));
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  if (!lengths.empty() && window > 1) {
    for (size_t start = 0; start < n; start += static_cast<size_t>(window)) {
      const size_t end = std::min(n, start + static_cast<size_t>(window));
      std::stable_sort(order.begin() + static_cast<long>(start),
                       order.begin() + static_cast<long>(end),
                       [&](size_t a, size_t b) { return lengths[a] < lengths[b]; });
    }
  }
  return order;
}

}  // namespace detail

// ----------------------------- pretraining -----------------------------

// Runs max_steps SGD updates on span-corrupted batches drawn from the token
// corpus. Fully deterministic for a given config and seed.
inline ModelCheckpoint pretrain(const std::vector<std::vector<int>>& corpus,
                                const ModelConfig& cfg, const TrainConfig& tcfg,
                                const SpanMaskSpec& spec, const std::string& vocab_hash_hex,
                                const std::string& dataset_name = "pretrain") {
  cfg.validate();
  tcfg.validate();
  spec.validate();
  if (corpus.empty()) throw ValidationError("pretrain: empty corpus");

  Params<float> params = init_params<float>(cfg, tcfg.seed);

  std::vector<std::vector<int>> cropped(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    auto ids = corpus[i];
    // keep room so corrupted input and target both fit max_len
    const size_t cap = static_cast<size_t>(cfg.max_len - 1);
    if (ids.size() > cap) ids.resize(cap);
    if (ids.size() < 2) {
      throw ValidationError("pretrain: corpus sequence " + std::to_string(i) +
                            " has fewer than 2 tokens");
    }
    cropped[i] = std::move(ids);
  }

  std::vector<int64_t> lengths(cropped.size());
  for (size_t i = 0; i < cropped.size(); ++i) lengths[i] = static_cast<int64_t>(cropped[i].size());

  std::vector<size_t> order;
  size_t cursor = 0;
  int64_t epoch = 0;
  for (int step = 0; step < tcfg.max_steps; ++step) {
    std::vector<std::vector<int>> sources, targets;
    for (int b = 0; b < tcfg.batch_size; ++b) {
      if (cursor >= cropped.size() || order.empty()) {
        order = detail::epoch_order(cropped.size(), tcfg.seed, epoch++, lengths,
                                    tcfg.batch_size * 8);
        cursor = 0;
      }
      const size_t idx = order[cursor++];
      const uint64_t item_seed =
          Rng::mix(tcfg.seed, (static_cast<uint64_t>(step) << 20) ^ idx);
      const SpanCorruption sc = span_corrupt(cropped[idx], spec, item_seed);
      std::vector<int> tgt = sc.target;
      if (!tgt.empty() && tgt.back() == kEosId) tgt.pop_back();  // make_batch appends EOS
      sources.push_back(sc.input);
      targets.push_back(std::move(tgt));
    }
    const Batch batch = make_batch(sources, targets, cfg);
    try {
      const auto result =
          forward_loss(params, cfg, batch, /*compute_grads=*/true, tcfg.label_smoothing);
      sgd_step(params, *result.grads, tcfg.learning_rate, kGradClipNorm);
    } catch (const InternalError& e) {
      throw InternalError("pretrain aborted at step " + std::to_string(step) + ": " + e.what());
    }
  }

  ModelCheckpoint ckpt;
  ckpt.cfg = cfg;
  ckpt.params = std::move(params);
  ckpt.step = tcfg.max_steps;
  ckpt.provenance.dataset = dataset_name;
  ckpt.provenance.tcfg = tcfg;
  ckpt.provenance.tcfg.mode = TrainMode::Pretrain;
  ckpt.provenance.vocab_hash = vocab_hash_hex;
  return ckpt;
}

// ----------------------------- fine-tuning -----------------------------

struct FinetunePair {
  std::vector<int> source;
  std::vector<int> target;  // without EOS
};

struct DevItem {
  std::vector<int> source;
  std::vector<std::string> references;
};

struct FinetuneResult {
  std::vector<ModelCheckpoint> snapshots;
  size_t selected = 0;
};

// Argmax of recorded dev BLEU; ties resolve to the earliest step.
inline size_t select_best_checkpoint(const std::vector<double>& dev_bleus) {
  if (dev_bleus.empty()) throw ValidationError("select_best_checkpoint: no snapshots");
  size_t best = 0;
  for (size_t i = 1; i < dev_bleus.size(); ++i) {
    if (dev_bleus[i] > dev_bleus[best]) best = i;
  }
  return best;
}

// Fine-tunes from `start` (or fresh init when absent), evaluating greedy-
// decoded dev BLEU every eval_every steps and snapshotting. All parameters
// update. Returns every snapshot plus the selected index.
inline FinetuneResult finetune(const std::optional<ModelCheckpoint>& start,
                               const ModelConfig& cfg_in, const std::vector<FinetunePair>& pairs,
                               const TrainConfig& tcfg, const std::vector<DevItem>& dev,
                               const Vocab& vocab, const std::string& dataset_name = "finetune",
                               int decode_max_len = 0) {
  tcfg.validate();
  if (pairs.empty()) throw ValidationError("finetune: no training pairs");
  if (dev.empty()) throw ValidationError("finetune: empty dev set");

  const std::string vhash = vocab_hash(vocab);
  ModelConfig cfg = cfg_in;
  Params<float> params;
  std::optional<std::string> pretrained_from;
  if (start) {
    cfg = start->cfg;
    cfg.validate();
    if (start->provenance.vocab_hash != vhash) {
      throw ValidationError(
          "finetune: vocab hash mismatch between start checkpoint and dataset tokenizer");
    }
    params = start->params;
    pretrained_from = checkpoint_content_hash(*start);
  } else {
    cfg.validate();
    params = init_params<float>(cfg, tcfg.seed);
  }
  if (cfg.vocab_size != vocab.size()) {
    throw ValidationError("finetune: model vocab_size does not match tokenizer");
  }
  if (decode_max_len <= 0) decode_max_len = cfg.max_len;

  std::vector<int64_t> lengths(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    lengths[i] = static_cast<int64_t>(pairs[i].source.size() + pairs[i].target.size());
  }

  std::vector<std::vector<std::string>> dev_refs;
  for (const DevItem& d : dev) dev_refs.push_back(d.references);

  const auto eval_dev_bleu = [&]() {
    std::vector<std::string> hyps;
    hyps.reserve(dev.size());
    for (const DevItem& d : dev) {
      const auto ids = greedy_decode(params, cfg, d.source, decode_max_len);
      hyps.push_back(decode(vocab, ids));
    }
    return corpus_bleu(hyps, dev_refs).score;
  };

  const auto snapshot = [&](int64_t step, double bleu) {
    ModelCheckpoint c;
    c.cfg = cfg;
    c.params = params;
    c.step = step;
    c.dev_bleu = bleu;
    c.provenance.pretrained_from = pretrained_from;
    c.provenance.dataset = dataset_name;
    c.provenance.tcfg = tcfg;
    c.provenance.tcfg.mode = TrainMode::Finetune;
    c.provenance.vocab_hash = vhash;
    return c;
  };

  FinetuneResult result;
  std::vector<size_t> order;
  size_t cursor = 0;
  int64_t epoch = 0;
  for (int step = 1; step <= tcfg.max_steps; ++step) {
    std::vector<std::vector<int>> sources, targets;
    for (int b = 0; b < tcfg.batch_size; ++b) {
      if (cursor >= pairs.size() || order.empty()) {
        order = detail::epoch_order(pairs.size(), tcfg.seed, epoch++, lengths,
                                    tcfg.batch_size * 8);
        cursor = 0;
      }
      const size_t idx = order[cursor++];
      sources.push_back(pairs[idx].source);
      targets.push_back(pairs[idx].target);
    }
    const Batch batch = make_batch(sources, targets, cfg);
    try {
      const auto fwd =
          forward_loss(params, cfg, batch, /*compute_grads=*/true, tcfg.label_smoothing);
      sgd_step(params, *fwd.grads, tcfg.learning_rate, kGradClipNorm);
    } catch (const InternalError& e) {
      throw InternalError("finetune aborted at step " + std::to_string(step) + ": " + e.what());
    }
    if (step % tcfg.eval_every == 0 || step == tcfg.max_steps) {
      result.snapshots.push_back(snapshot(step, eval_dev_bleu()));
    }
  }
  if (result.snapshots.empty()) {
    // max_steps == 0: evaluate the starting parameters as the only snapshot.
    result.snapshots.push_back(snapshot(0, eval_dev_bleu()));
  }

  std::vector<double> bleus;
  for (const auto& s : result.snapshots) bleus.push_back(*s.dev_bleu);
  result.selected = select_best_checkpoint(bleus);
  return result;
}

}  // namespace d2t

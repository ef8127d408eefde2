#pragma once

// Byte-pair-encoding subword vocabulary with a fixed reserved block:
//   0 PAD, 1 EOS, 2 UNK, 3..102 span sentinels, 103..111 linearization markers.
// Training is greedy merge of the most frequent adjacent pair; ties break
// lexicographically on the concatenated piece so two runs agree bit-for-bit.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2t/common.hpp"

namespace d2t {

inline constexpr int kPadId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kSentinelBase = 3;
inline constexpr int kNumSentinels = 100;
inline constexpr int kMarkerBase = kSentinelBase + kNumSentinels;  // 103

inline const std::vector<std::string>& marker_pieces() {
  static const std::vector<std::string> m = {"<S>",    "<P>",       "<O>",
                                             "<ACT>",  "<SLOT>",    "<PAGE>",
                                             "<SECTION>", "<CELL>", "<HEADER>"};
  return m;
}

inline constexpr int kNumReserved = kMarkerBase + 9;  // 112

inline std::string sentinel_piece(int k) {
  return "⟨X" + std::to_string(k) + "⟩";  // ⟨Xk⟩
}

inline int sentinel_id(int k) { return kSentinelBase + k; }

inline bool is_sentinel_id(int id) {
  return id >= kSentinelBase && id < kSentinelBase + kNumSentinels;
}

// The word-boundary marker; stands as its own base symbol before each word
// and merges into pieces during training.
inline constexpr const char* kWordMarker = "▁";  // ▁

struct Vocab {
  std::vector<std::string> pieces;                          // index = token id
  std::vector<std::pair<std::string, std::string>> merges;  // training order

  int size() const { return static_cast<int>(pieces.size()); }

  int piece_id(std::string_view piece) const {
    auto it = piece_to_id_.find(std::string(piece));
    return it == piece_to_id_.end() ? -1 : it->second;
  }

  void rebuild_index() {
    piece_to_id_.clear();
    for (size_t i = 0; i < pieces.size(); ++i) piece_to_id_[pieces[i]] = static_cast<int>(i);
    merge_rank_.clear();
    for (size_t i = 0; i < merges.size(); ++i) merge_rank_[merges[i]] = static_cast<int>(i);
  }

  int merge_rank(const std::string& a, const std::string& b) const {
    auto it = merge_rank_.find({a, b});
    return it == merge_rank_.end() ? -1 : it->second;
  }

 private:
  std::unordered_map<std::string, int> piece_to_id_;
  std::map<std::pair<std::string, std::string>, int> merge_rank_;
};

namespace detail {

inline std::vector<std::string> reserved_pieces() {
  std::vector<std::string> out;
  out.reserve(kNumReserved);
  out.push_back("<PAD>");
  out.push_back("<EOS>");
  out.push_back("<UNK>");
  for (int k = 0; k < kNumSentinels; ++k) out.push_back(sentinel_piece(k));
  for (const auto& m : marker_pieces()) out.push_back(m);
  return out;
}

// A word as its current symbol sequence plus corpus frequency.
struct BpeWord {
  std::vector<std::string> symbols;
  int64_t freq = 0;
};

}  // namespace detail

// Deterministic greedy BPE. The corpus is whitespace-normalized, split into
// words, and each word becomes ["▁", c1, c2, ...] over UTF-8 characters.
inline Vocab train_bpe(const std::vector<std::string>& corpus, int vocab_size) {
  if (corpus.empty()) throw ValidationError("train_bpe: corpus is empty");

  // Word frequency table. Map iteration keeps everything order-independent.
  std::map<std::string, int64_t> word_freq;
  std::set<std::string> alphabet;
  for (const std::string& line : corpus) {
    for (const std::string& w : split_words(normalize_whitespace(line))) {
      ++word_freq[w];
      for (const std::string& c : utf8_chars(w)) alphabet.insert(c);
    }
  }
  if (word_freq.empty()) throw ValidationError("train_bpe: corpus has no words");
  alphabet.insert(kWordMarker);

  const int base_count = kNumReserved + static_cast<int>(alphabet.size());
  if (vocab_size < base_count) {
    throw ValidationError("train_bpe: vocab_size " + std::to_string(vocab_size) +
                          " below minimum " + std::to_string(base_count) +
                          " (reserved tokens + base alphabet)");
  }

  std::vector<detail::BpeWord> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) {
    detail::BpeWord bw;
    bw.symbols.push_back(kWordMarker);
    for (const std::string& c : utf8_chars(w)) bw.symbols.push_back(c);
    bw.freq = f;
    words.push_back(std::move(bw));
  }

  Vocab v;
  v.pieces = detail::reserved_pieces();
  for (const std::string& c : alphabet) v.pieces.push_back(c);  // sorted by std::set

  while (v.size() < vocab_size) {
    // Count adjacent symbol pairs across word types.
    std::map<std::pair<std::string, std::string>, int64_t> pair_freq;
    for (const auto& w : words) {
      for (size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        pair_freq[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
      }
    }
    if (pair_freq.empty()) {
      throw ValidationError("train_bpe: merges exhausted at " + std::to_string(v.size()) +
                            " pieces; vocab_size " + std::to_string(vocab_size) +
                            " unreachable for this corpus");
    }
    // Most frequent pair; ties break lexicographically on the concatenated
    // piece, then on the pair itself.
    const std::pair<std::string, std::string>* best = nullptr;
    int64_t best_freq = 0;
    std::string best_concat;
    for (const auto& [pair, freq] : pair_freq) {
      std::string concat = pair.first + pair.second;
      if (best == nullptr || freq > best_freq ||
          (freq == best_freq &&
           (concat < best_concat || (concat == best_concat && pair < *best)))) {
        best = &pair;
        best_freq = freq;
        best_concat = std::move(concat);
      }
    }
    const auto merge = *best;
    const std::string merged = merge.first + merge.second;

    for (auto& w : words) {
      std::vector<std::string> out;
      out.reserve(w.symbols.size());
      size_t i = 0;
      while (i < w.symbols.size()) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == merge.first &&
            w.symbols[i + 1] == merge.second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(w.symbols[i]);
          ++i;
        }
      }
      w.symbols = std::move(out);
    }

    v.merges.push_back(merge);
    v.pieces.push_back(merged);
  }

  v.rebuild_index();
  return v;
}

namespace detail {

// Splits a word into base symbols and applies merges in training order.
inline void encode_word(const Vocab& v, const std::string& word, std::vector<int>& out) {
  std::vector<std::string> symbols;
  symbols.push_back(kWordMarker);
  for (const std::string& c : utf8_chars(word)) symbols.push_back(c);

  // Repeatedly apply the lowest-ranked applicable merge.
  for (;;) {
    int best_rank = -1;
    size_t best_pos = 0;
    for (size_t i = 0; i + 1 < symbols.size(); ++i) {
      const int r = v.merge_rank(symbols[i], symbols[i + 1]);
      if (r >= 0 && (best_rank < 0 || r < best_rank)) {
        best_rank = r;
        best_pos = i;
      }
    }
    if (best_rank < 0) break;
    // Merge every non-overlapping occurrence of this pair left-to-right,
    // mirroring how training applied it.
    const std::string& a = symbols[best_pos];
    const std::string b = symbols[best_pos + 1];
    const std::string merged = a + b;
    std::vector<std::string> next;
    next.reserve(symbols.size());
    size_t i = 0;
    while (i < symbols.size()) {
      if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
        next.push_back(merged);
        i += 2;
      } else {
        next.push_back(symbols[i]);
        ++i;
      }
    }
    symbols = std::move(next);
  }

  for (const std::string& s : symbols) {
    const int id = v.piece_id(s);
    out.push_back(id >= 0 ? id : kUnkId);
  }
}

}  // namespace detail

// Encodes whitespace-normalized text. Reserved markers and sentinels match as
// whole space-delimited words before BPE segmentation. EOS is not appended.
inline std::vector<int> encode(const Vocab& v, std::string_view text) {
  std::vector<int> out;
  for (const std::string& w : split_words(text)) {
    const int id = v.piece_id(w);
    if (id >= 0 && id < kNumReserved && id != kPadId && id != kEosId && id != kUnkId) {
      out.push_back(id);  // sentinel or linearization marker as a whole unit
      continue;
    }
    detail::encode_word(v, w, out);
  }
  return out;
}

// Concatenates pieces, maps the word marker to spaces, strips PAD/EOS, and
// whitespace-normalizes. Reserved control pieces decode space-delimited.
inline std::string decode(const Vocab& v, const std::vector<int>& ids) {
  std::string raw;
  for (int id : ids) {
    if (id < 0 || id >= v.size()) {
      throw ValidationError("decode: token id " + std::to_string(id) +
                            " out of range for vocab of size " + std::to_string(v.size()));
    }
    if (id == kPadId || id == kEosId) continue;
    if (id < kNumReserved && id != kUnkId) {
      raw += ' ';
      raw += v.pieces[id];
      raw += ' ';
    } else if (id == kUnkId) {
      raw += " <UNK> ";
    } else {
      raw += v.pieces[id];
    }
  }
  std::string spaced;
  spaced.reserve(raw.size());
  size_t i = 0;
  const std::string marker = kWordMarker;
  while (i < raw.size()) {
    if (raw.compare(i, marker.size(), marker) == 0) {
      spaced += ' ';
      i += marker.size();
    } else {
      spaced += raw[i++];
    }
  }
  return normalize_whitespace(spaced);
}

// ----------------------------- persistence -----------------------------

inline nlohmann::json vocab_to_json(const Vocab& v) {
  nlohmann::json j;
  j["version"] = 1;
  j["vocab_size"] = v.size();
  j["pieces"] = v.pieces;
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : v.merges) merges.push_back({a, b});
  j["merges"] = std::move(merges);
  return j;
}

inline Vocab vocab_from_json(const nlohmann::json& j) {
  if (!j.contains("version") || j["version"].get<int>() != 1) {
    throw ValidationError("vocab file: unsupported version");
  }
  Vocab v;
  v.pieces = j.at("pieces").get<std::vector<std::string>>();
  for (const auto& m : j.at("merges")) {
    v.merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  }
  if (static_cast<int>(v.pieces.size()) != j.at("vocab_size").get<int>()) {
    throw ValidationError("vocab file: vocab_size does not match pieces");
  }
  const auto reserved = detail::reserved_pieces();
  if (v.pieces.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), v.pieces.begin())) {
    throw ValidationError("vocab file: reserved token block does not match version 1 layout");
  }
  v.rebuild_index();
  return v;
}

// Content hash used for tokenizer-consistency checks between checkpoints
// and datasets.
inline std::string vocab_hash(const Vocab& v) {
  return sha256_hex(vocab_to_json(v).dump());
}

}  // namespace d2t

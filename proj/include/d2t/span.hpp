#pragma once

// Span-corruption pretraining objective: non-overlapping token spans are
// replaced by sentinel tokens in the input; the target lists each sentinel
// followed by the tokens it hides, terminated by EOS. splice_spans() inverts
// the construction exactly.

#include <cstdint>
#include <vector>

#include "d2t/common.hpp"
#include "d2t/tokenizer.hpp"

namespace d2t {

struct SpanMaskSpec {
  double corruption_rate = 0.15;
  double mean_span_length = 3.0;

  void validate() const {
    if (!(corruption_rate > 0.0 && corruption_rate < 1.0)) {
      throw ValidationError("span mask: corruption_rate must be in (0, 1)");
    }
    if (mean_span_length < 1.0) {
      throw ValidationError("span mask: mean_span_length must be >= 1");
    }
  }
};

struct SpanCorruption {
  std::vector<int> input;
  std::vector<int> target;
};

struct TokenSpan {
  int start = 0;
  int length = 0;
};

// Deterministic construction from explicit spans (sorted, disjoint, with at
// least one unmasked token between consecutive spans).
inline SpanCorruption apply_span_mask(const std::vector<int>& ids,
                                      const std::vector<TokenSpan>& spans) {
  if (spans.size() > static_cast<size_t>(kNumSentinels)) {
    throw ValidationError("span corruption needs " + std::to_string(spans.size()) +
                          " sentinels; only " + std::to_string(kNumSentinels) + " exist");
  }
  SpanCorruption out;
  size_t pos = 0;
  int sentinel = 0;
  for (const TokenSpan& s : spans) {
    if (s.start < static_cast<int>(pos) || s.length < 1 ||
        s.start + s.length > static_cast<int>(ids.size())) {
      throw ValidationError("apply_span_mask: spans must be sorted, disjoint, and in range");
    }
    while (pos < static_cast<size_t>(s.start)) out.input.push_back(ids[pos++]);
    out.input.push_back(sentinel_id(sentinel));
    out.target.push_back(sentinel_id(sentinel));
    for (int k = 0; k < s.length; ++k) out.target.push_back(ids[pos++]);
    ++sentinel;
  }
  while (pos < ids.size()) out.input.push_back(ids[pos++]);
  out.target.push_back(kEosId);
  return out;
}

// Samples non-overlapping, non-adjacent spans covering roughly
// corruption_rate of the tokens, span lengths geometric with the configured
// mean. Deterministic for a given seed.
inline SpanCorruption span_corrupt(const std::vector<int>& ids, const SpanMaskSpec& spec,
                                   uint64_t seed) {
  spec.validate();
  if (ids.size() < 2) throw ValidationError("span_corrupt: need at least 2 tokens");
  for (int id : ids) {
    // Control ids (PAD/EOS/UNK) and sentinels would break the splice inverse.
    // Linearization markers are ordinary text tokens here: unlabeled corpora
    // may legitimately contain structured fragments.
    if (id < kMarkerBase) {
      throw ValidationError("span_corrupt: input contains control token id " +
                            std::to_string(id));
    }
  }

  const int n = static_cast<int>(ids.size());
  int budget = static_cast<int>(std::lround(spec.corruption_rate * n));
  budget = std::max(1, std::min(budget, n - 1));

  Rng rng(Rng::mix(seed, 0x5350414Eull));  // "SPAN"
  std::vector<uint8_t> blocked(static_cast<size_t>(n), 0);  // span or adjacent
  std::vector<TokenSpan> spans;
  int misses = 0;
  while (budget > 0 && misses < 200) {
    if (spans.size() >= static_cast<size_t>(kNumSentinels)) {
      throw ValidationError("span_corrupt: more than " + std::to_string(kNumSentinels) +
                            " spans needed (sentinel exhaustion)");
    }
    int len = std::min(rng.geometric(spec.mean_span_length), budget);
    len = std::min(len, n);
    const int start = static_cast<int>(rng.below(static_cast<uint64_t>(n - len + 1)));
    bool ok = true;
    for (int j = start; j < start + len; ++j) ok = ok && blocked[static_cast<size_t>(j)] == 0;
    if (!ok) {
      ++misses;
      continue;
    }
    spans.push_back({start, len});
    for (int j = std::max(0, start - 1); j < std::min(n, start + len + 1); ++j) {
      blocked[static_cast<size_t>(j)] = 1;
    }
    budget -= len;
  }

  std::sort(spans.begin(), spans.end(),
            [](const TokenSpan& a, const TokenSpan& b) { return a.start < b.start; });
  return apply_span_mask(ids, spans);
}

// Reconstructs the original token sequence from a corrupted (input, target)
// pair. Inverse of apply_span_mask / span_corrupt by construction.
inline std::vector<int> splice_spans(const std::vector<int>& input,
                                     const std::vector<int>& target) {
  // Index the target: sentinel id -> hidden tokens.
  std::vector<std::vector<int>> spans(kNumSentinels);
  std::vector<bool> present(kNumSentinels, false);
  int current = -1;
  for (int id : target) {
    if (id == kEosId) break;
    if (is_sentinel_id(id)) {
      current = id - kSentinelBase;
      present[static_cast<size_t>(current)] = true;
    } else {
      if (current < 0) throw ValidationError("splice_spans: target does not start with a sentinel");
      spans[static_cast<size_t>(current)].push_back(id);
    }
  }
  std::vector<int> out;
  for (int id : input) {
    if (is_sentinel_id(id)) {
      const int k = id - kSentinelBase;
      if (!present[static_cast<size_t>(k)]) {
        throw ValidationError("splice_spans: sentinel " + std::to_string(k) +
                              " missing from target");
      }
      for (int t : spans[static_cast<size_t>(k)]) out.push_back(t);
    } else {
      out.push_back(id);
    }
  }
  return out;
}

}  // namespace d2t

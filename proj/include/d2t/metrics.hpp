#pragma once

// Corpus evaluation: BLEU, slot error rate, a PARENT-style table-grounded
// F-score, exact-match METEOR-lite, and per-subset aggregation.
//
// All metrics share one tokenization rule: insert spaces around punctuation
// characters, then split on whitespace. Lowercasing happens only where an
// individual metric calls for it.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2t/core_types.hpp"
#include "d2t/linearize.hpp"

namespace d2t {

// ----------------------------- tokenization -----------------------------

namespace detail {

inline bool is_punct_codepoint(uint32_t cp) {
  if (cp < 0x80) {
    return std::ispunct(static_cast<int>(cp)) != 0;
  }
  // Common Unicode punctuation blocks; enough for the corpora this toolkit
  // ingests (quotes, dashes, CJK and fullwidth marks).
  static const std::pair<uint32_t, uint32_t> ranges[] = {
      {0x00A1, 0x00A1}, {0x00A7, 0x00A7}, {0x00AB, 0x00AB}, {0x00B6, 0x00B7},
      {0x00BB, 0x00BB}, {0x00BF, 0x00BF}, {0x2010, 0x2027}, {0x2030, 0x205E},
      {0x2E00, 0x2E7F}, {0x3001, 0x3003}, {0x3008, 0x3011}, {0x3014, 0x301F},
      {0x3030, 0x3030}, {0x303D, 0x303D}, {0xFE50, 0xFE6F}, {0xFF01, 0xFF0F},
      {0xFF1A, 0xFF1F}, {0xFF3B, 0xFF40}, {0xFF5B, 0xFF65},
  };
  for (const auto& [lo, hi] : ranges) {
    if (cp >= lo && cp <= hi) return true;
  }
  return false;
}

}  // namespace detail

inline std::vector<std::string> tokenize_metric(std::string_view text) {
  std::string spaced;
  spaced.reserve(text.size() + 16);
  size_t i = 0;
  while (i < text.size()) {
    const Utf8Char c = utf8_next(text, i);
    if (detail::is_punct_codepoint(c.codepoint)) {
      spaced += ' ';
      spaced.append(text.substr(i, c.length));
      spaced += ' ';
    } else {
      spaced.append(text.substr(i, c.length));
    }
    i += c.length;
  }
  return split_words(spaced);
}

// ----------------------------- BLEU -----------------------------

struct BleuScore {
  double score = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  int64_t hyp_len = 0;
  int64_t ref_len = 0;
};

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, int64_t>;

inline NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)]++;
  }
  return counts;
}

}  // namespace detail

// Case-sensitive corpus BLEU with clipped n-gram precision (n = 1..4),
// per-sentence closest-length reference for the brevity penalty, and
// exponential smoothing: the k-th zero order is replaced by
// 1 / (2^k * hyp_ngram_count).
inline BleuScore corpus_bleu(const std::vector<std::string>& hyps,
                             const std::vector<std::vector<std::string>>& refs) {
  if (hyps.empty()) throw ValidationError("corpus_bleu: empty corpus");
  if (hyps.size() != refs.size()) {
    throw ValidationError("corpus_bleu: hypothesis/reference count mismatch");
  }

  std::array<int64_t, 4> matched{};
  std::array<int64_t, 4> total{};
  int64_t hyp_len = 0;
  int64_t ref_len = 0;

  for (size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty()) {
      throw ValidationError("corpus_bleu: empty reference list at index " + std::to_string(i));
    }
    const auto h = tokenize_metric(hyps[i]);
    hyp_len += static_cast<int64_t>(h.size());

    // Closest reference length; ties resolved toward the shorter reference.
    int64_t best_rl = -1;
    for (const std::string& r : refs[i]) {
      const auto rl = static_cast<int64_t>(tokenize_metric(r).size());
      if (best_rl < 0) {
        best_rl = rl;
        continue;
      }
      const int64_t d_new = std::llabs(rl - static_cast<int64_t>(h.size()));
      const int64_t d_old = std::llabs(best_rl - static_cast<int64_t>(h.size()));
      if (d_new < d_old || (d_new == d_old && rl < best_rl)) best_rl = rl;
    }
    ref_len += best_rl;

    for (int n = 1; n <= 4; ++n) {
      const auto hyp_counts = detail::count_ngrams(h, n);
      detail::NgramCounts max_ref_counts;
      for (const std::string& r : refs[i]) {
        for (const auto& [gram, c] : detail::count_ngrams(tokenize_metric(r), n)) {
          auto& m = max_ref_counts[gram];
          m = std::max(m, c);
        }
      }
      for (const auto& [gram, c] : hyp_counts) {
        total[n - 1] += c;
        auto it = max_ref_counts.find(gram);
        if (it != max_ref_counts.end()) matched[n - 1] += std::min(c, it->second);
      }
    }
  }

  BleuScore out;
  out.hyp_len = hyp_len;
  out.ref_len = ref_len;
  if (hyp_len == 0) return out;  // degenerate: empty hypotheses score 0

  out.brevity_penalty =
      std::min(1.0, std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));

  double log_prec_sum = 0.0;
  int zero_orders = 0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0) {
      // No n-grams of this order anywhere in the hypotheses; the corpus
      // cannot be scored at n-gram order n+1.
      out.score = 0.0;
      return out;
    }
    double p;
    if (matched[n] > 0) {
      p = static_cast<double>(matched[n]) / static_cast<double>(total[n]);
    } else {
      ++zero_orders;
      p = 1.0 / (std::pow(2.0, zero_orders) * static_cast<double>(total[n]));
    }
    out.precisions[n] = p;
    log_prec_sum += std::log(p);
  }
  out.score = out.brevity_penalty * std::exp(log_prec_sum / 4.0) * 100.0;
  return out;
}

// ----------------------------- slot error rate -----------------------------

struct SerConfig {
  // Slot values that cannot be checked by exact match; approximates the
  // "does not cover all slots" caveat and is deliberately configurable.
  std::set<std::string> excluded_values = {"?", "yes", "no", "none", ""};
};

struct SerScore {
  double rate = 0.0;
  std::vector<bool> flags;  // per evaluated example
  int64_t skipped_slots = 0;
};

// Flags an example when any checkable slot value fails a case-insensitive,
// whitespace-normalized substring match against the hypothesis.
inline SerScore slot_error_rate(const std::vector<Example>& examples,
                                const std::vector<std::string>& hyps,
                                const SerConfig& cfg = {}) {
  if (examples.size() != hyps.size()) {
    throw ValidationError("slot_error_rate: example/hypothesis count mismatch");
  }
  if (examples.empty()) throw ValidationError("slot_error_rate: empty corpus");

  SerScore out;
  int64_t flagged = 0;
  for (size_t i = 0; i < examples.size(); ++i) {
    const auto* acts = std::get_if<DialogActMR>(&examples[i].input);
    if (acts == nullptr) {
      throw ValidationError("slot_error_rate: example '" + examples[i].id +
                            "' is not a meaning-representation input");
    }
    const std::string hyp = to_lower_ascii(normalize_whitespace(hyps[i]));
    bool flag = false;
    for (const DialogAct& act : *acts) {
      for (const auto& [key, value] : act.slots) {
        const std::string v = to_lower_ascii(normalize_whitespace(value));
        if (cfg.excluded_values.count(v)) {
          ++out.skipped_slots;
          continue;
        }
        if (hyp.find(v) == std::string::npos) flag = true;
      }
    }
    out.flags.push_back(flag);
    if (flag) ++flagged;
  }
  out.rate = static_cast<double>(flagged) / static_cast<double>(examples.size());
  return out;
}

// ----------------------------- PARENT -----------------------------

struct ParentScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

struct ParentRecord {
  std::string key;
  std::string value;
};

// Converts any structured input to key/value records. Field text goes
// through the linearization normalization so record tokens line up with the
// surface forms a model is asked to produce.
inline std::vector<ParentRecord> parent_records(const StructuredInput& input) {
  std::vector<ParentRecord> records;
  if (const auto* triples = std::get_if<TripleSet>(&input)) {
    for (const Triple& t : *triples) {
      records.push_back({prep_predicate(t.predicate, false), prep_field(t.object, false)});
    }
  } else if (const auto* acts = std::get_if<DialogActMR>(&input)) {
    for (const DialogAct& a : *acts) {
      for (const auto& [k, v] : a.slots) {
        records.push_back({prep_field(k, false), prep_field(v, false)});
      }
    }
  } else {
    const auto& table = std::get<HighlightedTable>(input);
    for (const HighlightedCell& c : table.cells) {
      records.push_back({prep_field(c.header, false), prep_field(c.value, false)});
    }
  }
  return records;
}

inline int64_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const size_t na = a.size(), nb = b.size();
  std::vector<int64_t> prev(nb + 1, 0), cur(nb + 1, 0);
  for (size_t i = 1; i <= na; ++i) {
    for (size_t j = 1; j <= nb; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[nb];
}

// Geometric mean over four n-gram order values with BLEU-style exponential
// smoothing. `num`/`den` are the per-order sums; a zero denominator is
// treated as an empty order with effective count 1 so that the order set is
// stable under hypothesis edits. Smoothed values are capped at 1.
inline double smoothed_geomean(const std::array<double, 4>& num, const std::array<double, 4>& den,
                               bool zero_den_is_one) {
  double log_sum = 0.0;
  int zero_orders = 0;
  for (int n = 0; n < 4; ++n) {
    double v;
    if (den[n] <= 0.0 && zero_den_is_one) {
      v = 1.0;
    } else if (num[n] > 0.0) {
      v = num[n] / den[n];
    } else {
      ++zero_orders;
      const double d = den[n] > 0.0 ? den[n] : 1.0;
      v = std::min(1.0, 1.0 / (std::pow(2.0, zero_orders) * d));
    }
    log_sum += std::log(v);
  }
  return std::exp(log_sum / 4.0);
}

struct ParentExampleScore {
  double precision, recall, f1;
};

inline ParentExampleScore parent_example(const std::vector<std::string>& hyp_tokens,
                                         const std::vector<std::string>& ref_tokens,
                                         const std::vector<ParentRecord>& records) {
  std::set<std::string> table_tokens;
  for (const ParentRecord& r : records) {
    for (const std::string& t : tokenize_metric(r.key)) table_tokens.insert(t);
    for (const std::string& t : tokenize_metric(r.value)) table_tokens.insert(t);
  }
  const auto in_table = [&](const std::string& t) { return table_tokens.count(t) > 0; };

  // Precision: clipped reference matches get full credit; excess hypothesis
  // mass is credited only when the entire n-gram is table-entailed. The
  // all-or-nothing weight keeps precision monotone under appended
  // hallucinated tokens.
  std::array<double, 4> p_num{}, p_den{};
  for (int n = 1; n <= 4; ++n) {
    const auto hyp_counts = count_ngrams(hyp_tokens, n);
    const auto ref_counts = count_ngrams(ref_tokens, n);
    for (const auto& [gram, ch] : hyp_counts) {
      auto it = ref_counts.find(gram);
      const int64_t cr = it == ref_counts.end() ? 0 : it->second;
      const int64_t clipped = std::min(ch, cr);
      bool all_in_table = true;
      for (const std::string& t : gram) all_in_table = all_in_table && in_table(t);
      p_num[n - 1] += static_cast<double>(clipped) +
                      static_cast<double>(ch - clipped) * (all_in_table ? 1.0 : 0.0);
      p_den[n - 1] += static_cast<double>(ch);
    }
  }
  const double precision =
      hyp_tokens.empty() ? 0.0 : smoothed_geomean(p_num, p_den, /*zero_den_is_one=*/false);

  // Reference recall: reference n-grams weighted by the fraction of their
  // tokens the table entails; 0/0 orders count as 1.
  std::array<double, 4> r_num{}, r_den{};
  for (int n = 1; n <= 4; ++n) {
    const auto hyp_counts = count_ngrams(hyp_tokens, n);
    for (const auto& [gram, cr] : count_ngrams(ref_tokens, n)) {
      double entailed = 0.0;
      for (const std::string& t : gram) entailed += in_table(t) ? 1.0 : 0.0;
      const double w = entailed / static_cast<double>(gram.size());
      auto it = hyp_counts.find(gram);
      const int64_t ch = it == hyp_counts.end() ? 0 : it->second;
      r_num[n - 1] += static_cast<double>(std::min(ch, cr)) * w;
      r_den[n - 1] += static_cast<double>(cr) * w;
    }
  }
  const double recall_ref = smoothed_geomean(r_num, r_den, /*zero_den_is_one=*/true);

  // Table recall: a record counts as expressed when its value's LCS ratio
  // against the hypothesis reaches 0.5.
  int64_t rec_total = 0, rec_hit = 0;
  for (const ParentRecord& r : records) {
    const auto value_tokens = tokenize_metric(r.value);
    if (value_tokens.empty()) continue;
    ++rec_total;
    const double ratio = static_cast<double>(lcs_length(value_tokens, hyp_tokens)) /
                         static_cast<double>(value_tokens.size());
    if (ratio >= 0.5) ++rec_hit;
  }
  const double recall_table =
      rec_total == 0 ? 1.0 : static_cast<double>(rec_hit) / static_cast<double>(rec_total);

  const double recall = std::sqrt(recall_ref) * std::sqrt(recall_table);
  const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  return {precision, recall, f1};
}

}  // namespace detail

// PARENT-style word-overlap metric; corpus values are arithmetic means of
// per-example precision/recall/F1. Uses the first reference per example.
inline ParentScore parent(const std::vector<std::string>& hyps,
                          const std::vector<std::vector<std::string>>& refs,
                          const std::vector<StructuredInput>& inputs) {
  if (hyps.size() != refs.size() || hyps.size() != inputs.size()) {
    throw ValidationError("parent: hypothesis/reference/input count mismatch");
  }
  if (hyps.empty()) throw ValidationError("parent: empty corpus");

  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty()) {
      throw ValidationError("parent: empty reference list at index " + std::to_string(i));
    }
    const auto s = detail::parent_example(tokenize_metric(hyps[i]), tokenize_metric(refs[i][0]),
                                          detail::parent_records(inputs[i]));
    p_sum += s.precision;
    r_sum += s.recall;
    f_sum += s.f1;
  }
  const auto n = static_cast<double>(hyps.size());
  return {p_sum / n, r_sum / n, f_sum / n};
}

// ----------------------------- METEOR-lite -----------------------------

namespace detail {

// Greedy in-order alignment of exact lowercased unigram matches. Each hyp
// token prefers continuing the previous run (prev ref position + 1), else
// takes the smallest unused occurrence, keeping chunk counts stable.
inline double meteor_lite_sentence(const std::vector<std::string>& hyp,
                                   const std::vector<std::string>& ref) {
  std::vector<bool> ref_used(ref.size(), false);
  int64_t matches = 0;
  int64_t chunks = 0;
  int64_t prev_ref = -2;
  bool in_chunk = false;
  for (size_t i = 0; i < hyp.size(); ++i) {
    int64_t pos = -1;
    const size_t cont = static_cast<size_t>(prev_ref + 1);
    if (in_chunk && cont < ref.size() && !ref_used[cont] && ref[cont] == hyp[i]) {
      pos = static_cast<int64_t>(cont);
    } else {
      for (size_t j = 0; j < ref.size(); ++j) {
        if (!ref_used[j] && ref[j] == hyp[i]) {
          pos = static_cast<int64_t>(j);
          break;
        }
      }
    }
    if (pos < 0) {
      in_chunk = false;
      prev_ref = -2;
      continue;
    }
    ref_used[static_cast<size_t>(pos)] = true;
    ++matches;
    if (!(in_chunk && pos == prev_ref + 1)) ++chunks;
    in_chunk = true;
    prev_ref = pos;
  }
  if (matches == 0) return 0.0;
  const double p = static_cast<double>(matches) / static_cast<double>(hyp.size());
  const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty =
      0.5 * std::pow(static_cast<double>(chunks) / static_cast<double>(matches), 3.0);
  return fmean * (1.0 - penalty);
}

}  // namespace detail

// Exact-match METEOR variant: no stemming or synonym matching. Per sentence
// the best-scoring reference wins; the corpus score is the mean.
inline double meteor_lite(const std::vector<std::string>& hyps,
                          const std::vector<std::vector<std::string>>& refs) {
  if (hyps.size() != refs.size()) {
    throw ValidationError("meteor_lite: hypothesis/reference count mismatch");
  }
  if (hyps.empty()) throw ValidationError("meteor_lite: empty corpus");

  double sum = 0.0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty()) {
      throw ValidationError("meteor_lite: empty reference list at index " + std::to_string(i));
    }
    std::vector<std::string> h;
    for (const std::string& t : tokenize_metric(hyps[i])) h.push_back(to_lower_ascii(t));
    double best = 0.0;
    for (const std::string& ref : refs[i]) {
      std::vector<std::string> r;
      for (const std::string& t : tokenize_metric(ref)) r.push_back(to_lower_ascii(t));
      best = std::max(best, detail::meteor_lite_sentence(h, r));
    }
    sum += best;
  }
  return sum / static_cast<double>(hyps.size());
}

// ----------------------------- subset reports -----------------------------

enum class MetricKind { Bleu, Ser, Parent, MeteorLite };

inline MetricKind metric_kind_from_string(std::string_view s) {
  if (s == "bleu") return MetricKind::Bleu;
  if (s == "ser") return MetricKind::Ser;
  if (s == "parent") return MetricKind::Parent;
  if (s == "meteor_lite" || s == "meteor") return MetricKind::MeteorLite;
  throw ValidationError("unknown metric '" + std::string(s) +
                        "' (expected bleu, ser, parent, or meteor_lite)");
}

struct SubsetResult {
  int64_t count = 0;
  std::optional<BleuScore> bleu;
  std::optional<ParentScore> parent;
  std::optional<double> ser;
  std::optional<double> meteor_lite;
};

// Per-subset metric values for one prediction file. Subsets partition the
// evaluated examples; "Overall" always covers all of them.
struct MetricReport {
  std::vector<std::pair<std::string, SubsetResult>> subsets;

  const SubsetResult* find(std::string_view name) const {
    for (const auto& [n, r] : subsets) {
      if (n == name) return &r;
    }
    return nullptr;
  }
};

inline MetricReport evaluate_subsets(const std::vector<Example>& examples,
                                     const std::vector<std::string>& hyps,
                                     const std::set<MetricKind>& which) {
  if (examples.size() != hyps.size()) {
    throw ValidationError("evaluate_subsets: example/hypothesis count mismatch");
  }
  if (examples.empty()) throw ValidationError("evaluate_subsets: empty corpus");
  if (which.count(MetricKind::Ser)) {
    for (const Example& ex : examples) {
      if (!std::holds_alternative<DialogActMR>(ex.input)) {
        throw ValidationError("evaluate_subsets: SER requested but example '" + ex.id +
                              "' is not a meaning-representation input");
      }
    }
  }

  // Overall first, then subsets in canonical order when present.
  std::vector<std::pair<std::string, std::vector<size_t>>> groups;
  groups.emplace_back("Overall", std::vector<size_t>{});
  for (size_t i = 0; i < examples.size(); ++i) groups[0].second.push_back(i);
  for (Subset s : {Subset::Seen, Subset::Unseen, Subset::Overlap, Subset::NonOverlap}) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < examples.size(); ++i) {
      if (examples[i].subset == s) idx.push_back(i);
    }
    if (!idx.empty()) groups.emplace_back(subset_name(s), std::move(idx));
  }
  if (groups.size() > 1) {
    // Unsplit examples only form a named group when another subset exists;
    // named subsets must partition the evaluated examples.
    std::vector<size_t> idx;
    for (size_t i = 0; i < examples.size(); ++i) {
      if (examples[i].subset == Subset::Unsplit) idx.push_back(i);
    }
    if (!idx.empty()) groups.emplace_back(subset_name(Subset::Unsplit), std::move(idx));
  }

  MetricReport report;
  for (auto& [name, idx] : groups) {
    SubsetResult res;
    res.count = static_cast<int64_t>(idx.size());
    std::vector<Example> sub_ex;
    std::vector<std::string> sub_hyps;
    std::vector<std::vector<std::string>> sub_refs;
    std::vector<StructuredInput> sub_inputs;
    for (size_t i : idx) {
      sub_ex.push_back(examples[i]);
      sub_hyps.push_back(hyps[i]);
      sub_refs.push_back(examples[i].references);
      sub_inputs.push_back(examples[i].input);
    }
    if (which.count(MetricKind::Bleu)) res.bleu = corpus_bleu(sub_hyps, sub_refs);
    if (which.count(MetricKind::Parent)) res.parent = parent(sub_hyps, sub_refs, sub_inputs);
    if (which.count(MetricKind::Ser)) res.ser = slot_error_rate(sub_ex, sub_hyps).rate;
    if (which.count(MetricKind::MeteorLite)) res.meteor_lite = meteor_lite(sub_hyps, sub_refs);
    report.subsets.emplace_back(name, std::move(res));
  }
  return report;
}

// ----------------------------- report JSON -----------------------------

inline nlohmann::json metric_report_to_json(const MetricReport& report) {
  nlohmann::json subsets = nlohmann::json::array();
  for (const auto& [name, r] : report.subsets) {
    nlohmann::json j;
    j["subset"] = name;
    j["count"] = r.count;
    if (r.bleu) {
      j["bleu"] = {{"score", r.bleu->score},
                   {"precisions", r.bleu->precisions},
                   {"brevity_penalty", r.bleu->brevity_penalty},
                   {"hyp_len", r.bleu->hyp_len},
                   {"ref_len", r.bleu->ref_len}};
    }
    if (r.parent) {
      j["parent"] = {{"precision", r.parent->precision},
                     {"recall", r.parent->recall},
                     {"f1", r.parent->f1}};
    }
    if (r.ser) j["ser"] = *r.ser;
    if (r.meteor_lite) j["meteor_lite"] = *r.meteor_lite;
    subsets.push_back(std::move(j));
  }
  return nlohmann::json{{"subsets", std::move(subsets)}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport report;
  for (const auto& s : j.at("subsets")) {
    SubsetResult r;
    r.count = s.at("count").get<int64_t>();
    if (s.contains("bleu")) {
      BleuScore b;
      b.score = s["bleu"].at("score").get<double>();
      b.precisions = s["bleu"].at("precisions").get<std::array<double, 4>>();
      b.brevity_penalty = s["bleu"].at("brevity_penalty").get<double>();
      b.hyp_len = s["bleu"].at("hyp_len").get<int64_t>();
      b.ref_len = s["bleu"].at("ref_len").get<int64_t>();
      r.bleu = b;
    }
    if (s.contains("parent")) {
      ParentScore p;
      p.precision = s["parent"].at("precision").get<double>();
      p.recall = s["parent"].at("recall").get<double>();
      p.f1 = s["parent"].at("f1").get<double>();
      r.parent = p;
    }
    if (s.contains("ser")) r.ser = s["ser"].get<double>();
    if (s.contains("meteor_lite")) r.meteor_lite = s["meteor_lite"].get<double>();
    report.subsets.emplace_back(s.at("subset").get<std::string>(), std::move(r));
  }
  return report;
}

}  // namespace d2t

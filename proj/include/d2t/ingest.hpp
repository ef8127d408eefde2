#pragma once

// Line-delimited JSON ingestion for the three dataset formats, canonical
// re-serialization, and the seed-reproducible synthetic triple-to-text
// generator. Rejected lines never abort a file; they are recorded in the
// report and skipped.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2t/core_types.hpp"
#include "d2t/linearize.hpp"

namespace d2t {

struct IngestReport {
  std::string file;
  int64_t parsed = 0;
  int64_t rejected = 0;
  std::vector<std::pair<int64_t, std::string>> violations;  // (1-based line, message)
};

enum class DataFormat { WebNLG, MultiWoz, ToTTo };

inline DataFormat data_format_from_string(std::string_view s) {
  if (s == "webnlg") return DataFormat::WebNLG;
  if (s == "multiwoz") return DataFormat::MultiWoz;
  if (s == "totto") return DataFormat::ToTTo;
  throw ValidationError("unknown data format '" + std::string(s) +
                        "' (expected webnlg, multiwoz, or totto)");
}

namespace detail {

inline std::string norm_str(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw ValidationError(std::string(key) + " is not a string");
  return normalize_whitespace(v.get<std::string>());
}

inline std::vector<std::string> norm_references(const nlohmann::json& j) {
  const auto& refs = j.at("references");
  if (!refs.is_array()) throw ValidationError("references is not an array");
  std::vector<std::string> out;
  for (const auto& r : refs) {
    if (!r.is_string()) throw ValidationError("reference is not a string");
    out.push_back(normalize_whitespace(r.get<std::string>()));
  }
  return out;
}

inline Example example_from_webnlg_json(const nlohmann::json& j) {
  Example ex;
  ex.id = norm_str(j, "id");
  TripleSet triples;
  for (const auto& t : j.at("triples")) {
    triples.push_back(Triple{norm_str(t, "subject"), norm_str(t, "predicate"),
                             norm_str(t, "object")});
  }
  ex.input = std::move(triples);
  ex.references = norm_references(j);
  ex.subset = j.at("seen").get<bool>() ? Subset::Seen : Subset::Unseen;
  return ex;
}

inline Example example_from_multiwoz_json(const nlohmann::json& j) {
  Example ex;
  ex.id = norm_str(j, "id");
  DialogActMR acts;
  for (const auto& a : j.at("acts")) {
    DialogAct act;
    act.act_type = norm_str(a, "act");
    for (const auto& s : a.at("slots")) {
      if (!s.is_array() || s.size() != 2) {
        throw ValidationError("slot is not a [key, value] pair");
      }
      act.slots.emplace_back(normalize_whitespace(s.at(0).get<std::string>()),
                             normalize_whitespace(s.at(1).get<std::string>()));
    }
    acts.push_back(std::move(act));
  }
  ex.input = std::move(acts);
  ex.references = norm_references(j);
  ex.subset = Subset::Unsplit;
  return ex;
}

inline Example example_from_totto_json(const nlohmann::json& j) {
  Example ex;
  ex.id = norm_str(j, "id");
  HighlightedTable table;
  table.page_title = norm_str(j, "page_title");
  table.section_title = norm_str(j, "section_title");
  for (const auto& c : j.at("highlighted_cells")) {
    HighlightedCell cell;
    cell.row = c.at("row").get<int>();
    cell.col = c.at("col").get<int>();
    cell.header = norm_str(c, "header");
    cell.value = norm_str(c, "value");
    table.cells.push_back(std::move(cell));
  }
  ex.input = std::move(table);
  ex.references = norm_references(j);
  ex.subset = j.at("overlap").get<bool>() ? Subset::Overlap : Subset::NonOverlap;
  return ex;
}

template <class FromJson>
std::pair<std::vector<Example>, IngestReport> parse_lines(const std::vector<std::string>& lines,
                                                          FromJson&& from_json) {
  std::vector<Example> examples;
  IngestReport report;
  std::set<std::string> seen_ids;
  int64_t line_no = 0;
  for (const std::string& line : lines) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      Example ex = from_json(j);
      auto violations = validate_example(ex);
      if (violations.empty() && !seen_ids.insert(ex.id).second) {
        violations.push_back("duplicate id '" + ex.id + "'");
      }
      if (!violations.empty()) {
        ++report.rejected;
        report.violations.emplace_back(line_no, join(violations, "; "));
        continue;
      }
      examples.push_back(std::move(ex));
      ++report.parsed;
    } catch (const nlohmann::json::exception& e) {
      ++report.rejected;
      report.violations.emplace_back(line_no, std::string("malformed JSON: ") + e.what());
    } catch (const ValidationError& e) {
      ++report.rejected;
      report.violations.emplace_back(line_no, e.what());
    }
  }
  return {std::move(examples), std::move(report)};
}

}  // namespace detail

inline std::pair<std::vector<Example>, IngestReport> parse_webnlg(
    const std::vector<std::string>& lines) {
  return detail::parse_lines(lines, detail::example_from_webnlg_json);
}

inline std::pair<std::vector<Example>, IngestReport> parse_multiwoz(
    const std::vector<std::string>& lines) {
  return detail::parse_lines(lines, detail::example_from_multiwoz_json);
}

inline std::pair<std::vector<Example>, IngestReport> parse_totto(
    const std::vector<std::string>& lines) {
  return detail::parse_lines(lines, detail::example_from_totto_json);
}

inline std::pair<std::vector<Example>, IngestReport> parse_dataset_lines(
    const std::vector<std::string>& lines, DataFormat format) {
  switch (format) {
    case DataFormat::WebNLG: return parse_webnlg(lines);
    case DataFormat::MultiWoz: return parse_multiwoz(lines);
    case DataFormat::ToTTo: return parse_totto(lines);
  }
  throw InternalError("unreachable data format");
}

// ----------------------------- serialization -----------------------------

// Canonical JSON for one example, matching the ingestion schema of its
// format. parse(serialize(ex)) == ex for any valid example.
inline nlohmann::json example_to_json(const Example& ex) {
  nlohmann::json j;
  j["id"] = ex.id;
  if (const auto* triples = std::get_if<TripleSet>(&ex.input)) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Triple& t : *triples) {
      arr.push_back({{"subject", t.subject}, {"predicate", t.predicate}, {"object", t.object}});
    }
    j["triples"] = std::move(arr);
    j["references"] = ex.references;
    j["seen"] = ex.subset == Subset::Seen;
  } else if (const auto* acts = std::get_if<DialogActMR>(&ex.input)) {
    nlohmann::json arr = nlohmann::json::array();
    for (const DialogAct& a : *acts) {
      nlohmann::json slots = nlohmann::json::array();
      for (const auto& [k, v] : a.slots) slots.push_back({k, v});
      arr.push_back({{"act", a.act_type}, {"slots", std::move(slots)}});
    }
    j["acts"] = std::move(arr);
    j["references"] = ex.references;
  } else {
    const auto& table = std::get<HighlightedTable>(ex.input);
    j["page_title"] = table.page_title;
    j["section_title"] = table.section_title;
    nlohmann::json cells = nlohmann::json::array();
    for (const HighlightedCell& c : table.cells) {
      cells.push_back(
          {{"row", c.row}, {"col", c.col}, {"header", c.header}, {"value", c.value}});
    }
    j["highlighted_cells"] = std::move(cells);
    j["references"] = ex.references;
    j["overlap"] = ex.subset == Subset::Overlap;
  }
  return j;
}

inline std::string serialize_examples(const std::vector<Example>& examples) {
  std::string out;
  for (const Example& ex : examples) {
    out += example_to_json(ex).dump();
    out += '\n';
  }
  return out;
}

// ----------------------------- file helpers -----------------------------

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("short write to file: " + path);
}

// ----------------------------- synthetic data -----------------------------

struct SyntheticSpec {
  uint64_t seed = 0;
  int n_train = 0;
  int n_dev = 0;
  int n_test = 0;
  int n_entities = 0;
  int n_relations = 0;
  int holdout_relations = 0;
};

namespace detail {

// Relations are synthesized from a unique verb stem, a preposition, and a
// connective class. The predicate carries the stem and preposition
// (camelCase, recovered by the linearizer); the connective appears only in
// reference text, so a model can learn it only from examples or from
// unlabeled text that mentions the relation.
inline std::string synthetic_relation_stem(int i) {
  static const char* syllables[] = {"dar", "fen", "gor", "hul", "jin", "kel",
                                    "mor", "nis", "pra", "quo", "rud", "tav"};
  constexpr int n = 12;
  std::string stem;
  stem += syllables[i % n];
  stem += syllables[(i / n) % n];
  if (i >= n * n) stem += syllables[(i / (n * n)) % n];
  return stem;
}

inline std::string synthetic_relation_prep(int i) {
  static const char* preps[] = {"near",   "against", "beyond", "across",
                                "within", "along",   "around", "before"};
  return preps[(i * 7 + 3) % 8];
}

inline std::string synthetic_relation_predicate(int i) {
  std::string prep = synthetic_relation_prep(i);
  prep[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(prep[0])));
  return synthetic_relation_stem(i) + prep;  // e.g. "darfenNear"
}

inline std::string synthetic_relation_phrase(int i) {
  const std::string core = synthetic_relation_stem(i) + " " + synthetic_relation_prep(i);
  switch ((i * 5 + 1) % 3) {
    case 0: return "was " + core;
    case 1: return "is " + core;
    default: return core;
  }
}

inline std::string synthetic_entity_name(int i) {
  static const char* syllables[] = {"ba", "re", "ki", "lo",  "mu", "na",
                                    "pol", "sa", "tu", "ve", "wo", "zen"};
  constexpr int n = 12;
  std::string name;
  name += syllables[i % n];
  name += syllables[(i / n) % n];
  if (i >= n * n) name += syllables[(i / (n * n)) % n];
  name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
  return name;
}

inline Example synthetic_example(Rng& rng, const SyntheticSpec& spec, const std::string& id,
                                 int relation, Subset subset) {
  const int s = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_entities)));
  int o = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_entities)));
  while (o == s && spec.n_entities > 1) {
    o = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_entities)));
  }
  const std::string subj = synthetic_entity_name(s);
  const std::string obj = synthetic_entity_name(o);
  Example ex;
  ex.id = id;
  ex.input = TripleSet{Triple{subj, synthetic_relation_predicate(relation), obj}};
  ex.references = {subj + " " + synthetic_relation_phrase(relation) + " " + obj};
  ex.subset = subset;
  return ex;
}

}  // namespace detail

// Deterministic triple-to-text dataset. Train/dev draw only from the first
// (n_relations - holdout_relations) relations; the test split alternates
// seen/held-out relations so generalization to unseen relations is
// measurable.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_train <= 0 || spec.n_dev <= 0 || spec.n_test <= 0) {
    throw ValidationError("generate_synthetic: split sizes must be positive");
  }
  if (spec.n_entities <= 1 || spec.n_relations <= 0) {
    throw ValidationError("generate_synthetic: need at least 2 entities and 1 relation");
  }
  if (spec.holdout_relations < 0 || spec.holdout_relations >= spec.n_relations) {
    throw ValidationError("generate_synthetic: holdout_relations must be < n_relations");
  }

  const int n_seen_relations = spec.n_relations - spec.holdout_relations;
  Dataset ds;
  ds.name = DatasetName::Synthetic;

  Rng rng(Rng::mix(spec.seed, 0x53594E54ull));  // "SYNT"
  for (int i = 0; i < spec.n_train; ++i) {
    const int rel = static_cast<int>(rng.below(static_cast<uint64_t>(n_seen_relations)));
    ds.train.push_back(detail::synthetic_example(rng, spec, "train-" + std::to_string(i),
                                                 rel, Subset::Seen));
  }
  for (int i = 0; i < spec.n_dev; ++i) {
    const int rel = static_cast<int>(rng.below(static_cast<uint64_t>(n_seen_relations)));
    ds.dev.push_back(
        detail::synthetic_example(rng, spec, "dev-" + std::to_string(i), rel, Subset::Seen));
  }
  for (int i = 0; i < spec.n_test; ++i) {
    const bool unseen = spec.holdout_relations > 0 && (i % 2 == 1);
    int rel;
    if (unseen) {
      rel = n_seen_relations +
            static_cast<int>(rng.below(static_cast<uint64_t>(spec.holdout_relations)));
    } else {
      rel = static_cast<int>(rng.below(static_cast<uint64_t>(n_seen_relations)));
    }
    ds.test.push_back(detail::synthetic_example(rng, spec, "test-" + std::to_string(i), rel,
                                                unseen ? Subset::Unseen : Subset::Seen));
  }
  return ds;
}

// Unlabeled text over the full entity/relation inventories (held-out
// relations included), standing in for a large web corpus during span-mask
// pretraining. Most lines group plain fact sentences; a fraction also carry
// a marker-delimited graph fragment next to the sentence restating it, the
// way web text mixes infobox-like structure with prose.
inline std::vector<std::string> generate_synthetic_pretrain_corpus(const SyntheticSpec& spec,
                                                                   int n_lines,
                                                                   int sentences_per_line = 3) {
  if (n_lines <= 0 || sentences_per_line <= 0) {
    throw ValidationError("generate_synthetic_pretrain_corpus: counts must be positive");
  }
  Rng rng(Rng::mix(spec.seed, 0x50524554ull));  // "PRET"
  std::vector<std::string> lines;
  lines.reserve(static_cast<size_t>(n_lines));
  for (int i = 0; i < n_lines; ++i) {
    const auto draw_fact = [&]() {
      const int rel = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_relations)));
      const int s = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_entities)));
      int o = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_entities)));
      while (o == s && spec.n_entities > 1) {
        o = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_entities)));
      }
      return Triple{detail::synthetic_entity_name(s), detail::synthetic_relation_predicate(rel),
                    detail::synthetic_entity_name(o)};
    };
    const auto verbalize = [&](const Triple& t) {
      // recover the relation index from the predicate to pick its phrase
      for (int r = 0; r < spec.n_relations; ++r) {
        if (detail::synthetic_relation_predicate(r) == t.predicate) {
          return t.subject + " " + detail::synthetic_relation_phrase(r) + " " + t.object;
        }
      }
      throw InternalError("verbalize: unknown synthetic predicate " + t.predicate);
    };

    std::vector<std::string> parts;
    if (i % 3 == 0) {
      // structured fragment followed by the prose restating it
      const Triple t = draw_fact();
      LinearizationConfig lcfg;
      lcfg.include_task_prefix = false;
      parts.push_back(linearize(TripleSet{t}, lcfg));
      parts.push_back(verbalize(t));
      for (int k = 2; k < sentences_per_line; ++k) parts.push_back(verbalize(draw_fact()));
    } else {
      for (int k = 0; k < sentences_per_line; ++k) parts.push_back(verbalize(draw_fact()));
    }
    lines.push_back(join(parts, " . "));
  }
  return lines;
}

}  // namespace d2t

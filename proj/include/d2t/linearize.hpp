#pragma once

// Deterministic flattening of structured inputs into the flat strings the
// model consumes. Grammar, field normalization, and escaping are fixed here;
// changing them must not require touching the model.

#include <string>
#include <string_view>
#include <vector>

#include "d2t/core_types.hpp"

namespace d2t {

struct LinearizationConfig {
  bool include_task_prefix = true;
  bool lowercase = false;
};

namespace detail {

// Field text preparation: escape "<" so marker tokens stay unique, map
// underscores to spaces, then whitespace-normalize.
inline std::string prep_field(std::string_view raw, bool lowercase) {
  std::string s(raw);
  for (char& c : s) {
    if (c == '<') c = '(';
    if (c == '_') c = ' ';
  }
  if (lowercase) s = to_lower_ascii(s);
  return normalize_whitespace(s);
}

// Predicates additionally split camelCase at lower-to-upper boundaries and
// lowercase, bringing graph identifiers into natural-language distribution.
inline std::string prep_predicate(std::string_view raw, bool /*lowercase*/) {
  std::string spaced;
  spaced.reserve(raw.size() + 8);
  char prev = '\0';
  for (char c : raw) {
    if (std::islower(static_cast<unsigned char>(prev)) &&
        std::isupper(static_cast<unsigned char>(c))) {
      spaced.push_back(' ');
    }
    spaced.push_back(c);
    prev = c;
  }
  return to_lower_ascii(prep_field(spaced, false));
}

}  // namespace detail

// Flattens one structured input. Output is fully determined by (input, cfg)
// and never empty for a valid input; field markers appear in input order.
inline std::string linearize(const StructuredInput& input, const LinearizationConfig& cfg) {
  const bool lc = cfg.lowercase;
  std::string out;

  if (const auto* triples = std::get_if<TripleSet>(&input)) {
    if (cfg.include_task_prefix) out += "translate from Graph to Text:";
    for (const Triple& t : *triples) {
      out += " <S> " + detail::prep_field(t.subject, lc);
      out += " <P> " + detail::prep_predicate(t.predicate, lc);
      out += " <O> " + detail::prep_field(t.object, lc);
    }
  } else if (const auto* acts = std::get_if<DialogActMR>(&input)) {
    if (cfg.include_task_prefix) out += "translate from MR to Text:";
    for (const DialogAct& a : *acts) {
      out += " <ACT> " + detail::prep_field(a.act_type, lc);
      for (const auto& [key, value] : a.slots) {
        // "=" in keys is escaped so the key/value separator stays unambiguous.
        std::string k = detail::prep_field(key, lc);
        for (char& c : k) {
          if (c == '=') c = ':';
        }
        const std::string v = detail::prep_field(value, lc);
        out += " <SLOT> " + k;
        if (!v.empty()) out += " = " + v;
      }
    }
  } else {
    const auto& table = std::get<HighlightedTable>(input);
    if (cfg.include_task_prefix) out += "translate from Table to Text:";
    out += " <PAGE> " + detail::prep_field(table.page_title, lc);
    out += " <SECTION> " + detail::prep_field(table.section_title, lc);
    for (const HighlightedCell& c : table.cells) {
      out += " <CELL> " + detail::prep_field(c.value, lc);
      out += " <HEADER> " + detail::prep_field(c.header, lc);
    }
  }
  return normalize_whitespace(out);
}

// One (source, target) pair per example-reference combination; an example
// with k references contributes k pairs with identical sources.
struct LinearizedPair {
  std::string source;
  std::string target;
  size_t example_index = 0;
};

inline std::vector<LinearizedPair> linearize_corpus_train(const std::vector<Example>& examples,
                                                          const LinearizationConfig& cfg) {
  std::vector<LinearizedPair> pairs;
  for (size_t i = 0; i < examples.size(); ++i) {
    const std::string src = linearize(examples[i].input, cfg);
    for (const std::string& ref : examples[i].references) {
      pairs.push_back({src, normalize_whitespace(ref), i});
    }
  }
  return pairs;
}

// One source per example with all references retained for evaluation.
struct LinearizedEvalItem {
  std::string id;
  std::string source;
  std::vector<std::string> references;
  Subset subset = Subset::Unsplit;
};

inline std::vector<LinearizedEvalItem> linearize_corpus_eval(const std::vector<Example>& examples,
                                                             const LinearizationConfig& cfg) {
  std::vector<LinearizedEvalItem> items;
  items.reserve(examples.size());
  for (const Example& ex : examples) {
    LinearizedEvalItem item;
    item.id = ex.id;
    item.source = linearize(ex.input, cfg);
    for (const std::string& ref : ex.references) {
      item.references.push_back(normalize_whitespace(ref));
    }
    item.subset = ex.subset;
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace d2t

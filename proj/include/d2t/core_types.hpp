#pragma once

// Canonical domain types shared by every stage of the pipeline. All values
// are immutable after construction and safe to share across workers.

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "d2t/common.hpp"

namespace d2t {

// One subject-predicate-object fact from a knowledge graph.
struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;

  friend bool operator==(const Triple&, const Triple&) = default;
};

// A system action (inform, request, ...) with ordered slot key/value pairs.
// Values may be empty: request-style acts name a slot without a value.
struct DialogAct {
  std::string act_type;
  std::vector<std::pair<std::string, std::string>> slots;

  friend bool operator==(const DialogAct&, const DialogAct&) = default;
};

struct HighlightedCell {
  int row = 0;
  int col = 0;
  std::string header;
  std::string value;

  friend bool operator==(const HighlightedCell&, const HighlightedCell&) = default;
};

struct HighlightedTable {
  std::string page_title;
  std::string section_title;
  std::vector<HighlightedCell> cells;

  friend bool operator==(const HighlightedTable&, const HighlightedTable&) = default;
};

using TripleSet = std::vector<Triple>;
using DialogActMR = std::vector<DialogAct>;

// The model's conditioning source: exactly one of the three data shapes.
using StructuredInput = std::variant<TripleSet, DialogActMR, HighlightedTable>;

enum class Subset { Seen, Unseen, Overlap, NonOverlap, Unsplit };

inline const char* subset_name(Subset s) {
  switch (s) {
    case Subset::Seen: return "Seen";
    case Subset::Unseen: return "Unseen";
    case Subset::Overlap: return "Overlap";
    case Subset::NonOverlap: return "NonOverlap";
    case Subset::Unsplit: return "Unsplit";
  }
  return "?";
}

struct Example {
  std::string id;
  StructuredInput input;
  std::vector<std::string> references;
  Subset subset = Subset::Unsplit;

  friend bool operator==(const Example&, const Example&) = default;
};

enum class DatasetName { WebNLG, MultiWoz, ToTTo, Synthetic };

inline const char* dataset_name_str(DatasetName n) {
  switch (n) {
    case DatasetName::WebNLG: return "WebNLG";
    case DatasetName::MultiWoz: return "MultiWoz";
    case DatasetName::ToTTo: return "ToTTo";
    case DatasetName::Synthetic: return "Synthetic";
  }
  return "?";
}

struct Dataset {
  DatasetName name = DatasetName::Synthetic;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

// ----------------------------- validation -----------------------------

namespace detail {

inline bool empty_after_trim(const std::string& s) {
  return normalize_whitespace(s).empty();
}

}  // namespace detail

// Returns every violated invariant as a human-readable description.
// Violations are data, not errors; an empty result means the example is valid.
inline std::vector<std::string> validate_example(const Example& ex) {
  std::vector<std::string> v;
  if (detail::empty_after_trim(ex.id)) v.push_back("id empty");

  if (const auto* triples = std::get_if<TripleSet>(&ex.input)) {
    if (triples->empty()) v.push_back("triples empty");
    for (size_t i = 0; i < triples->size(); ++i) {
      const Triple& t = (*triples)[i];
      if (detail::empty_after_trim(t.subject))
        v.push_back("triple " + std::to_string(i) + " subject empty");
      if (detail::empty_after_trim(t.predicate))
        v.push_back("triple " + std::to_string(i) + " predicate empty");
      if (detail::empty_after_trim(t.object))
        v.push_back("triple " + std::to_string(i) + " object empty");
    }
  } else if (const auto* acts = std::get_if<DialogActMR>(&ex.input)) {
    if (acts->empty()) v.push_back("acts empty");
    for (size_t i = 0; i < acts->size(); ++i) {
      const DialogAct& a = (*acts)[i];
      if (detail::empty_after_trim(a.act_type))
        v.push_back("act " + std::to_string(i) + " act_type empty");
      for (size_t j = 0; j < a.slots.size(); ++j) {
        if (detail::empty_after_trim(a.slots[j].first))
          v.push_back("act " + std::to_string(i) + " slot " + std::to_string(j) +
                      " slot key empty");
      }
    }
  } else {
    const auto& table = std::get<HighlightedTable>(ex.input);
    if (table.cells.empty()) v.push_back("cells empty");
    std::set<std::pair<int, int>> seen_coords;
    for (const HighlightedCell& c : table.cells) {
      if (c.row < 0 || c.col < 0)
        v.push_back("negative cell coordinate (" + std::to_string(c.row) + "," +
                    std::to_string(c.col) + ")");
      if (!seen_coords.insert({c.row, c.col}).second)
        v.push_back("duplicate cell coordinate (" + std::to_string(c.row) + "," +
                    std::to_string(c.col) + ")");
    }
  }

  if (ex.references.empty()) {
    v.push_back("references empty");
  } else {
    for (size_t i = 0; i < ex.references.size(); ++i) {
      if (detail::empty_after_trim(ex.references[i]))
        v.push_back("reference " + std::to_string(i) + " empty");
    }
  }
  return v;
}

}  // namespace d2t

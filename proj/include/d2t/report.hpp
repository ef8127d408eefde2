#pragma once

// Plain-text and JSON rendering of metric reports: rows are systems, column
// groups are metric x subset. Values follow the conventional presentation:
// BLEU and PARENT on a 0-100 scale with one decimal, SER as a percentage
// with two decimals, METEOR-lite on 0-1 with two decimals.

#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2t/metrics.hpp"

namespace d2t {

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

struct ReportColumn {
  std::string metric;  // display name of the metric group
  std::string subset;
};

inline std::string report_cell(const SubsetResult& r, const std::string& metric) {
  if (metric == "BLEU") return r.bleu ? fmt("%.1f", r.bleu->score) : "-";
  if (metric == "PARENT") return r.parent ? fmt("%.1f", r.parent->f1 * 100.0) : "-";
  if (metric == "SER") return r.ser ? fmt("%.2f", *r.ser * 100.0) : "-";
  if (metric == "METEOR-lite") return r.meteor_lite ? fmt("%.2f", *r.meteor_lite) : "-";
  return "-";
}

}  // namespace detail

// Renders an aligned plain-text table for one or more systems. All reports
// must share the same subset structure.
inline std::string format_report(
    const std::vector<std::pair<std::string, MetricReport>>& reports) {
  if (reports.empty()) throw ValidationError("format_report: no reports");

  std::vector<std::string> subset_names;
  for (const auto& [name, r] : reports.front().second.subsets) subset_names.push_back(name);
  for (const auto& [sys, rep] : reports) {
    if (rep.subsets.size() != subset_names.size()) {
      throw ValidationError("format_report: subset structure differs across systems");
    }
    for (size_t i = 0; i < subset_names.size(); ++i) {
      if (rep.subsets[i].first != subset_names[i]) {
        throw ValidationError("format_report: subset structure differs across systems");
      }
    }
  }

  // Metric groups present in any system, in canonical order.
  std::vector<std::string> metrics;
  const auto any_has = [&](auto&& probe) {
    for (const auto& [sys, rep] : reports) {
      for (const auto& [name, r] : rep.subsets) {
        if (probe(r)) return true;
      }
    }
    return false;
  };
  if (any_has([](const SubsetResult& r) { return r.bleu.has_value(); })) metrics.push_back("BLEU");
  if (any_has([](const SubsetResult& r) { return r.parent.has_value(); })) {
    metrics.push_back("PARENT");
  }
  if (any_has([](const SubsetResult& r) { return r.ser.has_value(); })) metrics.push_back("SER");
  if (any_has([](const SubsetResult& r) { return r.meteor_lite.has_value(); })) {
    metrics.push_back("METEOR-lite");
  }
  if (metrics.empty()) throw ValidationError("format_report: reports carry no metric values");

  // Assemble cell texts: one row per system, one column per (metric, subset).
  std::vector<detail::ReportColumn> columns;
  for (const auto& m : metrics) {
    for (const auto& s : subset_names) columns.push_back({m, s});
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& [sys, rep] : reports) {
    std::vector<std::string> row;
    row.push_back(sys);
    for (const auto& col : columns) {
      const SubsetResult* r = rep.find(col.subset);
      row.push_back(detail::report_cell(*r, col.metric));
    }
    rows.push_back(std::move(row));
  }

  std::vector<size_t> width(columns.size() + 1, 0);
  width[0] = std::string("System").size();
  for (const auto& row : rows) width[0] = std::max(width[0], row[0].size());
  for (size_t c = 0; c < columns.size(); ++c) {
    width[c + 1] = columns[c].subset.size();
    for (const auto& row : rows) width[c + 1] = std::max(width[c + 1], row[c + 1].size());
  }

  const auto pad = [](const std::string& s, size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };

  std::string out;
  // metric group header
  out += pad("", width[0]);
  size_t c = 0;
  for (const auto& m : metrics) {
    size_t group_w = 0;
    for (size_t k = 0; k < subset_names.size(); ++k) group_w += width[c + k + 1] + 2;
    out += " | " + pad(m, group_w > 3 ? group_w - 3 : m.size());
    c += subset_names.size();
  }
  out += "\n";
  // subset header
  out += pad("System", width[0]);
  for (size_t k = 0; k < columns.size(); ++k) {
    out += (k % subset_names.size() == 0 ? " | " : "  ") + pad(columns[k].subset, width[k + 1]);
  }
  out += "\n";
  // separator
  size_t total = width[0];
  for (size_t k = 0; k < columns.size(); ++k) {
    total += width[k + 1] + (k % subset_names.size() == 0 ? 3 : 2);
  }
  out += std::string(total, '-') + "\n";
  for (const auto& row : rows) {
    out += pad(row[0], width[0]);
    for (size_t k = 0; k < columns.size(); ++k) {
      out += (k % subset_names.size() == 0 ? " | " : "  ") + pad(row[k + 1], width[k + 1]);
    }
    out += "\n";
  }
  return out;
}

inline nlohmann::json report_bundle_to_json(
    const std::vector<std::pair<std::string, MetricReport>>& reports) {
  nlohmann::json systems = nlohmann::json::array();
  for (const auto& [name, rep] : reports) {
    nlohmann::json j = metric_report_to_json(rep);
    j["system"] = name;
    systems.push_back(std::move(j));
  }
  return nlohmann::json{{"systems", std::move(systems)}};
}

}  // namespace d2t

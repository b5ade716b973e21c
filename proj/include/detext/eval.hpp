#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "detext/bucket.hpp"
#include "detext/corpus.hpp"
#include "detext/error.hpp"
#include "detext/record.hpp"

namespace detext {

// One detector output joined to ground truth. Higher score = more
// machine-like; adapters for detectors oriented the other way must negate.
struct ScoredRecord {
  std::string record_id;
  Label label = Label::human;
  double score = 0;
  std::string bucket;
};

struct RangeRow {
  std::string range;
  std::optional<double> auc;
  std::optional<double> f1;
  std::size_t n_human = 0;
  std::size_t n_machine = 0;

  bool operator==(const RangeRow&) const = default;
};

struct RangeReport {
  std::vector<RangeRow> rows;  // one per bucket, in spec order
  RangeRow aggregate;          // range = "ALL"

  bool operator==(const RangeReport&) const = default;
};

// Mann-Whitney rank statistic: fraction of (machine, human) pairs where the
// machine score is higher, ties counting half. Absent when a class is empty.
inline std::optional<double> auc_roc(std::span<const ScoredRecord> scored) {
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& r : scored) {
    if (!std::isfinite(r.score)) {
      throw DataError("auc_roc: non-finite score for record " + r.record_id);
    }
    (r.label == Label::machine ? n_pos : n_neg)++;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scored[a].score < scored[b].score;
  });

  // Average ranks over tie groups; rank sums stay exact in doubles.
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scored[order[j]].score == scored[order[i]].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>((i + 1) + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (scored[order[k]].label == Label::machine) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

// F1 with machine as the positive class and prediction = (score > threshold).
// The degenerate no-positives case returns 0 by convention.
inline double f1_score(std::span<const ScoredRecord> scored, double threshold) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& r : scored) {
    const bool predicted = r.score > threshold;
    const bool actual = r.label == Label::machine;
    if (predicted && actual) ++tp;
    else if (predicted && !actual) ++fp;
    else if (!predicted && actual) ++fn;
  }
  const double denom = static_cast<double>(2 * tp + fp + fn);
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / denom;
}

namespace detail {

inline RangeRow make_row(const std::string& range,
                         std::span<const ScoredRecord> group, double threshold) {
  RangeRow row;
  row.range = range;
  for (const auto& r : group) {
    (r.label == Label::machine ? row.n_machine : row.n_human)++;
  }
  if (row.n_human > 0 && row.n_machine > 0) {
    row.auc = auc_roc(group);
    row.f1 = f1_score(group, threshold);
  }
  return row;
}

}  // namespace detail

// Per-bucket rows in spec order (empty buckets included) plus the pooled
// aggregate over the full input.
inline RangeReport evaluate_by_range(std::span<const ScoredRecord> scored,
                                     const BucketSpec& spec, double threshold) {
  std::vector<std::vector<ScoredRecord>> groups(spec.ranges().size());
  for (const auto& r : scored) {
    const auto idx = spec.index_of(r.bucket);
    if (!idx) {
      throw DataError("evaluate: unknown bucket \"" + r.bucket + "\" for record " +
                      r.record_id);
    }
    groups[*idx].push_back(r);
  }
  RangeReport report;
  report.rows.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    report.rows.push_back(
        detail::make_row(spec.ranges()[i].label(), groups[i], threshold));
  }
  std::vector<ScoredRecord> all(scored.begin(), scored.end());
  report.aggregate = detail::make_row("ALL", all, threshold);
  return report;
}

// Mean of the per-bucket AUCs that exist. Reported alongside the pooled
// aggregate, never inside it.
inline std::optional<double> range_mean_auc(const RangeReport& report) {
  double sum = 0;
  std::size_t count = 0;
  for (const auto& row : report.rows) {
    if (row.auc) {
      sum += *row.auc;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

// External detector scores joined to corpus ground truth.
struct ExternalScores {
  std::vector<ScoredRecord> records;      // corpus id order
  std::optional<double> threshold;        // from the file header, if declared
};

// Reads "record_id,score" CSV with an optional third header token
// "threshold" (probability convention, 0.5) or "threshold=<value>". Rows
// must reference corpus ids; uncovered corpus ids warn, or fail in strict
// mode.
inline ExternalScores ingest_external_scores(std::istream& in, const Corpus& corpus,
                                             bool strict = false,
                                             std::ostream& warnings = std::cerr) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("external scores: empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  ExternalScores out;
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.size() > 3 || header[0] != "record_id" ||
      header[1] != "score") {
    throw DataError("external scores: line 1: expected header record_id,score[,threshold]");
  }
  if (header.size() == 3) {
    const std::string& t = header[2];
    if (t == "threshold") {
      out.threshold = 0.5;
    } else if (t.compare(0, 10, "threshold=") == 0) {
      char* end = nullptr;
      const double v = std::strtod(t.c_str() + 10, &end);
      if (end == t.c_str() + 10 || *end != '\0' || !std::isfinite(v)) {
        throw DataError("external scores: line 1: bad threshold value \"" + t + "\"");
      }
      out.threshold = v;
    } else {
      throw DataError("external scores: line 1: unrecognized header field \"" + t + "\"");
    }
  }

  std::map<std::string, const TextRecord*> by_id;
  for (const auto& rec : corpus.records) by_id[rec.id] = &rec;

  std::map<std::string, double> scores;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw DataError("external scores: line " + std::to_string(lineno) +
                      ": expected exactly record_id,score");
    }
    const std::string id = line.substr(0, comma);
    const std::string score_text = line.substr(comma + 1);
    char* end = nullptr;
    const double score = std::strtod(score_text.c_str(), &end);
    if (end == score_text.c_str() || *end != '\0') {
      throw DataError("external scores: line " + std::to_string(lineno) +
                      ": bad score \"" + score_text + "\"");
    }
    if (!std::isfinite(score)) {
      throw DataError("external scores: line " + std::to_string(lineno) +
                      ": non-finite score for record " + id);
    }
    if (by_id.find(id) == by_id.end()) {
      throw DataError("external scores: line " + std::to_string(lineno) +
                      ": unknown record id " + id);
    }
    if (!scores.emplace(id, score).second) {
      throw DataError("external scores: line " + std::to_string(lineno) +
                      ": duplicate record id " + id);
    }
  }

  std::vector<std::string> missing;
  for (const auto& rec : corpus.records) {
    const auto it = scores.find(rec.id);
    if (it == scores.end()) {
      missing.push_back(rec.id);
      continue;
    }
    ScoredRecord sr;
    sr.record_id = rec.id;
    sr.label = rec.label;
    sr.score = it->second;
    if (!rec.bucket) {
      throw DataError("external scores: corpus record " + rec.id + " has no bucket");
    }
    sr.bucket = *rec.bucket;
    out.records.push_back(std::move(sr));
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "external scores: " << missing.size() << " of " << corpus.records.size()
        << " corpus records uncovered:";
    const std::size_t shown = std::min<std::size_t>(missing.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg << " " << missing[i];
    if (shown < missing.size()) msg << " ...";
    if (strict) throw DataError(msg.str());
    warnings << msg.str() << "\n";
  }
  return out;
}

enum class ReportFormat { csv, structured };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "structured") return ReportFormat::structured;
  throw ConfigError("report format: expected csv or structured, got \"" + s + "\"");
}

namespace detail {

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

// Metric values carried by reports are quantized to the 6 fractional digits
// both output formats render, so the two formats agree byte-for-value.
inline std::optional<double> quantize_metric(const std::optional<double>& v) {
  if (!v) return std::nullopt;
  return std::strtod(format_metric(v).c_str(), nullptr);
}

inline nlohmann::ordered_json row_to_json(const RangeRow& row) {
  nlohmann::ordered_json j;
  j["range"] = row.range;
  if (row.auc) j["auc"] = *quantize_metric(row.auc);
  else j["auc"] = nullptr;
  if (row.f1) j["f1"] = *quantize_metric(row.f1);
  else j["f1"] = nullptr;
  j["n_human"] = row.n_human;
  j["n_machine"] = row.n_machine;
  return j;
}

inline RangeRow row_from_json(const nlohmann::ordered_json& j) {
  RangeRow row;
  try {
    row.range = j.at("range").get<std::string>();
    if (!j.at("auc").is_null()) row.auc = j.at("auc").get<double>();
    if (!j.at("f1").is_null()) row.f1 = j.at("f1").get<double>();
    row.n_human = j.at("n_human").get<std::size_t>();
    row.n_machine = j.at("n_machine").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report row: ") + e.what());
  }
  return row;
}

}  // namespace detail

inline std::string render_report_csv(const RangeReport& report) {
  std::ostringstream out;
  out << "range,auc,f1,n_human,n_machine\n";
  auto emit_row = [&](const RangeRow& row) {
    out << row.range << "," << detail::format_metric(row.auc) << ","
        << detail::format_metric(row.f1) << "," << row.n_human << ","
        << row.n_machine << "\n";
  };
  for (const auto& row : report.rows) emit_row(row);
  emit_row(report.aggregate);
  return out.str();
}

inline std::string render_report_structured(const RangeReport& report) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) j["rows"].push_back(detail::row_to_json(row));
  j["aggregate"] = detail::row_to_json(report.aggregate);
  return j.dump(2) + "\n";
}

inline RangeReport parse_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("report: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "range,auc,f1,n_human,n_machine") {
    throw DataError("report: line 1: unrecognized header");
  }
  std::vector<RangeRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (cells.size() != 5) {
      throw DataError("report: line " + std::to_string(lineno) + ": expected 5 cells");
    }
    RangeRow row;
    row.range = cells[0];
    auto parse_metric = [&](const std::string& c) -> std::optional<double> {
      if (c.empty()) return std::nullopt;
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (end == c.c_str() || *end != '\0') {
        throw DataError("report: line " + std::to_string(lineno) + ": bad number \"" + c + "\"");
      }
      return v;
    };
    auto parse_count = [&](const std::string& c) -> std::size_t {
      char* end = nullptr;
      const unsigned long v = std::strtoul(c.c_str(), &end, 10);
      if (end == c.c_str() || *end != '\0') {
        throw DataError("report: line " + std::to_string(lineno) + ": bad count \"" + c + "\"");
      }
      return v;
    };
    row.auc = parse_metric(cells[1]);
    row.f1 = parse_metric(cells[2]);
    row.n_human = parse_count(cells[3]);
    row.n_machine = parse_count(cells[4]);
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.back().range != "ALL") {
    throw DataError("report: missing ALL aggregate row");
  }
  RangeReport report;
  report.aggregate = std::move(rows.back());
  rows.pop_back();
  report.rows = std::move(rows);
  return report;
}

inline RangeReport parse_report_structured(std::istream& in) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: invalid json: ") + e.what());
  }
  if (!j.is_object() || !j.contains("rows") || !j.contains("aggregate")) {
    throw DataError("report: expected rows and aggregate fields");
  }
  RangeReport report;
  for (const auto& row : j["rows"]) report.rows.push_back(detail::row_from_json(row));
  report.aggregate = detail::row_from_json(j["aggregate"]);
  return report;
}

inline void emit_report(const RangeReport& report, ReportFormat format,
                        std::ostream& out) {
  if (format == ReportFormat::csv) out << render_report_csv(report);
  else out << render_report_structured(report);
  if (!out) throw PersistenceError("report: write failed");
}

inline void emit_report(const RangeReport& report, ReportFormat format,
                        const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw PersistenceError("cannot write report file: " + path);
  emit_report(report, format, f);
  f.flush();
  if (!f) throw PersistenceError("report: write failed: " + path);
}

}  // namespace detext

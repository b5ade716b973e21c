#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "detext/error.hpp"

namespace detext {

enum class Label { human, machine };

enum class Source { twitter, football, gutenberg, pubmedqa, squad, synthetic, other };

inline std::string_view to_string(Label label) {
  return label == Label::human ? "human" : "machine";
}

inline Label parse_label(std::string_view s) {
  if (s == "human") return Label::human;
  if (s == "machine") return Label::machine;
  throw DataError("unknown label: " + std::string(s));
}

inline std::string_view to_string(Source source) {
  switch (source) {
    case Source::twitter: return "twitter";
    case Source::football: return "football";
    case Source::gutenberg: return "gutenberg";
    case Source::pubmedqa: return "pubmedqa";
    case Source::squad: return "squad";
    case Source::synthetic: return "synthetic";
    case Source::other: return "other";
  }
  return "other";
}

inline Source parse_source(std::string_view s) {
  if (s == "twitter") return Source::twitter;
  if (s == "football") return Source::football;
  if (s == "gutenberg") return Source::gutenberg;
  if (s == "pubmedqa") return Source::pubmedqa;
  if (s == "squad") return Source::squad;
  if (s == "synthetic") return Source::synthetic;
  if (s == "other") return Source::other;
  throw DataError("unknown source tag: " + std::string(s));
}

// One sentence with its origin label and length bookkeeping. pair_id on a
// machine record names the human record it rephrases.
struct TextRecord {
  std::string id;
  std::string text;
  Label label = Label::human;
  Source source = Source::other;
  int word_count = 0;
  std::optional<std::string> bucket;
  std::optional<std::string> pair_id;

  friend bool operator==(const TextRecord&, const TextRecord&) = default;
};

// Canonical emission: one JSON object per line, keys in fixed order.
inline nlohmann::ordered_json record_to_json(const TextRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["text"] = r.text;
  j["label"] = to_string(r.label);
  j["source"] = to_string(r.source);
  j["word_count"] = r.word_count;
  if (r.bucket) j["bucket"] = *r.bucket;
  if (r.pair_id) j["pair_id"] = *r.pair_id;
  return j;
}

inline TextRecord record_from_json(const nlohmann::ordered_json& j) {
  try {
    TextRecord r;
    r.id = j.at("id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.label = parse_label(j.at("label").get<std::string>());
    r.source = parse_source(j.at("source").get<std::string>());
    r.word_count = j.at("word_count").get<int>();
    if (j.contains("bucket")) r.bucket = j.at("bucket").get<std::string>();
    if (j.contains("pair_id")) r.pair_id = j.at("pair_id").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad record: ") + e.what());
  }
}

}  // namespace detext

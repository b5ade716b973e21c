#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "detext/bucket.hpp"
#include "detext/error.hpp"
#include "detext/record.hpp"
#include "detext/rng.hpp"
#include "detext/text.hpp"

namespace detext {

struct Corpus {
  std::vector<TextRecord> records;
  BucketSpec bucket_spec = BucketSpec::builtin_default();
  std::vector<std::string> provenance;  // free-form "key=value" notes
};

struct SplitSet {
  Corpus train;
  Corpus test;
  Corpus val;
};

inline void sort_records_by_id(std::vector<TextRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const TextRecord& a, const TextRecord& b) { return a.id < b.id; });
}

// Checks every corpus invariant: unique ids, recomputable word counts,
// admissible lengths, bucket consistency, and machine pair_ids that resolve
// to human records.
inline void validate_corpus(const Corpus& corpus) {
  std::unordered_map<std::string, const TextRecord*> by_id;
  by_id.reserve(corpus.records.size());
  for (const auto& r : corpus.records) {
    if (!by_id.emplace(r.id, &r).second) {
      throw DataError("corpus: duplicate record id " + r.id);
    }
  }
  for (const auto& r : corpus.records) {
    if (r.word_count != count_words(r.text)) {
      throw DataError("corpus: stored word_count disagrees with text for " + r.id);
    }
    if (r.word_count < kMinWordCount || r.word_count > kMaxWordCount) {
      throw DataError("corpus: inadmissible word count for " + r.id);
    }
    if (r.bucket) {
      auto idx = corpus.bucket_spec.index_of(*r.bucket);
      if (!idx || !corpus.bucket_spec.ranges()[*idx].contains(r.word_count)) {
        throw DataError("corpus: bucket " + *r.bucket + " inconsistent for " + r.id);
      }
    }
    if (r.pair_id) {
      auto it = by_id.find(*r.pair_id);
      if (it == by_id.end() || it->second->label != Label::human) {
        throw DataError("corpus: pair_id " + *r.pair_id + " of " + r.id +
                        " does not name a human record");
      }
    }
  }
}

// Reads one candidate sentence per line: optional chunking, truncation to the
// 200-word ceiling, and dropping of lines under the 10-word floor. Surviving
// texts become human records with computed word counts and buckets.
// id_prefix keeps ids unique when several files share a source tag.
inline std::vector<TextRecord> ingest_source(std::istream& in, Source source,
                                             const BucketSpec& spec,
                                             std::optional<int> chunk_len = std::nullopt,
                                             const std::string& id_prefix = "") {
  if (chunk_len && *chunk_len < kMinWordCount) {
    throw ConfigError("chunk length must be at least " + std::to_string(kMinWordCount));
  }
  std::vector<TextRecord> records;
  std::string line;
  std::size_t line_start_offset = 0;
  long lineno = 0;
  const std::string prefix =
      id_prefix.empty() ? std::string(to_string(source)) : id_prefix;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t consumed = line.size() + 1;  // include the newline
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (auto bad = utf8_invalid_offset(line)) {
      throw DataError("ingest: invalid UTF-8 at byte offset " +
                      std::to_string(line_start_offset + *bad) + " (line " +
                      std::to_string(lineno) + ")");
    }
    line_start_offset += consumed;

    std::vector<std::string> pieces;
    if (chunk_len) {
      pieces = chunk_long_text(line, *chunk_len);
    } else {
      pieces.push_back(trim(line));
    }
    for (std::size_t c = 0; c < pieces.size(); ++c) {
      std::string text = truncate_words(pieces[c], kMaxWordCount);
      const int wc = count_words(text);
      if (wc < kMinWordCount) continue;
      TextRecord r;
      char idbuf[64];
      if (chunk_len) {
        std::snprintf(idbuf, sizeof(idbuf), "-L%06ld-C%02zu", lineno, c);
      } else {
        std::snprintf(idbuf, sizeof(idbuf), "-L%06ld", lineno);
      }
      r.id = prefix + idbuf;
      r.text = std::move(text);
      r.label = Label::human;
      r.source = source;
      r.word_count = wc;
      r.bucket = spec.assign(wc);
      records.push_back(std::move(r));
    }
  }
  return records;
}

// Caps every bucket at target_per_bucket records via a seeded uniform draw
// without replacement. Draws are made over id-sorted bucket populations with
// a per-bucket rng stream, so the result is independent of input order and
// of any execution parallelism.
inline Corpus normalize_corpus(const Corpus& corpus, int target_per_bucket,
                               std::uint64_t seed) {
  if (target_per_bucket <= 0) {
    throw ConfigError("normalize: target per bucket must be positive");
  }
  std::map<std::string, std::vector<std::size_t>> by_bucket;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    if (!r.bucket) throw DataError("normalize: record " + r.id + " has no bucket");
    by_bucket[*r.bucket].push_back(i);
  }
  Corpus out;
  out.bucket_spec = corpus.bucket_spec;
  out.provenance = corpus.provenance;
  for (auto& [bucket, indices] : by_bucket) {
    std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      return corpus.records[a].id < corpus.records[b].id;
    });
    const std::size_t keep =
        std::min(indices.size(), static_cast<std::size_t>(target_per_bucket));
    if (keep < indices.size()) {
      SplitMix64 rng(mix64(seed, fnv1a64(bucket)));
      shuffle(indices, rng);
      indices.resize(keep);
    }
    for (std::size_t i : indices) out.records.push_back(corpus.records[i]);
  }
  sort_records_by_id(out.records);
  out.provenance.push_back("normalize.target_per_bucket=" +
                           std::to_string(target_per_bucket));
  out.provenance.push_back("normalize.seed=" + std::to_string(seed));
  return out;
}

namespace detail {

// Largest-remainder apportionment of n into three parts; each part is within
// one of n * ratio, remainders break toward the earlier part.
inline std::array<std::size_t, 3> apportion(std::size_t n,
                                            const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * ratios[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t left = n - assigned, k = 0; left > 0; --left, ++k) {
    ++counts[order[k % 3]];
  }
  return counts;
}

}  // namespace detail

// Deterministic stratified split at pair-group granularity. Groups (a human
// record and its rephrases share a group) are anchored to the human record's
// bucket, shuffled per bucket with a seeded stream, and apportioned by the
// ratios; per-bucket sizes match the ratios within one group.
inline SplitSet split_corpus(const Corpus& corpus,
                             const std::array<double, 3>& ratios,
                             std::uint64_t seed) {
  double sum = 0;
  for (double r : ratios) {
    if (!(r > 0.0 && r < 1.0)) {
      throw ConfigError("split: each ratio must lie in (0,1)");
    }
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");

  // Group records; the key is the pair anchor (pair_id when present, own id
  // otherwise).
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    groups[r.pair_id ? *r.pair_id : r.id].push_back(i);
  }

  // Bucket of the anchor record; falls back to the first member when the
  // anchor id itself is absent.
  std::map<std::string, std::vector<std::string>> keys_by_bucket;
  for (const auto& [key, members] : groups) {
    const TextRecord* anchor = nullptr;
    for (std::size_t i : members) {
      if (corpus.records[i].id == key) anchor = &corpus.records[i];
    }
    if (!anchor) anchor = &corpus.records[members.front()];
    if (!anchor->bucket) {
      throw DataError("split: record " + anchor->id + " has no bucket");
    }
    keys_by_bucket[*anchor->bucket].push_back(key);
  }

  std::array<std::vector<std::size_t>, 3> member_indices;
  for (auto& [bucket, keys] : keys_by_bucket) {
    std::sort(keys.begin(), keys.end());
    SplitMix64 rng(mix64(seed, fnv1a64(bucket)));
    shuffle(keys, rng);
    const auto counts = detail::apportion(keys.size(), ratios);
    std::size_t pos = 0;
    for (int part = 0; part < 3; ++part) {
      for (std::size_t k = 0; k < counts[part]; ++k, ++pos) {
        for (std::size_t i : groups[keys[pos]]) member_indices[part].push_back(i);
      }
    }
  }

  SplitSet out{Corpus{{}, corpus.bucket_spec, corpus.provenance},
               Corpus{{}, corpus.bucket_spec, corpus.provenance},
               Corpus{{}, corpus.bucket_spec, corpus.provenance}};
  Corpus* parts[3] = {&out.train, &out.test, &out.val};
  const char* names[3] = {"train", "test", "val"};
  char ratio_note[96];
  std::snprintf(ratio_note, sizeof(ratio_note), "split.ratios=%g/%g/%g", ratios[0],
                ratios[1], ratios[2]);
  for (int part = 0; part < 3; ++part) {
    for (std::size_t i : member_indices[part]) {
      parts[part]->records.push_back(corpus.records[i]);
    }
    sort_records_by_id(parts[part]->records);
    parts[part]->provenance.push_back(ratio_note);
    parts[part]->provenance.push_back("split.seed=" + std::to_string(seed));
    parts[part]->provenance.push_back(std::string("split.part=") + names[part]);
  }
  return out;
}

inline void save_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& r : corpus.records) {
    out << record_to_json(r).dump() << "\n";
  }
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw PersistenceError("cannot write corpus file: " + path);
  save_corpus(corpus, f);
  if (!f) throw PersistenceError("write failed: " + path);
}

inline Corpus load_corpus(std::istream& in, BucketSpec spec) {
  Corpus corpus;
  corpus.bucket_spec = std::move(spec);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::ordered_json j =
        nlohmann::ordered_json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw DataError("corpus line " + std::to_string(lineno) + ": invalid JSON");
    }
    corpus.records.push_back(record_from_json(j));
  }
  validate_corpus(corpus);
  return corpus;
}

inline Corpus load_corpus(const std::string& path, BucketSpec spec) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open corpus file: " + path);
  return load_corpus(f, std::move(spec));
}

}  // namespace detext

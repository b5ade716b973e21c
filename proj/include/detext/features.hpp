#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "detext/error.hpp"
#include "detext/text.hpp"

namespace detext {

namespace detail {

inline bool ascii_alnum(std::uint32_t cp) {
  return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

// Non-ASCII codepoints count as word characters except the common punctuation
// blocks (Latin-1 punctuation/symbols and General Punctuation, which covers
// curly quotes and dashes).
inline bool word_codepoint(std::uint32_t cp) {
  if (cp < 0x80) return ascii_alnum(cp);
  if (cp >= 0xa0 && cp <= 0xbf) return false;
  if (cp == 0xd7 || cp == 0xf7) return false;
  if (cp >= 0x2000 && cp <= 0x206f) return false;
  return true;
}

inline std::uint32_t lower_codepoint(std::uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp >= 0xc0 && cp <= 0xde && cp != 0xd7) return cp + 0x20;  // Latin-1 letters
  return cp;
}

}  // namespace detail

// Lowercases, then extracts maximal runs of alphanumeric characters;
// everything else separates terms. Input must be valid UTF-8.
inline std::vector<std::string> tokenize(std::string_view text, bool lowercase = true) {
  std::vector<std::string> terms;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto [cp, len] = decode_utf8(text, pos);
    pos += len;
    if (detail::word_codepoint(cp)) {
      encode_utf8(lowercase ? detail::lower_codepoint(cp) : cp, current);
    } else if (!current.empty()) {
      terms.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) terms.push_back(std::move(current));
  return terms;
}

struct VocabConfig {
  int min_df = 2;
  int max_features = 50000;  // 0 = unlimited
  bool lowercase = true;
};

struct TermInfo {
  std::uint32_t index = 0;
  std::uint32_t df = 0;
};

// term -> (dense index in lexicographic term order, document frequency).
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::map<std::string, TermInfo> terms, std::uint64_t n_docs,
             VocabConfig config)
      : terms_(std::move(terms)), n_docs_(n_docs), config_(config) {}

  std::size_t size() const { return terms_.size(); }
  std::uint64_t n_docs() const { return n_docs_; }
  const VocabConfig& config() const { return config_; }
  const std::map<std::string, TermInfo>& terms() const { return terms_; }

  const TermInfo* lookup(const std::string& term) const {
    auto it = terms_.find(term);
    return it == terms_.end() ? nullptr : &it->second;
  }

  // Header with n_docs and config, then one "term<TAB>index<TAB>df" line per
  // term in index order; round-trips exactly.
  void save(std::ostream& out) const {
    out << "n_docs=" << n_docs_ << "\tmin_df=" << config_.min_df
        << "\tmax_features=" << config_.max_features
        << "\tlowercase=" << (config_.lowercase ? 1 : 0) << "\n";
    std::vector<const std::map<std::string, TermInfo>::value_type*> rows;
    rows.reserve(terms_.size());
    for (const auto& kv : terms_) rows.push_back(&kv);
    std::sort(rows.begin(), rows.end(),
              [](auto* a, auto* b) { return a->second.index < b->second.index; });
    for (auto* kv : rows) {
      out << kv->first << "\t" << kv->second.index << "\t" << kv->second.df << "\n";
    }
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw PersistenceError("cannot write vocabulary file: " + path);
    save(f);
  }

  static Vocabulary load(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw DataError("vocabulary: empty file");
    std::uint64_t n_docs = 0;
    VocabConfig cfg;
    int lowercase = 1;
    if (std::sscanf(header.c_str(),
                    "n_docs=%llu\tmin_df=%d\tmax_features=%d\tlowercase=%d",
                    reinterpret_cast<unsigned long long*>(&n_docs), &cfg.min_df,
                    &cfg.max_features, &lowercase) != 4) {
      throw DataError("vocabulary: malformed header line");
    }
    cfg.lowercase = lowercase != 0;
    std::map<std::string, TermInfo> terms;
    std::string line;
    long lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const std::size_t t1 = line.find('\t');
      const std::size_t t2 = t1 == std::string::npos ? std::string::npos
                                                     : line.find('\t', t1 + 1);
      if (t2 == std::string::npos) {
        throw DataError("vocabulary line " + std::to_string(lineno) +
                        ": expected term<TAB>index<TAB>df");
      }
      TermInfo info;
      info.index = static_cast<std::uint32_t>(std::stoul(line.substr(t1 + 1, t2 - t1 - 1)));
      info.df = static_cast<std::uint32_t>(std::stoul(line.substr(t2 + 1)));
      if (info.df < 1 || info.df > n_docs) {
        throw DataError("vocabulary line " + std::to_string(lineno) +
                        ": df out of range");
      }
      if (!terms.emplace(line.substr(0, t1), info).second) {
        throw DataError("vocabulary line " + std::to_string(lineno) + ": duplicate term");
      }
    }
    std::vector<bool> seen(terms.size(), false);
    for (const auto& [term, info] : terms) {
      if (info.index >= terms.size() || seen[info.index]) {
        throw DataError("vocabulary: indices are not dense and unique");
      }
      seen[info.index] = true;
    }
    return Vocabulary(std::move(terms), n_docs, cfg);
  }

  static Vocabulary load_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open vocabulary file: " + path);
    return load(f);
  }

 private:
  std::map<std::string, TermInfo> terms_;
  std::uint64_t n_docs_ = 0;
  VocabConfig config_;
};

// Document frequency counts presence, not multiplicity. Terms below min_df
// are dropped; with max_features set, the top max_features by df survive,
// ties broken toward lexicographically smaller terms. Indices follow
// lexicographic term order.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                                   VocabConfig config = {}) {
  if (docs.empty()) throw DataError("build_vocabulary: no documents");
  std::map<std::string, std::uint32_t> df;
  for (const auto& doc : docs) {
    std::unordered_set<std::string_view> seen;
    for (const auto& term : doc) {
      if (seen.insert(term).second) ++df[term];
    }
  }
  std::vector<std::pair<std::string, std::uint32_t>> kept;
  for (auto& [term, count] : df) {
    if (count >= static_cast<std::uint32_t>(config.min_df)) {
      kept.emplace_back(term, count);
    }
  }
  if (config.max_features > 0 &&
      kept.size() > static_cast<std::size_t>(config.max_features)) {
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    kept.resize(static_cast<std::size_t>(config.max_features));
    std::sort(kept.begin(), kept.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  if (kept.empty()) throw DataError("build_vocabulary: empty vocabulary");
  std::map<std::string, TermInfo> terms;
  std::uint32_t index = 0;
  for (auto& [term, count] : kept) {
    terms.emplace(std::move(term), TermInfo{index++, count});
  }
  return Vocabulary(std::move(terms), docs.size(), config);
}

// Smoothed idf: ln((1 + n_docs) / (1 + df)) + 1. Never zero, defined for
// df = n_docs.
inline double compute_idf(std::uint64_t df, std::uint64_t n_docs) {
  if (df < 1 || df > n_docs) {
    throw DataError("compute_idf: df must lie in [1, n_docs]");
  }
  return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df))) +
         1.0;
}

// Strictly increasing indices, no stored zeros.
struct SparseVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t nnz() const { return indices.size(); }

  double squared_norm() const {
    double s = 0;
    for (double v : values) s += v * v;
    return s;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

inline double dot(const SparseVector& a, const SparseVector& b) {
  double s = 0;
  std::size_t i = 0, j = 0;
  while (i < a.indices.size() && j < b.indices.size()) {
    if (a.indices[i] < b.indices[j]) {
      ++i;
    } else if (a.indices[i] > b.indices[j]) {
      ++j;
    } else {
      s += a.values[i] * b.values[j];
      ++i;
      ++j;
    }
  }
  return s;
}

// Raw in-vocabulary term counts weighted by idf, then L2-normalized.
// Out-of-vocabulary terms are ignored; an all-out-of-vocabulary document
// yields the empty vector.
inline SparseVector vectorize(const std::vector<std::string>& doc,
                              const Vocabulary& vocab) {
  struct Cell {
    double count = 0;
    double idf = 0;
  };
  std::map<std::uint32_t, Cell> cells;
  for (const auto& term : doc) {
    if (const TermInfo* info = vocab.lookup(term)) {
      Cell& cell = cells[info->index];
      if (cell.count == 0) cell.idf = compute_idf(info->df, vocab.n_docs());
      cell.count += 1.0;
    }
  }
  SparseVector v;
  v.indices.reserve(cells.size());
  v.values.reserve(cells.size());
  double norm_sq = 0;
  for (const auto& [index, cell] : cells) {
    const double w = cell.count * cell.idf;
    v.indices.push_back(index);
    v.values.push_back(w);
    norm_sq += w * w;
  }
  if (norm_sq > 0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& w : v.values) w *= inv;
  }
  return v;
}

}  // namespace detext

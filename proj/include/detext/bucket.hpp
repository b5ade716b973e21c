#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "detext/error.hpp"
#include "detext/text.hpp"

namespace detext {

// Inclusive word-count range. Its identifier is the "lo-hi" string.
struct BucketRange {
  int lo = 0;
  int hi = 0;

  std::string label() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%d-%d", lo, hi);
    return buf;
  }

  bool contains(int word_count) const { return word_count >= lo && word_count <= hi; }

  friend bool operator==(const BucketRange&, const BucketRange&) = default;
};

// Ordered, gap-free, non-overlapping ranges partitioning [10, last hi] with
// last hi >= 200, so every admissible word count has exactly one bucket.
class BucketSpec {
 public:
  explicit BucketSpec(std::vector<BucketRange> ranges) : ranges_(std::move(ranges)) {
    validate();
  }

  static BucketSpec builtin_default() {
    return BucketSpec({{10, 14},
                       {15, 19},
                       {20, 24},
                       {25, 29},
                       {30, 34},
                       {35, 39},
                       {40, 49},
                       {50, 59},
                       {60, 69},
                       {70, 79},
                       {80, 89},
                       {90, 99},
                       {100, 109},
                       {110, 119},
                       {120, 129},
                       {130, 139},
                       {140, 159},
                       {160, 179},
                       {180, 200}});
  }

  // One "lo-hi" range per line; blank lines and '#' comments skipped.
  static BucketSpec parse(std::istream& in) {
    std::vector<BucketRange> ranges;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      int lo = 0, hi = 0;
      char extra = 0;
      if (std::sscanf(t.c_str(), "%d-%d%c", &lo, &hi, &extra) != 2) {
        throw ConfigError("bucket spec line " + std::to_string(lineno) +
                          ": expected \"lo-hi\", got \"" + t + "\"");
      }
      ranges.push_back({lo, hi});
    }
    return BucketSpec(std::move(ranges));
  }

  static BucketSpec from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open bucket spec file: " + path);
    return parse(f);
  }

  void save(std::ostream& out) const {
    for (const auto& r : ranges_) out << r.label() << "\n";
  }

  const std::vector<BucketRange>& ranges() const { return ranges_; }
  std::size_t size() const { return ranges_.size(); }
  int min_word_count() const { return ranges_.front().lo; }
  int max_word_count() const { return ranges_.back().hi; }

  // The unique bucket whose range contains word_count, or nullopt outside
  // [first lo, last hi].
  std::optional<std::string> assign(int word_count) const {
    auto idx = index_for(word_count);
    if (!idx) return std::nullopt;
    return ranges_[*idx].label();
  }

  std::optional<std::size_t> index_for(int word_count) const {
    if (word_count < ranges_.front().lo || word_count > ranges_.back().hi) {
      return std::nullopt;
    }
    std::size_t lo = 0, hi = ranges_.size();
    while (lo + 1 < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (ranges_[mid].lo <= word_count) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo;
  }

  std::optional<std::size_t> index_of(std::string_view label) const {
    for (std::size_t i = 0; i < ranges_.size(); ++i) {
      if (ranges_[i].label() == label) return i;
    }
    return std::nullopt;
  }

  friend bool operator==(const BucketSpec&, const BucketSpec&) = default;

 private:
  void validate() const {
    if (ranges_.empty()) throw ConfigError("bucket spec: no ranges");
    for (const auto& r : ranges_) {
      if (r.lo > r.hi) throw ConfigError("bucket spec: inverted range " + r.label());
    }
    for (std::size_t i = 1; i < ranges_.size(); ++i) {
      if (ranges_[i].lo != ranges_[i - 1].hi + 1) {
        throw ConfigError("bucket spec: gap or overlap between " +
                          ranges_[i - 1].label() + " and " + ranges_[i].label());
      }
    }
    if (ranges_.front().lo != kMinWordCount) {
      throw ConfigError("bucket spec: first range must start at " +
                        std::to_string(kMinWordCount));
    }
    if (ranges_.back().hi < kMaxWordCount) {
      throw ConfigError("bucket spec: last range must reach " +
                        std::to_string(kMaxWordCount));
    }
  }

  std::vector<BucketRange> ranges_;
};

}  // namespace detext

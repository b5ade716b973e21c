#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace detext {

// Admissible sentence lengths, in whitespace-delimited words.
inline constexpr int kMinWordCount = 10;
inline constexpr int kMaxWordCount = 200;

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

// Number of maximal whitespace-delimited non-empty tokens.
inline int count_words(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

inline std::string join_words(const std::vector<std::string_view>& words,
                              std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out.push_back(' ');
    out.append(words[i]);
  }
  return out;
}

inline std::string trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

// Keeps the first max_words tokens. Texts at or under the limit pass through
// byte-identical; truncated texts are rejoined with single spaces.
inline std::string truncate_words(std::string_view text, int max_words) {
  if (count_words(text) <= max_words) return std::string(text);
  auto words = split_words(text);
  return join_words(words, 0, static_cast<std::size_t>(max_words));
}

// Consecutive chunks of exactly target_len words; a trailing remainder of at
// least kMinWordCount words becomes a final shorter chunk, anything shorter
// is discarded. Chunks are rejoined with single spaces.
inline std::vector<std::string> chunk_long_text(std::string_view text, int target_len) {
  auto words = split_words(text);
  std::vector<std::string> chunks;
  const std::size_t step = static_cast<std::size_t>(target_len);
  std::size_t pos = 0;
  while (pos + step <= words.size()) {
    chunks.push_back(join_words(words, pos, pos + step));
    pos += step;
  }
  const std::size_t rest = words.size() - pos;
  if (rest >= static_cast<std::size_t>(kMinWordCount)) {
    chunks.push_back(join_words(words, pos, words.size()));
  }
  return chunks;
}

// Byte offset of the first invalid UTF-8 sequence, or nullopt for well-formed
// input. Follows the RFC 3629 byte-range table (rejects overlongs, surrogates
// and codepoints above U+10FFFF).
inline std::optional<std::size_t> utf8_invalid_offset(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char b0 = p[i];
    if (b0 < 0x80) {
      ++i;
      continue;
    }
    std::size_t len;
    unsigned char lo = 0x80, hi = 0xbf;
    if (b0 >= 0xc2 && b0 <= 0xdf) {
      len = 2;
    } else if (b0 >= 0xe0 && b0 <= 0xef) {
      len = 3;
      if (b0 == 0xe0) lo = 0xa0;
      if (b0 == 0xed) hi = 0x9f;
    } else if (b0 >= 0xf0 && b0 <= 0xf4) {
      len = 4;
      if (b0 == 0xf0) lo = 0x90;
      if (b0 == 0xf4) hi = 0x8f;
    } else {
      return i;
    }
    if (i + len > n) return i;
    if (p[i + 1] < lo || p[i + 1] > hi) return i;
    for (std::size_t k = 2; k < len; ++k) {
      if (p[i + k] < 0x80 || p[i + k] > 0xbf) return i;
    }
    i += len;
  }
  return std::nullopt;
}

// Decodes one codepoint at byte position pos; the input must be valid UTF-8.
inline std::pair<std::uint32_t, std::size_t> decode_utf8(std::string_view s, std::size_t pos) {
  const auto* p = reinterpret_cast<const unsigned char*>(s.data()) + pos;
  const unsigned char b0 = p[0];
  if (b0 < 0x80) return {b0, 1};
  if (b0 < 0xe0) return {static_cast<std::uint32_t>((b0 & 0x1f) << 6 | (p[1] & 0x3f)), 2};
  if (b0 < 0xf0) {
    return {static_cast<std::uint32_t>((b0 & 0x0f) << 12 | (p[1] & 0x3f) << 6 | (p[2] & 0x3f)), 3};
  }
  return {static_cast<std::uint32_t>((b0 & 0x07) << 18 | (p[1] & 0x3f) << 12 |
                                     (p[2] & 0x3f) << 6 | (p[3] & 0x3f)),
          4};
}

inline void encode_utf8(std::uint32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

}  // namespace detext

#pragma once

// Minimal Unicode handling for Romanian-language text: UTF-8 codec,
// composition of combining marks into precomposed Latin characters,
// codepoint lowercasing and whitespace classification. The tables cover
// the Latin repertoire that actually occurs in the corpora (ASCII,
// Latin-1, Latin Extended-A and the Romanian comma-below letters);
// anything outside it passes through unchanged.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rodial/common.hpp"

namespace rodial {

using codepoints = std::vector<char32_t>;

inline codepoints decode_utf8(std::string_view s) {
  codepoints out;
  out.reserve(s.size());
  std::size_t i = 0;
  auto bad = [&](std::size_t at) {
    throw parse_error("invalid UTF-8 byte sequence at offset " + std::to_string(at));
  };
  while (i < s.size()) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xe0) == 0xc0) {
      cp = b0 & 0x1f;
      len = 2;
    } else if ((b0 & 0xf0) == 0xe0) {
      cp = b0 & 0x0f;
      len = 3;
    } else if ((b0 & 0xf8) == 0xf0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      bad(i);
    }
    if (i + len > s.size()) bad(i);
    for (std::size_t k = 1; k < len; ++k) {
      unsigned char bk = static_cast<unsigned char>(s[i + k]);
      if ((bk & 0xc0) != 0x80) bad(i + k);
      cp = (cp << 6) | (bk & 0x3f);
    }
    // Reject overlong encodings and surrogates so decode/encode round-trips.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
        (len == 4 && cp < 0x10000) || cp > 0x10ffff ||
        (cp >= 0xd800 && cp <= 0xdfff)) {
      bad(i);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
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

inline std::string encode_utf8(const codepoints& cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) append_utf8(out, cp);
  return out;
}

inline std::string encode_utf8(char32_t cp) {
  std::string out;
  append_utf8(out, cp);
  return out;
}

// Composition of a base letter with one combining mark into its precomposed
// form. Returns 0 when the pair has no entry.
inline char32_t compose_pair(char32_t base, char32_t mark) {
  struct entry {
    char32_t base;
    char32_t mark;
    char32_t composed;
  };
  // U+0300 grave, U+0301 acute, U+0302 circumflex, U+0303 tilde,
  // U+0306 breve, U+0308 diaeresis, U+0327 cedilla, U+0326 comma below.
  static constexpr std::array<entry, 60> table{{
      {U'A', 0x0300, 0x00c0}, {U'A', 0x0301, 0x00c1}, {U'A', 0x0302, 0x00c2},
      {U'A', 0x0303, 0x00c3}, {U'A', 0x0308, 0x00c4}, {U'A', 0x0306, 0x0102},
      {U'C', 0x0327, 0x00c7}, {U'E', 0x0300, 0x00c8}, {U'E', 0x0301, 0x00c9},
      {U'E', 0x0302, 0x00ca}, {U'E', 0x0308, 0x00cb}, {U'I', 0x0300, 0x00cc},
      {U'I', 0x0301, 0x00cd}, {U'I', 0x0302, 0x00ce}, {U'I', 0x0308, 0x00cf},
      {U'N', 0x0303, 0x00d1}, {U'O', 0x0300, 0x00d2}, {U'O', 0x0301, 0x00d3},
      {U'O', 0x0302, 0x00d4}, {U'O', 0x0303, 0x00d5}, {U'O', 0x0308, 0x00d6},
      {U'U', 0x0300, 0x00d9}, {U'U', 0x0301, 0x00da}, {U'U', 0x0302, 0x00db},
      {U'U', 0x0308, 0x00dc}, {U'Y', 0x0301, 0x00dd}, {U'S', 0x0326, 0x0218},
      {U'S', 0x0327, 0x015e}, {U'T', 0x0326, 0x021a}, {U'T', 0x0327, 0x0162},
      {U'a', 0x0300, 0x00e0}, {U'a', 0x0301, 0x00e1}, {U'a', 0x0302, 0x00e2},
      {U'a', 0x0303, 0x00e3}, {U'a', 0x0308, 0x00e4}, {U'a', 0x0306, 0x0103},
      {U'c', 0x0327, 0x00e7}, {U'e', 0x0300, 0x00e8}, {U'e', 0x0301, 0x00e9},
      {U'e', 0x0302, 0x00ea}, {U'e', 0x0308, 0x00eb}, {U'i', 0x0300, 0x00ec},
      {U'i', 0x0301, 0x00ed}, {U'i', 0x0302, 0x00ee}, {U'i', 0x0308, 0x00ef},
      {U'n', 0x0303, 0x00f1}, {U'o', 0x0300, 0x00f2}, {U'o', 0x0301, 0x00f3},
      {U'o', 0x0302, 0x00f4}, {U'o', 0x0303, 0x00f5}, {U'o', 0x0308, 0x00f6},
      {U'u', 0x0300, 0x00f9}, {U'u', 0x0301, 0x00fa}, {U'u', 0x0302, 0x00fb},
      {U'u', 0x0308, 0x00fc}, {U'y', 0x0301, 0x00fd}, {U's', 0x0326, 0x0219},
      {U's', 0x0327, 0x015f}, {U't', 0x0326, 0x021b}, {U't', 0x0327, 0x0163},
  }};
  for (const auto& e : table) {
    if (e.base == base && e.mark == mark) return e.composed;
  }
  return 0;
}

inline bool is_combining_mark(char32_t cp) { return cp >= 0x0300 && cp <= 0x036f; }

// Canonical composition over the table above. Marks that do not compose with
// their base are kept as-is.
inline codepoints compose(const codepoints& in) {
  codepoints out;
  out.reserve(in.size());
  for (char32_t cp : in) {
    if (!out.empty() && is_combining_mark(cp)) {
      if (char32_t c = compose_pair(out.back(), cp); c != 0) {
        out.back() = c;
        continue;
      }
    }
    out.push_back(cp);
  }
  return out;
}

inline char32_t to_lower(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  // Latin-1 uppercase block, skipping the multiplication sign.
  if (cp >= 0x00c0 && cp <= 0x00de && cp != 0x00d7) return cp + 0x20;
  // Latin Extended-A stores most case pairs adjacently.
  if (cp >= 0x0100 && cp <= 0x0137 && (cp % 2) == 0) return cp + 1;
  if (cp >= 0x0139 && cp <= 0x0147 && (cp % 2) == 1) return cp + 1;
  if (cp >= 0x014a && cp <= 0x0177 && (cp % 2) == 0) return cp + 1;
  if (cp == 0x0178) return 0x00ff;
  if (cp >= 0x0179 && cp <= 0x017d && (cp % 2) == 1) return cp + 1;
  // Comma-below S and T and their Latin Extended-B neighbours.
  if (cp >= 0x0218 && cp <= 0x021e && (cp % 2) == 0) return cp + 1;
  return cp;
}

inline bool is_space(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' ||
         cp == U'\v' || cp == U'\f' || cp == 0x00a0;
}

inline bool is_letter(char32_t cp) {
  if ((cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z')) return true;
  if (cp >= 0x00c0 && cp <= 0x024f && cp != 0x00d7 && cp != 0x00f7) return true;
  return false;
}

}  // namespace rodial

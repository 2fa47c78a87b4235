// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "trendvirality/common.hpp"

namespace tv::text {

inline bool is_ascii(std::string_view s) {
  for (unsigned char c : s)
    if (c >= 0x80) return false;
  return true;
}

// Unicode NFC. Malformed UTF-8 sequences come back as U+FFFD.
inline std::string nfc(std::string_view s) {
  if (is_ascii(s)) return std::string(s);
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(std::string("ICU NFC unavailable: ") + u_errorName(status));
  icu::UnicodeString in = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString out = norm->normalize(in, status);
  if (U_FAILURE(status)) throw Error(std::string("NFC normalisation failed: ") + u_errorName(status));
  std::string result;
  out.toUTF8String(result);
  return result;
}

// Canonical text form used everywhere a title or body is stored, hashed, or compared.
inline std::string canonical(std::string_view s) { return nfc(trim_view(s)); }

inline bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// Number of Unicode scalar values in valid UTF-8.
inline size_t codepoint_count(std::string_view s) {
  size_t n = 0;
  for (unsigned char c : s) n += !is_continuation(c);
  return n;
}

// Consecutive slices of at most `chunk_chars` scalar values each.
inline std::vector<std::string_view> chunk_codepoints(std::string_view s, size_t chunk_chars) {
  std::vector<std::string_view> chunks;
  size_t start = 0, count = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (is_continuation(static_cast<unsigned char>(s[i]))) continue;
    if (count == chunk_chars) {
      chunks.push_back(s.substr(start, i - start));
      start = i;
      count = 0;
    }
    ++count;
  }
  if (start < s.size()) chunks.push_back(s.substr(start));
  return chunks;
}

inline std::vector<std::string_view> whitespace_tokens(std::string_view s) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_ascii_space(s[i])) ++i;
    size_t j = i;
    while (j < s.size() && !is_ascii_space(s[j])) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace tv::text

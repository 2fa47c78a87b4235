// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"
#include "trendvirality/embed.hpp"
#include "trendvirality/spikes.hpp"

namespace tv {

inline constexpr int kWindowDays = 7;

struct RankedTerm {
  std::string term;
  double score = 0.0;
  bool operator==(const RankedTerm&) const = default;
};

// Terms that trended on days day-7 .. day-1 (the day itself is never read),
// scored by the sum of their daily composite scores, best `cap` kept.
inline std::vector<RankedTerm> build_window(Date day, const std::map<Date, TrendDay>& trend_days,
                                            size_t cap = kTrendRows) {
  std::unordered_map<std::string, double> summed;
  for (auto it = trend_days.lower_bound(day - kWindowDays); it != trend_days.end() && it->first < day; ++it)
    for (const auto& t : it->second.terms) summed[t.term] += t.composite;
  std::vector<RankedTerm> ranked;
  ranked.reserve(summed.size());
  for (auto& [term, score] : summed) ranked.push_back({term, score});
  std::sort(ranked.begin(), ranked.end(), [](const RankedTerm& a, const RankedTerm& b) {
    return a.score != b.score ? a.score > b.score : a.term < b.term;
  });
  if (ranked.size() > cap) ranked.resize(cap);
  return ranked;
}

// Wikipedia titles use underscores where sentence encoders expect spaces.
inline std::string term_text(std::string_view term) {
  std::string s(term);
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

struct TrendMatrix {
  Date day;
  std::vector<float> rows = std::vector<float>(size_t{kTrendRows} * kEmbedDim, 0.0f);  // row-major 512 x 768
  std::vector<uint8_t> mask = std::vector<uint8_t>(kTrendRows, 0);                     // 1 = valid row
  std::vector<std::string> terms;                                                     // aligned with valid rows
  std::vector<double> scores;

  size_t n_valid() const { return terms.size(); }
  bool all_empty() const { return terms.empty(); }
  std::span<float> row(size_t i) { return {rows.data() + i * kEmbedDim, size_t{kEmbedDim}}; }
  std::span<const float> row(size_t i) const { return {rows.data() + i * kEmbedDim, size_t{kEmbedDim}}; }
  bool operator==(const TrendMatrix&) const = default;
};

inline TrendMatrix build_matrix(Date day, const std::vector<RankedTerm>& ranked, const EmbeddingProvider& embedder) {
  TrendMatrix m;
  m.day = day;
  const size_t n = std::min(ranked.size(), size_t{kTrendRows});
  for (size_t i = 0; i < n; ++i) {
    Embedding v;
    try {
      v = embedder.embed_text(term_text(ranked[i].term));
    } catch (const Error& e) {
      throw Error("trend matrix " + day.str() + ": cannot embed term '" + ranked[i].term + "': " + e.what());
    }
    std::copy(v.begin(), v.end(), m.row(i).begin());
    m.mask[i] = 1;
    m.terms.push_back(ranked[i].term);
    m.scores.push_back(ranked[i].score);
  }
  return m;
}

// ---------------------------------------------------------------------------
// matrices/YYYY-MM-DD.bin:
//   "TVTM" | u32 version | i32 day | u32 n_valid | u32 rows | u32 dims
//   | rows*dims f32 row-major | rows mask bytes
// plus matrices/YYYY-MM-DD.terms.json
// ---------------------------------------------------------------------------

inline constexpr uint32_t kMatrixVersion = 1;

inline std::string encode_matrix(const TrendMatrix& m) {
  ByteWriter w;
  w.put_bytes("TVTM");
  w.put(kMatrixVersion);
  w.put(m.day.days());
  w.put(static_cast<uint32_t>(m.n_valid()));
  w.put(static_cast<uint32_t>(kTrendRows));
  w.put(static_cast<uint32_t>(kEmbedDim));
  w.put_floats(m.rows);
  w.put_bytes(std::string_view(reinterpret_cast<const char*>(m.mask.data()), m.mask.size()));
  return w.take();
}

inline std::string encode_matrix_terms(const TrendMatrix& m) {
  nlohmann::ordered_json j;
  j["day"] = m.day.str();
  j["terms"] = m.terms;
  j["scores"] = m.scores;
  return j.dump(1) + "\n";
}

inline TrendMatrix decode_matrix(std::string_view bytes, std::string_view terms_json, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.get_bytes(4) != "TVTM") r.fail("bad magic");
  if (r.get<uint32_t>() != kMatrixVersion) r.fail("unsupported version");
  TrendMatrix m;
  m.day = Date(r.get<int32_t>());
  const uint32_t n_valid = r.get<uint32_t>();
  if (r.get<uint32_t>() != static_cast<uint32_t>(kTrendRows) || r.get<uint32_t>() != static_cast<uint32_t>(kEmbedDim))
    r.fail("unexpected dimensions");
  r.get_floats(m.rows);
  const auto mask = r.get_bytes(kTrendRows);
  std::copy(mask.begin(), mask.end(), m.mask.begin());
  if (r.remaining() != 0) r.fail("trailing bytes");
  size_t valid = 0;
  for (size_t i = 0; i < m.mask.size(); ++i) {
    if (m.mask[i] > 1) r.fail("mask byte out of range");
    if (m.mask[i] && i != valid) r.fail("valid rows must be a prefix");
    valid += m.mask[i];
  }
  if (valid != n_valid) r.fail("n_valid disagrees with mask");
  if (!terms_json.empty()) {
    const auto j = nlohmann::json::parse(terms_json);
    m.terms = j.at("terms").get<std::vector<std::string>>();
    m.scores = j.at("scores").get<std::vector<double>>();
  }
  if (m.terms.size() != n_valid) throw Error(what + ": terms sidecar lists " + std::to_string(m.terms.size()) +
                                             " terms but matrix has " + std::to_string(n_valid) + " valid rows");
  return m;
}

inline void write_matrix(const fs::path& dir, const TrendMatrix& m) {
  write_file(dir / (m.day.str() + ".bin"), encode_matrix(m));
  write_file(dir / (m.day.str() + ".terms.json"), encode_matrix_terms(m));
}

inline TrendMatrix read_matrix(const fs::path& dir, Date day) {
  const fs::path bin = dir / (day.str() + ".bin");
  if (!fs::exists(bin)) throw DependencyError("trend matrix '" + bin.string() + "' does not exist");
  return decode_matrix(read_file(bin), read_file(dir / (day.str() + ".terms.json")), bin.string());
}

}  // namespace tv

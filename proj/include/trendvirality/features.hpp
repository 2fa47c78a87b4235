// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"
#include "trendvirality/corpus.hpp"
#include "trendvirality/text.hpp"

namespace tv {

// Index layout:
//   0 sin(2*pi*h/24)   1 cos(2*pi*h/24)   2 weekday/6 (Mon=0)
//   3 log10(age_days+1)/max   4 ln(title_len+1)/max   5 ln(body_len+1)/max
//   6 has_body   7 log10(subscribers+1)/max   8 is_weekend
using StructVector = std::array<double, kNumStructFeatures>;

struct NormStats {
  double max_log_age = 1.0;
  double max_log_title_len = 1.0;
  double max_log_body_len = 1.0;
  double max_log_subscribers = 1.0;
  bool operator==(const NormStats&) const = default;
};

inline void to_json(nlohmann::json& j, const NormStats& n) {
  j = {{"max_log_age", n.max_log_age},
       {"max_log_title_len", n.max_log_title_len},
       {"max_log_body_len", n.max_log_body_len},
       {"max_log_subscribers", n.max_log_subscribers}};
}
inline void from_json(const nlohmann::json& j, NormStats& n) {
  n.max_log_age = j.at("max_log_age").get<double>();
  n.max_log_title_len = j.at("max_log_title_len").get<double>();
  n.max_log_body_len = j.at("max_log_body_len").get<double>();
  n.max_log_subscribers = j.at("max_log_subscribers").get<double>();
}

namespace detail {

struct RawFeatures {
  double log_age, log_title, log_body, log_subs;
};

inline RawFeatures raw_features(const Post& p) {
  const double age_days = static_cast<double>((p.created_utc - kRedditEpoch) / 86400);
  return {std::log10(std::max(age_days, 0.0) + 1.0),
          std::log1p(static_cast<double>(text::codepoint_count(p.title))),
          std::log1p(static_cast<double>(text::codepoint_count(p.body))),
          std::log10(static_cast<double>(std::max<int64_t>(p.subscribers, 0)) + 1.0)};
}

}  // namespace detail

inline NormStats fit_norms(const std::vector<const Post*>& training) {
  if (training.empty()) throw Error("fit_norms: empty training set");
  NormStats n{0.0, 0.0, 0.0, 0.0};
  for (const Post* p : training) {
    const auto r = detail::raw_features(*p);
    n.max_log_age = std::max(n.max_log_age, r.log_age);
    n.max_log_title_len = std::max(n.max_log_title_len, r.log_title);
    n.max_log_body_len = std::max(n.max_log_body_len, r.log_body);
    n.max_log_subscribers = std::max(n.max_log_subscribers, r.log_subs);
  }
  for (double* m : {&n.max_log_age, &n.max_log_title_len, &n.max_log_body_len, &n.max_log_subscribers})
    if (*m <= 0.0) *m = 1.0;
  return n;
}

inline NormStats fit_norms(const std::vector<Post>& training) {
  std::vector<const Post*> ptrs;
  for (const auto& p : training) ptrs.push_back(&p);
  return fit_norms(ptrs);
}

inline StructVector extract(const Post& p, const NormStats& norms) {
  auto unit = [](double v, double max) { return std::clamp(v / max, 0.0, 1.0); };
  const int64_t secs_of_day = ((p.created_utc % 86400) + 86400) % 86400;
  const int hour = static_cast<int>(secs_of_day / 3600);
  const double angle = 2.0 * M_PI * hour / 24.0;
  const int dow = p.day().weekday();
  const auto r = detail::raw_features(p);
  StructVector f{};
  f[0] = std::sin(angle);
  f[1] = std::cos(angle);
  f[2] = dow / 6.0;
  f[3] = unit(r.log_age, norms.max_log_age);
  f[4] = unit(r.log_title, norms.max_log_title_len);
  f[5] = unit(r.log_body, norms.max_log_body_len);
  f[6] = p.body.empty() ? 0.0 : 1.0;
  f[7] = unit(r.log_subs, norms.max_log_subscribers);
  f[8] = dow >= 5 ? 1.0 : 0.0;
  return f;
}

// features.bin: n x 9 little-endian f32, row per post in input order.
inline std::string encode_features(const std::vector<StructVector>& rows) {
  ByteWriter w;
  for (const auto& r : rows)
    for (double v : r) w.put(static_cast<float>(v));
  return w.take();
}

}  // namespace tv

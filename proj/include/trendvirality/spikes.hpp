// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"
#include "trendvirality/corpus.hpp"

namespace tv {

struct SpikeConfig {
  uint64_t min_views = 3000;  // strict: views must exceed this
  double ratio_threshold = 2.0;
  size_t top_k = kTrendRows;
  double evergreen_fraction = 0.60;  // strict: appear on more than this share of days
  std::set<std::string> blocklist = {"Main_Page", "Google_Classroom", "Microsoft_Teams"};
  std::vector<std::string> noise_patterns;  // ECMAScript regex, searched anywhere in the title

  void validate() const {
    if (!(ratio_threshold >= 1.0)) throw Error("spikes.ratio_threshold must be >= 1");
    if (top_k < 1) throw Error("spikes.top_k must be >= 1");
    if (!(evergreen_fraction > 0.0 && evergreen_fraction <= 1.0))
      throw Error("spikes.evergreen_fraction must be in (0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const SpikeConfig& c) {
  j = {{"min_views", c.min_views},       {"ratio_threshold", c.ratio_threshold},
       {"top_k", c.top_k},               {"evergreen_fraction", c.evergreen_fraction},
       {"blocklist", c.blocklist},       {"noise_patterns", c.noise_patterns}};
}

inline void from_json(const nlohmann::json& j, SpikeConfig& c) {
  c.min_views = j.value("min_views", c.min_views);
  c.ratio_threshold = j.value("ratio_threshold", c.ratio_threshold);
  c.top_k = j.value("top_k", c.top_k);
  c.evergreen_fraction = j.value("evergreen_fraction", c.evergreen_fraction);
  if (j.contains("blocklist")) c.blocklist = j.at("blocklist").get<std::set<std::string>>();
  if (j.contains("extra_blocklist"))
    for (const auto& t : j.at("extra_blocklist")) c.blocklist.insert(t.get<std::string>());
  if (j.contains("noise_patterns")) c.noise_patterns = j.at("noise_patterns").get<std::vector<std::string>>();
  c.validate();
}

struct TrendTerm {
  std::string term;
  Date day;
  uint64_t views = 0;
  std::optional<uint64_t> prior_views;
  double ratio = 0.0;
  int64_t delta = 0;
  double composite = 0.0;
  bool operator==(const TrendTerm&) const = default;
};

struct TrendDay {
  Date day;
  std::vector<TrendTerm> terms;  // composite descending, ties by term ascending
  bool operator==(const TrendDay&) const = default;
};

inline bool ranks_before(const TrendTerm& a, const TrendTerm& b) {
  return a.composite != b.composite ? a.composite > b.composite : a.term < b.term;
}

// Compiled exclusion rules shared across days.
class TermFilter {
 public:
  explicit TermFilter(const SpikeConfig& cfg) : blocklist_(cfg.blocklist) {
    for (const auto& p : cfg.noise_patterns) patterns_.emplace_back(p, std::regex::ECMAScript | std::regex::optimize);
  }
  bool excluded(const std::string& title) const {
    if (title.find(':') != std::string::npos) return true;
    if (title == "Main_Page" || blocklist_.count(title)) return true;
    for (const auto& re : patterns_)
      if (std::regex_search(title, re)) return true;
    return false;
  }

 private:
  std::set<std::string> blocklist_;
  std::vector<std::regex> patterns_;
};

// Spike statistics for one article. An absent or zero prior is a first
// appearance: the prior is taken as 1 view.
inline TrendTerm spike_stats(const std::string& term, Date day, uint64_t views, std::optional<uint64_t> prior) {
  TrendTerm t;
  t.term = term;
  t.day = day;
  t.views = views;
  t.prior_views = prior;
  const uint64_t effective_prior = (prior && *prior > 0) ? *prior : 1;
  t.ratio = static_cast<double>(views) / static_cast<double>(effective_prior);
  t.delta = static_cast<int64_t>(views) - static_cast<int64_t>(effective_prior);
  // delta >= 0 whenever ratio >= 1, so the log argument is at least 1.
  t.composite = t.ratio * std::log(static_cast<double>(t.delta) + 1.0);
  return t;
}

inline TrendDay detect_day(Date day, const DayCounts& today, const DayCounts& prior, const SpikeConfig& cfg,
                           const TermFilter& filter) {
  TrendDay out{day, {}};
  for (const auto& [term, views] : today) {
    if (views <= cfg.min_views) continue;
    std::optional<uint64_t> prev;
    if (auto it = prior.find(term); it != prior.end()) prev = it->second;
    TrendTerm t = spike_stats(term, day, views, prev);
    if (!(t.ratio >= cfg.ratio_threshold)) continue;
    if (filter.excluded(term)) continue;
    out.terms.push_back(std::move(t));
  }
  if (out.terms.size() > cfg.top_k) {
    std::partial_sort(out.terms.begin(), out.terms.begin() + static_cast<long>(cfg.top_k), out.terms.end(),
                      ranks_before);
    out.terms.resize(cfg.top_k);
  } else {
    std::sort(out.terms.begin(), out.terms.end(), ranks_before);
  }
  return out;
}

inline TrendDay detect_day(Date day, const DayCounts& today, const DayCounts& prior, const SpikeConfig& cfg) {
  return detect_day(day, today, prior, cfg, TermFilter(cfg));
}

// Runs detection for every day whose previous calendar day is also present;
// the earliest day of a contiguous series has no prior counts and is skipped.
inline std::vector<TrendDay> detect_all(const std::map<Date, DayCounts>& by_day, const SpikeConfig& cfg) {
  cfg.validate();
  TermFilter filter(cfg);
  std::vector<TrendDay> out;
  for (const auto& [day, counts] : by_day) {
    auto prev = by_day.find(day - 1);
    if (prev == by_day.end()) continue;
    out.push_back(detect_day(day, counts, prev->second, cfg, filter));
  }
  return out;
}

inline std::set<std::string> detect_evergreen(const std::vector<TrendDay>& days, const SpikeConfig& cfg) {
  if (days.empty()) throw Error("detect_evergreen: no days, appearance fraction undefined");
  std::unordered_map<std::string, size_t> appearances;
  for (const auto& d : days) {
    std::unordered_set<std::string_view> seen;
    for (const auto& t : d.terms)
      if (seen.insert(t.term).second) ++appearances[t.term];
  }
  std::set<std::string> out;
  const double n = static_cast<double>(days.size());
  for (const auto& [term, count] : appearances)
    if (static_cast<double>(count) / n > cfg.evergreen_fraction) out.insert(term);
  return out;
}

inline std::vector<TrendDay> apply_filters(const std::vector<TrendDay>& days, const std::set<std::string>& evergreen,
                                           size_t top_k = kTrendRows) {
  std::vector<TrendDay> out;
  out.reserve(days.size());
  for (const auto& d : days) {
    TrendDay f{d.day, {}};
    for (const auto& t : d.terms)
      if (!evergreen.count(t.term)) f.terms.push_back(t);
    if (f.terms.size() > top_k) f.terms.resize(top_k);
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// trends/YYYY-MM-DD.json
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json trend_day_to_json(const TrendDay& d) {
  nlohmann::ordered_json j;
  j["day"] = d.day.str();
  auto& terms = j["terms"] = nlohmann::ordered_json::array();
  for (const auto& t : d.terms) {
    nlohmann::ordered_json o;
    o["term"] = t.term;
    o["day"] = t.day.str();
    o["views"] = t.views;
    o["prior_views"] = t.prior_views ? nlohmann::ordered_json(*t.prior_views) : nlohmann::ordered_json(nullptr);
    o["ratio"] = t.ratio;
    o["delta"] = t.delta;
    o["composite"] = t.composite;
    terms.push_back(std::move(o));
  }
  return j;
}

inline std::string serialize_trend_day(const TrendDay& d) { return trend_day_to_json(d).dump(1) + "\n"; }

inline TrendDay parse_trend_day(std::string_view bytes) {
  const auto j = nlohmann::json::parse(bytes);
  TrendDay d;
  d.day = Date::parse_or_throw(j.at("day").get<std::string>());
  for (const auto& o : j.at("terms")) {
    TrendTerm t;
    t.term = o.at("term").get<std::string>();
    t.day = Date::parse_or_throw(o.at("day").get<std::string>());
    t.views = o.at("views").get<uint64_t>();
    if (!o.at("prior_views").is_null()) t.prior_views = o.at("prior_views").get<uint64_t>();
    t.ratio = o.at("ratio").get<double>();
    t.delta = o.at("delta").get<int64_t>();
    t.composite = o.at("composite").get<double>();
    d.terms.push_back(std::move(t));
  }
  return d;
}

inline void write_trend_days(const fs::path& dir, const std::vector<TrendDay>& days) {
  fs::create_directories(dir);
  for (const auto& d : days) write_file(dir / (d.day.str() + ".json"), serialize_trend_day(d));
}

inline std::map<Date, TrendDay> read_trend_days(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DependencyError("trend directory '" + dir.string() + "' does not exist");
  std::map<Date, TrendDay> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    auto d = Date::parse(entry.path().stem().string());
    if (!d) continue;
    out[*d] = parse_trend_day(read_file(entry.path()));
  }
  return out;
}

}  // namespace tv

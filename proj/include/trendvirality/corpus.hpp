// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"
#include "trendvirality/text.hpp"

namespace tv {

struct Post {
  std::string id;
  std::string subreddit;
  std::string title;
  std::string body;  // "selftext" on the wire
  int64_t created_utc = 0;
  int64_t score = 0;
  int64_t num_comments = 0;
  int64_t subscribers = 0;

  Date day() const { return Date::from_unix(created_utc); }
  int year() const { return day().year(); }
  bool operator==(const Post&) const = default;
};

struct PageviewRecord {
  std::string article;
  Date day;
  uint64_t views = 0;
  bool operator==(const PageviewRecord&) const = default;
};

struct RecordError {
  size_t line = 0;  // 1-based
  std::string message;
};

template <class T>
struct ParseResult {
  std::vector<T> items;
  size_t rejected = 0;
  std::vector<RecordError> errors;
};

namespace detail {

inline int64_t json_integer(const nlohmann::json& v, const char* key) {
  if (v.is_number_integer()) return v.get<int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (!std::isfinite(d) || d != std::floor(d)) throw ParseError(std::string(key) + " is not an integer");
    return static_cast<int64_t>(d);
  }
  if (v.is_string()) {
    if (auto p = parse_int<int64_t>(v.get<std::string>())) return *p;
  }
  throw ParseError(std::string(key) + " is not an integer");
}

inline std::string json_string(const nlohmann::json& v, const char* key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<int64_t>());
  throw ParseError(std::string(key) + " is not a string");
}

}  // namespace detail

// Validates and canonicalises one decoded post. Throws ParseError on any violation.
inline Post make_post(const nlohmann::json& obj) {
  if (!obj.is_object()) throw ParseError("record is not a JSON object");
  auto field = [&](const char* key) -> const nlohmann::json& {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) throw ParseError(std::string("missing key '") + key + "'");
    return *it;
  };
  Post p;
  p.id = detail::json_string(field("id"), "id");
  if (trim_view(p.id).empty()) throw ParseError("empty id");
  p.subreddit = std::string(trim_view(detail::json_string(field("subreddit"), "subreddit")));
  if (p.subreddit.empty()) throw ParseError("empty subreddit");
  p.title = text::canonical(detail::json_string(field("title"), "title"));
  if (p.title.empty()) throw ParseError("empty title");

  std::string body;
  if (auto it = obj.find("selftext"); it != obj.end() && !it->is_null())
    body = detail::json_string(*it, "selftext");
  p.body = text::canonical(body);
  if (p.body == "[deleted]" || p.body == "[removed]") throw ParseError("body is " + p.body);

  p.created_utc = detail::json_integer(field("created_utc"), "created_utc");
  if (p.created_utc < kRedditEpoch) throw ParseError("created_utc predates 2005-06-23");
  p.score = detail::json_integer(field("score"), "score");
  p.num_comments = detail::json_integer(field("num_comments"), "num_comments");
  if (p.num_comments < 0) throw ParseError("negative num_comments");
  if (auto it = obj.find("subscribers"); it != obj.end() && !it->is_null()) {
    p.subscribers = detail::json_integer(*it, "subscribers");
    if (p.subscribers < 0) throw ParseError("negative subscribers");
  }
  return p;
}

// Newline-delimited JSON posts. Bad records are counted and skipped.
inline ParseResult<Post> parse_posts(std::istream& in) {
  if (!in.good() && !in.eof()) throw Error("post stream is not readable");
  ParseResult<Post> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim_view(line).empty()) continue;
    try {
      out.items.push_back(make_post(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      ++out.rejected;
      out.errors.push_back({lineno, std::string("malformed JSON: ") + e.what()});
    } catch (const ParseError& e) {
      ++out.rejected;
      out.errors.push_back({lineno, e.what()});
    }
  }
  if (in.bad()) throw Error("read error in post stream at line " + std::to_string(lineno));
  return out;
}

inline std::string serialize_post(const Post& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["subreddit"] = p.subreddit;
  j["title"] = p.title;
  j["selftext"] = p.body;
  j["created_utc"] = p.created_utc;
  j["score"] = p.score;
  j["num_comments"] = p.num_comments;
  j["subscribers"] = p.subscribers;
  return j.dump();
}

inline void write_posts(std::ostream& out, const std::vector<Post>& posts) {
  for (const auto& p : posts) out << serialize_post(p) << '\n';
}

// Associative, commutative merge of (article, day) -> views so that shards can
// be aggregated independently and combined in any order.
class PageviewAggregator {
 public:
  void add(const std::string& article, Date day, uint64_t views) {
    uint64_t& slot = counts_[{article, day.days()}];
    if (slot > std::numeric_limits<uint64_t>::max() - views) throw Error("pageview count overflow for " + article);
    slot += views;
  }
  void merge(const PageviewAggregator& other) {
    for (const auto& [k, v] : other.counts_) add(k.first, Date(k.second), v);
  }
  // Sorted by (day, article).
  std::vector<PageviewRecord> records() const {
    std::vector<PageviewRecord> out;
    out.reserve(counts_.size());
    for (const auto& [k, v] : counts_) out.push_back({k.first, Date(k.second), v});
    std::sort(out.begin(), out.end(), [](const PageviewRecord& a, const PageviewRecord& b) {
      return a.day != b.day ? a.day < b.day : a.article < b.article;
    });
    return out;
  }
  size_t size() const { return counts_.size(); }

 private:
  struct KeyHash {
    size_t operator()(const std::pair<std::string, int32_t>& k) const {
      return fnv1a64(k.first) ^ (static_cast<uint64_t>(k.second) * 0x9e3779b97f4a7c15ULL);
    }
  };
  std::unordered_map<std::pair<std::string, int32_t>, uint64_t, KeyHash> counts_;
};

inline PageviewRecord parse_pageview_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto fields = split(line, '\t');
  if (fields.size() != 3) throw ParseError("expected 3 tab-separated fields, got " + std::to_string(fields.size()));
  PageviewRecord r;
  r.article = text::canonical(fields[0]);
  if (r.article.empty()) throw ParseError("empty article title");
  auto day = Date::parse(trim_view(fields[1]));
  if (!day) throw ParseError("invalid or out-of-range date '" + std::string(fields[1]) + "'");
  r.day = *day;
  const auto views_field = trim_view(fields[2]);
  if (!views_field.empty() && views_field.front() == '-') throw ParseError("negative views");
  auto views = parse_int<uint64_t>(views_field);
  if (!views) throw ParseError("views is not a non-negative integer: '" + std::string(views_field) + "'");
  r.views = *views;
  return r;
}

// article<TAB>YYYY-MM-DD<TAB>views lines, aggregated by (article, day).
inline ParseResult<PageviewRecord> parse_pageviews(std::istream& in, PageviewAggregator* agg_out = nullptr) {
  if (!in.good() && !in.eof()) throw Error("pageview stream is not readable");
  ParseResult<PageviewRecord> out;
  PageviewAggregator agg;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim_view(line).empty()) continue;
    try {
      auto r = parse_pageview_line(line);
      agg.add(r.article, r.day, r.views);
    } catch (const ParseError& e) {
      ++out.rejected;
      out.errors.push_back({lineno, e.what()});
    }
  }
  if (in.bad()) throw Error("read error in pageview stream at line " + std::to_string(lineno));
  out.items = agg.records();
  if (agg_out) agg_out->merge(agg);
  return out;
}

inline void write_pageviews(std::ostream& out, const std::vector<PageviewRecord>& records) {
  for (const auto& r : records) out << r.article << '\t' << r.day.str() << '\t' << r.views << '\n';
}

// Per-day view maps, the shape the spike detector consumes.
using DayCounts = std::unordered_map<std::string, uint64_t>;

inline std::map<Date, DayCounts> group_by_day(const std::vector<PageviewRecord>& records) {
  std::map<Date, DayCounts> out;
  for (const auto& r : records) out[r.day][r.article] += r.views;
  return out;
}

}  // namespace tv

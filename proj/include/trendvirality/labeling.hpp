// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"
#include "trendvirality/corpus.hpp"

namespace tv {

struct LabelConfig {
  double beta = 0.3;
  double percentile = 90.0;
  int64_t min_score = 100;

  void validate() const {
    if (!(beta >= 0.0)) throw Error("label.beta must be >= 0");
    if (!(percentile > 0.0 && percentile < 100.0)) throw Error("label.percentile must be in (0, 100)");
    if (min_score < 0) throw Error("label.min_score must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const LabelConfig& c) {
  j = {{"beta", c.beta}, {"percentile", c.percentile}, {"min_score", c.min_score}};
}
inline void from_json(const nlohmann::json& j, LabelConfig& c) {
  c.beta = j.value("beta", c.beta);
  c.percentile = j.value("percentile", c.percentile);
  c.min_score = j.value("min_score", c.min_score);
  c.validate();
}

struct LabeledPost {
  std::string post_id;
  std::string subreddit;
  double engagement = 0.0;
  int label = 0;
  double subreddit_threshold = 0.0;
  bool operator==(const LabeledPost&) const = default;
};

inline double engagement(int64_t score, int64_t num_comments, double beta) {
  return static_cast<double>(score) + beta * static_cast<double>(num_comments);
}

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
inline double nearest_rank(std::vector<double> values, double percentile) {
  if (values.empty()) throw Error("nearest_rank of an empty set");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  // p*n is exact for integral p, so the division lands on integers exactly when it should.
  auto rank = static_cast<size_t>(std::ceil(percentile * n / 100.0 - 1e-9));
  rank = std::clamp<size_t>(rank, 1, values.size());
  return values[rank - 1];
}

// Labels every post; output order matches input order.
inline std::vector<LabeledPost> label_corpus(const std::vector<Post>& posts, const LabelConfig& cfg) {
  cfg.validate();
  if (posts.empty()) throw Error("label_corpus: empty corpus");
  std::unordered_map<std::string, std::vector<double>> by_sub;
  std::vector<double> eng(posts.size());
  for (size_t i = 0; i < posts.size(); ++i) {
    eng[i] = engagement(posts[i].score, posts[i].num_comments, cfg.beta);
    by_sub[posts[i].subreddit].push_back(eng[i]);
  }
  std::unordered_map<std::string, double> threshold;
  for (auto& [sub, values] : by_sub) threshold[sub] = nearest_rank(std::move(values), cfg.percentile);

  std::vector<LabeledPost> out;
  out.reserve(posts.size());
  for (size_t i = 0; i < posts.size(); ++i) {
    const double thr = threshold.at(posts[i].subreddit);
    const int y = (eng[i] > thr && posts[i].score >= cfg.min_score) ? 1 : 0;
    out.push_back({posts[i].id, posts[i].subreddit, eng[i], y, thr});
  }
  return out;
}

struct SweepRow {
  double beta = 0.0;
  size_t viral_count = 0;
  double viral_pct = 0.0;
  double jaccard_vs_base = 1.0;
  double flip_pct = 0.0;
};

// Relabels the corpus for each beta and compares viral sets with the cfg.beta
// baseline. The baseline is inserted if missing; rows come back in ascending beta.
inline std::vector<SweepRow> beta_sweep(const std::vector<Post>& posts, std::vector<double> betas, const LabelConfig& cfg) {
  if (std::find(betas.begin(), betas.end(), cfg.beta) == betas.end()) betas.push_back(cfg.beta);
  std::sort(betas.begin(), betas.end());
  betas.erase(std::unique(betas.begin(), betas.end()), betas.end());

  auto labels_for = [&](double beta) {
    LabelConfig c = cfg;
    c.beta = beta;
    auto lp = label_corpus(posts, c);
    std::vector<uint8_t> y(lp.size());
    for (size_t i = 0; i < lp.size(); ++i) y[i] = static_cast<uint8_t>(lp[i].label);
    return y;
  };
  const auto base = labels_for(cfg.beta);
  std::vector<SweepRow> rows;
  for (double b : betas) {
    const auto y = (b == cfg.beta) ? base : labels_for(b);
    size_t inter = 0, uni = 0, viral = 0, flips = 0;
    for (size_t i = 0; i < y.size(); ++i) {
      viral += y[i];
      inter += (y[i] && base[i]);
      uni += (y[i] || base[i]);
      flips += (y[i] != base[i]);
    }
    SweepRow r;
    r.beta = b;
    r.viral_count = viral;
    r.viral_pct = 100.0 * static_cast<double>(viral) / static_cast<double>(y.size());
    r.jaccard_vs_base = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    r.flip_pct = 100.0 * static_cast<double>(flips) / static_cast<double>(y.size());
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV outputs
// ---------------------------------------------------------------------------

inline void write_labels_csv(std::ostream& out, const std::vector<LabeledPost>& labels) {
  out << "post_id,subreddit,engagement,threshold,label\n";
  for (const auto& l : labels)
    out << l.post_id << ',' << l.subreddit << ',' << format_double(l.engagement) << ','
        << format_double(l.subreddit_threshold) << ',' << l.label << '\n';
}

inline std::vector<LabeledPost> read_labels_csv(std::istream& in) {
  std::vector<LabeledPost> out;
  std::string line;
  if (!std::getline(in, line) || line != "post_id,subreddit,engagement,threshold,label")
    throw Error("labels.csv: missing or unexpected header");
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    auto eng = f.size() == 5 ? parse_double(f[2]) : std::nullopt;
    auto thr = f.size() == 5 ? parse_double(f[3]) : std::nullopt;
    if (!eng || !thr || (f[4] != "0" && f[4] != "1"))
      throw Error("labels.csv: malformed line " + std::to_string(lineno));
    out.push_back({std::string(f[0]), std::string(f[1]), *eng, f[4] == "1" ? 1 : 0, *thr});
  }
  return out;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  char buf[128];
  out << "beta,viral_count,viral_pct,jaccard,flip_pct\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.2f,%.4f,%.2f\n", format_double(r.beta).c_str(), r.viral_count, r.viral_pct,
                  r.jaccard_vs_base, r.flip_pct);
    out << buf;
  }
}

}  // namespace tv

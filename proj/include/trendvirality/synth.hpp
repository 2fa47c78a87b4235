// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"
#include "trendvirality/corpus.hpp"
#include "trendvirality/trends.hpp"

namespace tv::synth {

struct SynthConfig {
  uint64_t seed = 42;
  int n_subreddits = 10;
  int days = 180;        // split evenly over `year_blocks` consecutive-day blocks
  int year_blocks = 3;   // block k starts on March 1 of first_year + k
  int first_year = 2021;
  int posts_per_day = 170;
  int vocab_size = 1000;      // filler words; they never trend
  int entity_count = 120;     // named entities with pageview series; the only terms that spike
  int trend_terms_per_day = 1;
  double alignment_boost = 2.5;
  double subreddit_scale_spread = 2.0;  // decades of engagement scale across subreddits
  double entity_mention_rate = 1.0;     // chance a title names an entity
  double trend_mention_rate = 0.15;     // chance that entity is drawn from the recent trends
  double body_rate = 0.6;
  double token_appeal_sd = 0.35;
  std::vector<double> year_effects = {-0.4, 0.0, 0.5};

  void validate() const {
    if (n_subreddits < 1 || days < 1 || year_blocks < 1 || posts_per_day < 1 || vocab_size < 1 ||
        entity_count < 1 || trend_terms_per_day < 1)
      throw Error("synth config: counts must be >= 1");
    if (days < year_blocks) throw Error("synth config: fewer days than year blocks");
    if (!std::isfinite(alignment_boost) || alignment_boost < 0) throw Error("synth config: alignment_boost must be finite and >= 0");
    if (!std::isfinite(subreddit_scale_spread) || subreddit_scale_spread < 0)
      throw Error("synth config: subreddit_scale_spread must be finite and >= 0");
    for (double r : {entity_mention_rate, trend_mention_rate, body_rate})
      if (!(r >= 0.0 && r <= 1.0)) throw Error("synth config: rates must lie in [0, 1]");
    // A term may not spike on two consecutive days, so each day needs twice the daily quota.
    if (entity_count < 2 * trend_terms_per_day)
      throw Error("synth config: entity_count " + std::to_string(entity_count) + " too small for " +
                  std::to_string(trend_terms_per_day) + " trend terms per day");
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"seed", c.seed},
       {"n_subreddits", c.n_subreddits},
       {"days", c.days},
       {"year_blocks", c.year_blocks},
       {"first_year", c.first_year},
       {"posts_per_day", c.posts_per_day},
       {"vocab_size", c.vocab_size},
       {"entity_count", c.entity_count},
       {"trend_terms_per_day", c.trend_terms_per_day},
       {"alignment_boost", c.alignment_boost},
       {"subreddit_scale_spread", c.subreddit_scale_spread},
       {"entity_mention_rate", c.entity_mention_rate},
       {"trend_mention_rate", c.trend_mention_rate},
       {"body_rate", c.body_rate},
       {"token_appeal_sd", c.token_appeal_sd},
       {"year_effects", c.year_effects}};
}
inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.n_subreddits = j.value("n_subreddits", c.n_subreddits);
  c.days = j.value("days", c.days);
  c.year_blocks = j.value("year_blocks", c.year_blocks);
  c.first_year = j.value("first_year", c.first_year);
  c.posts_per_day = j.value("posts_per_day", c.posts_per_day);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.entity_count = j.value("entity_count", c.entity_count);
  c.trend_terms_per_day = j.value("trend_terms_per_day", c.trend_terms_per_day);
  c.alignment_boost = j.value("alignment_boost", c.alignment_boost);
  c.subreddit_scale_spread = j.value("subreddit_scale_spread", c.subreddit_scale_spread);
  c.entity_mention_rate = j.value("entity_mention_rate", c.entity_mention_rate);
  c.trend_mention_rate = j.value("trend_mention_rate", c.trend_mention_rate);
  c.body_rate = j.value("body_rate", c.body_rate);
  c.token_appeal_sd = j.value("token_appeal_sd", c.token_appeal_sd);
  c.year_effects = j.value("year_effects", c.year_effects);
  c.validate();
}

inline constexpr uint64_t kBaselineViews = 3500;
inline constexpr uint64_t kSpikeFloor = 7001;

inline const std::vector<std::string>& subreddit_names() {
  static const std::vector<std::string> names = {"worldnews", "politics", "technology", "stocks",     "wallstreetbets",
                                                 "science",   "futurology", "movies",   "television", "gaming"};
  return names;
}

inline std::string subreddit_name(int k) {
  const auto& n = subreddit_names();
  return k < static_cast<int>(n.size()) ? n[k] : "community" + std::to_string(k + 1);
}

// Capitalised consonant-vowel words, unique within the vocabulary.
inline std::vector<std::string> make_vocab(int n, Rng& rng) {
  static constexpr std::string_view cons = "bcdfghjklmnprstvz";
  static constexpr std::string_view vow = "aeiou";
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  while (static_cast<int>(out.size()) < n) {
    const int syl = 2 + static_cast<int>(rng.below(3));
    std::string w;
    for (int s = 0; s < syl; ++s) {
      w += cons[rng.below(cons.size())];
      w += vow[rng.below(vow.size())];
    }
    if (rng.bernoulli(0.5)) w += cons[rng.below(cons.size())];
    w[0] = static_cast<char>(w[0] - 'a' + 'A');
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

struct SynthCorpus {
  std::vector<Post> posts;
  std::vector<PageviewRecord> pageviews;        // sorted by (day, article)
  std::vector<uint8_t> aligned;                 // ground truth, aligned with posts
  std::map<Date, std::vector<std::string>> planted;  // spiking entities per day
  std::vector<Date> post_days;
};

// Days on which posts are generated, block by block.
inline std::vector<Date> post_days(const SynthConfig& cfg) {
  std::vector<Date> out;
  const int per_block = cfg.days / cfg.year_blocks;
  for (int b = 0; b < cfg.year_blocks; ++b) {
    const int n = per_block + (b < cfg.days % cfg.year_blocks ? 1 : 0);
    const Date start = Date::from_ymd(cfg.first_year + b, 3, 1);
    for (int i = 0; i < n; ++i) out.push_back(start + i);
  }
  return out;
}

inline SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthCorpus out;
  auto vocab = make_vocab(cfg.vocab_size + cfg.entity_count, rng);
  const std::vector<std::string> entities(vocab.end() - cfg.entity_count, vocab.end());
  vocab.resize(static_cast<size_t>(cfg.vocab_size));
  std::map<std::string, double> appeal;
  for (const auto& w : vocab) appeal[w] = cfg.token_appeal_sd * rng.normal();
  for (const auto& w : entities) appeal[w] = cfg.token_appeal_sd * rng.normal();
  out.post_days = post_days(cfg);
  const std::set<Date> day_set(out.post_days.begin(), out.post_days.end());

  // --- planted spikes on every post day; a term never spikes two days running ---
  std::set<std::string> prev_spiking;
  for (Date d : out.post_days) {
    std::vector<std::string> today;
    std::unordered_set<size_t> chosen;
    while (static_cast<int>(today.size()) < cfg.trend_terms_per_day) {
      const size_t k = rng.below(entities.size());
      if (prev_spiking.count(entities[k]) || !chosen.insert(k).second) continue;
      today.push_back(entities[k]);
    }
    std::sort(today.begin(), today.end());
    prev_spiking = day_set.count(d + 1) ? std::set<std::string>(today.begin(), today.end()) : std::set<std::string>{};
    out.planted[d] = std::move(today);
  }

  // --- pageviews: each block also covers its eve, so every post day has a prior day ---
  std::set<Date> view_days;
  for (Date d : out.post_days) {
    view_days.insert(d);
    view_days.insert(d - 1);
  }
  std::vector<PageviewRecord> pv;
  int day_index = 0;
  for (Date d : view_days) {
    std::set<std::string> spiking;
    if (auto it = out.planted.find(d); it != out.planted.end()) spiking.insert(it->second.begin(), it->second.end());
    for (const auto& term : entities)
      pv.push_back({term, d, spiking.count(term) ? kSpikeFloor + rng.below(40000) : kBaselineViews});
    // Noise the filters must remove.
    pv.push_back({"Main_Page", d, 4000000 + rng.below(4000000) * (day_index % 7 == 0 ? 3 : 1)});
    pv.push_back({"Google_Classroom", d, day_index % 2 ? 90000u : 20000u});
    pv.push_back({"Special:Search", d, day_index % 2 ? 150000u : 40000u});
    pv.push_back({"Talk:Zeitgeist", d, day_index % 3 ? 8000u : 30000u});
    pv.push_back({"Obscure_stub", d, day_index % 2 ? 2900u : 900u});
    pv.push_back({"Steady_reference", d, 60000});
    // Spikes on four days in five, the fifth day absent: evergreen.
    if (const int phase = day_index % 5; phase != 0)
      pv.push_back({"Deaths_this_year", d, uint64_t{3100} << (phase - 1)});
    ++day_index;
  }
  std::sort(pv.begin(), pv.end(), [](const PageviewRecord& a, const PageviewRecord& b) {
    return a.day != b.day ? a.day < b.day : a.article < b.article;
  });
  out.pageviews = std::move(pv);

  // --- posts ---------------------------------------------------------------------
  std::vector<double> scale(cfg.n_subreddits), comment_ratio(cfg.n_subreddits);
  std::vector<int64_t> subscribers(cfg.n_subreddits);
  for (int s = 0; s < cfg.n_subreddits; ++s) {
    const double u = cfg.n_subreddits > 1 ? static_cast<double>(s) / (cfg.n_subreddits - 1) : 0.5;
    scale[s] = 80.0 * std::pow(10.0, cfg.subreddit_scale_spread * u);
    comment_ratio[s] = 0.05 + 0.5 * rng.uniform();
    subscribers[s] = static_cast<int64_t>(std::pow(10.0, 4.0 + 3.5 * rng.uniform()));
  }
  uint64_t next_id = 1;
  for (Date d : out.post_days) {
    std::set<std::string> window;
    for (int k = 1; k <= kWindowDays; ++k)
      if (auto it = out.planted.find(d - k); it != out.planted.end())
        window.insert(it->second.begin(), it->second.end());
    const std::vector<std::string> window_list(window.begin(), window.end());
    const int year_idx = d.year() - cfg.first_year;
    const double year_effect =
        year_idx < static_cast<int>(cfg.year_effects.size()) ? cfg.year_effects[static_cast<size_t>(year_idx)] : 0.0;

    for (int i = 0; i < cfg.posts_per_day; ++i) {
      Post p;
      char idbuf[32];
      std::snprintf(idbuf, sizeof idbuf, "s%07llu", static_cast<unsigned long long>(next_id++));
      p.id = idbuf;
      const int s = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.n_subreddits)));
      p.subreddit = subreddit_name(s);
      p.subscribers = subscribers[s];
      const int hour = static_cast<int>(rng.below(24));
      p.created_utc = d.unix_seconds() + hour * 3600 + static_cast<int64_t>(rng.below(3600));

      const int n_tok = 3 + static_cast<int>(rng.below(5));
      std::vector<std::string> toks;
      for (int t = 0; t < n_tok; ++t) toks.push_back(vocab[rng.below(vocab.size())]);
      // At most one entity per title, so its presence alone says nothing about timing.
      if (rng.bernoulli(cfg.entity_mention_rate)) {
        const bool trending = !window_list.empty() && rng.bernoulli(cfg.trend_mention_rate);
        toks[rng.below(toks.size())] =
            trending ? window_list[rng.below(window_list.size())] : entities[rng.below(entities.size())];
      }
      bool aligned = false;
      double tok_appeal = 0.0;
      for (size_t t = 0; t < toks.size(); ++t) {
        p.title += (t ? " " : "") + toks[t];
        aligned = aligned || window.count(toks[t]);
        tok_appeal += appeal.at(toks[t]);
      }
      tok_appeal /= std::sqrt(static_cast<double>(toks.size()));

      const bool has_body = rng.bernoulli(cfg.body_rate);
      if (has_body) {
        const int n_body = 10 + static_cast<int>(rng.below(70));
        for (int t = 0; t < n_body; ++t) {
          std::string w = vocab[rng.below(vocab.size())];
          w[0] = static_cast<char>(w[0] - 'A' + 'a');
          p.body += (t ? " " : "") + w;
        }
      }

      // Latent log-engagement: logistic noise, so additive terms act as log-odds shifts.
      const double hour_effect = 0.35 * std::cos(2.0 * M_PI * (hour - 15) / 24.0);
      double u = rng.uniform();
      u = std::clamp(u, 1e-12, 1.0 - 1e-12);
      const double latent = std::log(u / (1.0 - u)) + year_effect + hour_effect + (has_body ? 0.2 : 0.0) + tok_appeal +
                            (aligned ? cfg.alignment_boost : 0.0);
      p.score = static_cast<int64_t>(std::floor(scale[s] * std::exp(0.8 * latent)));
      p.num_comments =
          static_cast<int64_t>(std::floor(static_cast<double>(p.score) * comment_ratio[s] * std::exp(0.3 * rng.normal())));
      out.posts.push_back(std::move(p));
      out.aligned.push_back(aligned ? 1 : 0);
    }
  }
  return out;
}

inline void write_alignment_csv(std::ostream& out, const SynthCorpus& c) {
  out << "post_id,aligned\n";
  for (size_t i = 0; i < c.posts.size(); ++i) out << c.posts[i].id << ',' << int{c.aligned[i]} << '\n';
}

// Writes posts.ndjson, pageviews.tsv and alignment.csv into dir.
inline void write_corpus(const fs::path& dir, const SynthCorpus& c) {
  fs::create_directories(dir);
  std::ostringstream posts, views, align;
  write_posts(posts, c.posts);
  write_pageviews(views, c.pageviews);
  write_alignment_csv(align, c);
  write_file(dir / "posts.ndjson", posts.str());
  write_file(dir / "pageviews.tsv", views.str());
  write_file(dir / "alignment.csv", align.str());
}

}  // namespace tv::synth
